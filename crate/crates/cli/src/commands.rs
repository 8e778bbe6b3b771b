use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mmff_core::analysis::{
    all_order_subsets, compute_metrics, parse_orders, subset_label, trace_contributions, trace_csv,
    MetricsReport, METRICS_HEADER,
};
use mmff_core::data::{
    load_checkpoint, load_dataset, save_checkpoint, stratified_folds, synth_generate, write_manifest,
    write_sequence, ManifestRow, Split,
};
use mmff_core::pipeline::{compress_dataset, fit_preprocessors, mean_contributions, TrainReport};
use mmff_core::{Dataset, MmffError, Modality, Model, ModelDims, Result, RunConfig, SampleAnalysis, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "mmff", version, about = "Multimodal multi-order factor fusion pipeline")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Normalize, filter and compress a dataset.
    Compress(CompressArgs),
    /// Train the encoders, the latent proxy and the fusion backbone.
    Train(TrainArgs),
    /// Predict a dataset and report metrics.
    Eval(EvalArgs),
    /// Re-evaluate with subsets of the fusion orders.
    Ablate(AblateArgs),
    /// Report dataset-mean modality and order contributions.
    Contrib(EvalArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    /// Held-out samples written to manifest_test.csv.
    #[arg(long, default_value_t = 0)]
    test_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Only this modality carries the label signal.
    #[arg(long)]
    dominant_modality: Option<String>,
    #[arg(long)]
    noise_scale: Option<f64>,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// `key = value` configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    target_len_audio: Option<usize>,
    #[arg(long)]
    target_len_video: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.target_len_audio {
            cfg.target_len_audio = v;
        }
        if let Some(v) = self.target_len_video {
            cfg.target_len_video = v;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct CompressArgs {
    /// Directory holding manifest.csv and optional manifest_val.csv / manifest_test.csv.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training manifest, or a directory containing manifest.csv.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Resume at this stage (0, 1 or 2) from --checkpoint.
    #[arg(long)]
    stage: Option<u8>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Stratified cross-validation with this many folds.
    #[arg(long)]
    kfold: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Manifest, or a directory (manifest_test.csv is preferred over manifest.csv).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// Retained orders such as `1,3`; every nonempty subset when omitted.
    #[arg(long)]
    orders: Option<String>,
}

pub fn dispatch(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Compress(a) => compress(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Contrib(a) => contrib(a),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: std::io::Error) -> MmffError {
    MmffError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn manifest_in(data: &Path, prefer_test: bool) -> PathBuf {
    if !data.is_dir() {
        return data.to_path_buf();
    }
    let test = data.join(Split::Test.file_name());
    if prefer_test && test.exists() {
        test
    } else {
        data.join(Split::Train.file_name())
    }
}

fn synth(a: SynthArgs) -> Result<String> {
    let mut cfg = SynthConfig {
        samples: a.samples,
        test_samples: a.test_samples,
        seed: a.seed,
        dominant: a.dominant_modality.as_deref().map(str::parse::<Modality>).transpose()?,
        ..SynthConfig::default()
    };
    if let Some(n) = a.noise_scale {
        cfg.noise_scale = n;
    }
    cfg.validate()?;
    let out = synth_generate(&cfg, &a.out)?;
    Ok(format!(
        "synth: {} train + {} test samples, manifest {}",
        cfg.samples,
        cfg.test_samples,
        out.train.display()
    ))
}

fn compress(a: CompressArgs) -> Result<String> {
    let cfg = a.config.resolve()?;
    cfg.validate()?;
    let train = load_dataset(&a.data.join(Split::Train.file_name()))?;
    let mut others = Vec::new();
    for split in [Split::Val, Split::Test] {
        let p = a.data.join(split.file_name());
        if p.exists() {
            others.push(load_dataset(&p)?);
        }
    }
    let pre = fit_preprocessors(&train, cfg.beta)?;
    let mut written = Vec::new();
    for ds in std::iter::once(&train).chain(&others) {
        let out = compress_dataset(ds, &pre, cfg.target_len_audio, cfg.target_len_video)?;
        write_dataset(&out, &a.out)?;
        written.push(format!("{} {}", out.len(), ds.split.name()));
    }
    let kept: Vec<String> = Modality::ALL
        .iter()
        .map(|m| format!("{m} {}", pre[m.index()].mask.kept()))
        .collect();
    Ok(format!(
        "compress: {} samples to {}, kept dims {}",
        written.join(" + "),
        a.out.display(),
        kept.join(", ")
    ))
}

fn write_dataset(ds: &Dataset, out: &Path) -> Result<()> {
    let mut rows = Vec::with_capacity(ds.len());
    for s in &ds.samples {
        let paths = Modality::ALL.map(|m| PathBuf::from(format!("{m}/{}.csv", s.id)));
        for m in Modality::ALL {
            write_sequence(&out.join(&paths[m.index()]), &s.sequences[m.index()])?;
        }
        rows.push(ManifestRow {
            id: s.id.clone(),
            label: s.label,
            paths,
        });
    }
    write_manifest(&out.join(ds.split.file_name()), &rows)
}

fn metrics_of(analyses: &[SampleAnalysis]) -> Result<MetricsReport> {
    let y: Vec<f64> = analyses.iter().map(|a| a.label).collect();
    let p: Vec<f64> = analyses.iter().map(|a| a.prediction).collect();
    compute_metrics(&y, &p)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.4}"))
}

fn loss_csv(report: &TrainReport) -> String {
    let mut s = String::from("stage,epoch,loss\n");
    let fusion = report.fusion.as_ref().map(|f| f.losses.as_slice()).unwrap_or(&[]);
    for (stage, losses) in [&report.encoder_losses[..], &report.proxy_losses[..], fusion].into_iter().enumerate() {
        for (e, l) in losses.iter().enumerate() {
            let _ = writeln!(s, "{stage},{},{l}", e + 1);
        }
    }
    s
}

fn train(a: TrainArgs) -> Result<String> {
    let mut cfg = a.config.resolve()?;
    if let Some(k) = a.kfold {
        cfg.kfold = Some(k);
    }
    cfg.validate()?;
    if cfg.kfold.is_some() && a.stage.is_some() {
        return Err(MmffError::Usage("--kfold cannot be combined with --stage".into()));
    }
    let from = a.stage.unwrap_or(0);
    if from > 2 {
        return Err(MmffError::Usage(format!("--stage must be 0, 1 or 2, got {from}")));
    }
    let data = load_dataset(&manifest_in(&a.data, false))?;
    if let Some(k) = cfg.kfold {
        return cross_validate(&data, &cfg, k, &a.out);
    }
    let mut model = match (&a.checkpoint, a.stage) {
        (Some(path), Some(_)) => Model::from_checkpoint(&load_checkpoint(path)?)?,
        (None, Some(s)) if s > 0 => {
            return Err(MmffError::Usage("--stage 1 or 2 needs --checkpoint".into()));
        }
        (Some(_), None) => return Err(MmffError::Usage("--checkpoint is only used with --stage".into())),
        _ => Model::new(ModelDims::of(&data, &cfg)?, cfg.seed)?,
    };
    if from > model.completed {
        return Err(MmffError::State(format!(
            "checkpoint has {} completed stage(s); cannot resume at stage {from}",
            model.completed
        )));
    }
    write(&a.out.join("config.txt"), &cfg.to_config_string())?;
    let mut report = TrainReport::default();
    for stage in from..3 {
        model.train_stage(stage, &data, &cfg, &mut report)?;
        let name = if stage == 2 { "model.ckpt".to_string() } else { format!("stage{stage}.ckpt") };
        save_checkpoint(&model.to_checkpoint(), &a.out.join(name))?;
    }
    write(&a.out.join("loss.csv"), &loss_csv(&report))?;
    if let Some(f) = &report.fusion {
        write(&a.out.join("trace.csv"), &trace_csv(&trace_contributions(&f.weights, cfg.log_interval)))?;
    }
    let fit = metrics_of(&model.analyze(&data)?)?;
    write(&a.out.join("train_metrics.csv"), &fit.to_csv())?;
    let last = report.fusion.as_ref().and_then(|f| f.losses.last()).copied().unwrap_or(f64::NAN);
    Ok(format!(
        "train: {} samples, stages {from}-2, final loss {last:.4}, train ccc {}, checkpoint {}",
        data.len(),
        fmt_opt(fit.ccc),
        a.out.join("model.ckpt").display()
    ))
}

fn cross_validate(data: &Dataset, cfg: &RunConfig, k: usize, out: &Path) -> Result<String> {
    let folds = stratified_folds(&data.labels(), k, cfg.seed)?;
    let mut fold_rows = String::from("fold,");
    fold_rows.push_str(METRICS_HEADER);
    fold_rows.push('\n');
    let mut predictions = String::from("sample_id,fold,label,prediction\n");
    let mut pooled: Vec<(usize, SampleAnalysis)> = Vec::new();
    write(&out.join("config.txt"), &cfg.to_config_string())?;
    for fold in 0..k {
        let subset = |held: bool| Dataset {
            split: data.split,
            samples: data
                .samples
                .iter()
                .zip(&folds)
                .filter(|(_, &f)| (f == fold) == held)
                .map(|(s, _)| s.clone())
                .collect(),
        };
        let (train, test) = (subset(false), subset(true));
        let mut model = Model::new(ModelDims::of(&train, cfg)?, cfg.seed)?;
        model.train(&train, cfg, 0)?;
        save_checkpoint(&model.to_checkpoint(), &out.join(format!("fold{fold}.ckpt")))?;
        let analyses = model.analyze(&test)?;
        let m = metrics_of(&analyses)?;
        let _ = writeln!(fold_rows, "{fold},{}", m.csv_row());
        pooled.extend(analyses.into_iter().map(|a| (fold, a)));
    }
    let index = |id: &str| data.samples.iter().position(|s| s.id == id).unwrap();
    pooled.sort_by_key(|(_, a)| index(&a.id));
    for (fold, a) in &pooled {
        let _ = writeln!(predictions, "{},{fold},{},{}", a.id, a.label, a.prediction);
    }
    let all: Vec<SampleAnalysis> = pooled.into_iter().map(|(_, a)| a).collect();
    let m = metrics_of(&all)?;
    write(&out.join("cv_folds.csv"), &fold_rows)?;
    write(&out.join("cv_predictions.csv"), &predictions)?;
    write(&out.join("metrics.csv"), &m.to_csv())?;
    Ok(format!(
        "train: {k}-fold cross-validation on {} samples, pooled ccc {}, rmse {:.4}",
        data.len(),
        fmt_opt(m.ccc),
        m.rmse
    ))
}

fn load_for_eval(a: &EvalArgs) -> Result<(Model, Dataset, Vec<SampleAnalysis>)> {
    let model = Model::from_checkpoint(&load_checkpoint(&a.checkpoint)?)?;
    let data = load_dataset(&manifest_in(&a.data, true))?;
    let analyses = model.analyze(&data)?;
    Ok((model, data, analyses))
}

fn eval(a: EvalArgs) -> Result<String> {
    let (_, data, analyses) = load_for_eval(&a)?;
    let m = metrics_of(&analyses)?;
    let mut pred = String::from("sample_id,label,prediction\n");
    for s in &analyses {
        let _ = writeln!(pred, "{},{},{}", s.id, s.label, s.prediction);
    }
    write(&a.out.join("metrics.csv"), &m.to_csv())?;
    write(&a.out.join("predictions.csv"), &pred)?;
    Ok(format!(
        "eval: {} {} samples, ccc {}, rmse {:.4}, mae {:.4}, pearson {}",
        data.len(),
        data.split.name(),
        fmt_opt(m.ccc),
        m.rmse,
        m.mae,
        fmt_opt(m.pearson)
    ))
}

fn ablate(a: AblateArgs) -> Result<String> {
    let subsets = match &a.orders {
        Some(text) => vec![parse_orders(text)?],
        None => all_order_subsets(),
    };
    let (model, _, analyses) = load_for_eval(&a.eval)?;
    let y: Vec<f64> = analyses.iter().map(|s| s.label).collect();
    let mut csv = format!("orders,{METRICS_HEADER}\n");
    let mut summary = Vec::new();
    for s in &subsets {
        let m = compute_metrics(&y, &model.ablated_predictions(&analyses, s)?)?;
        let _ = writeln!(csv, "{},{}", subset_label(s), m.csv_row());
        summary.push(format!("{} ccc {}", subset_label(s), fmt_opt(m.ccc)));
    }
    write(&a.eval.out.join("ablation.csv"), &csv)?;
    Ok(format!("ablate: {}", summary.join(", ")))
}

fn contrib(a: EvalArgs) -> Result<String> {
    let (_, _, analyses) = load_for_eval(&a)?;
    let c = mean_contributions(&analyses).ok_or_else(|| MmffError::Data("no samples".into()))?;
    let row = |v: [f64; 3]| format!("{},{},{}", v[0], v[1], v[2]);
    let mut csv = String::from("row,w1,w2,w3\n");
    let _ = writeln!(csv, "orders,{}", row(c.order));
    for (k, r) in c.per_order.iter().enumerate() {
        let _ = writeln!(csv, "order{},{}", k + 1, row(*r));
    }
    let _ = writeln!(csv, "aggregate,{}", row(c.aggregate));
    write(&a.out.join("contributions.csv"), &csv)?;
    Ok(format!(
        "contrib: {} samples, text {:.3}, audio {:.3}, video {:.3}; orders {:.3} / {:.3} / {:.3}",
        analyses.len(),
        c.aggregate[0],
        c.aggregate[1],
        c.aggregate[2],
        c.order[0],
        c.order[1],
        c.order[2]
    ))
}
