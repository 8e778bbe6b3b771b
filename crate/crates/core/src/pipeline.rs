//! End-to-end model: dataset preprocessing, staged training, prediction,
//! ablation and checkpoint round trips.
//!
//! Stage 0 pretrains each modality encoder with a temporary affine head that
//! regresses the label. Stage 1 trains the latent proxy on the frozen encoder
//! outputs. Stage 2 trains the fusion backbone with encoders and proxy frozen.

use rayon::prelude::*;

use crate::analysis::{ablate_orders, ablated_fuse, aggregate_contributions, ContributionReport};
use crate::config::RunConfig;
use crate::data::{Checkpoint, Dataset, Sample};
use crate::encoder::{ModalityEncoders, ModalityFeatures};
use crate::error::{MmffError, Result};
use crate::fusion::{BackboneTrace, FactorSet, FusionConfig, FusionParams, FusionSample, OrderWeights};
use crate::preprocess::{Modality, Preprocessor};
use crate::proxy::ProxyParams;
use crate::tensor::nn::Linear;
use crate::tensor::{AdamW, Graph, Mode, ParamId, ParamStore, RngStream};
use crate::training::{run_epochs, Event, LoopConfig};

pub const STAGE_COUNT: u8 = 3;

/// Fit one preprocessor per modality on the training split.
pub fn fit_preprocessors(train: &Dataset, beta: f64) -> Result<[Preprocessor; 3]> {
    let fit = |m: Modality| {
        let seqs: Vec<_> = train.samples.iter().map(|s| s.sequences[m.index()].clone()).collect();
        Preprocessor::fit(&seqs, beta).map_err(|e| match e {
            MmffError::Config(msg) => MmffError::Config(format!("{m}: {msg}")),
            other => other,
        })
    };
    Ok([fit(Modality::Text)?, fit(Modality::Audio)?, fit(Modality::Video)?])
}

/// Normalize and filter every modality; compress audio and video to their
/// target lengths. Text sequences keep their length.
pub fn compress_dataset(ds: &Dataset, pre: &[Preprocessor; 3], target_len_audio: usize, target_len_video: usize) -> Result<Dataset> {
    let samples = ds
        .samples
        .par_iter()
        .map(|s| {
            Ok(Sample {
                id: s.id.clone(),
                label: s.label,
                sequences: [
                    pre[0].transform(&s.sequences[0])?,
                    pre[1].apply(&s.sequences[1], target_len_audio)?,
                    pre[2].apply(&s.sequences[2], target_len_video)?,
                ],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        split: ds.split,
        samples,
    })
}

/// Architecture sizes of a [`Model`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelDims {
    /// Frame dimension per modality after filtering.
    pub input: [usize; 3],
    pub d: usize,
    pub r: usize,
    pub h: usize,
    pub hf: usize,
    pub f: usize,
    pub dropout: f64,
}

impl ModelDims {
    pub fn new(input: [usize; 3], cfg: &RunConfig) -> Self {
        ModelDims {
            input,
            d: cfg.d,
            r: cfg.r,
            h: cfg.h,
            hf: cfg.hf,
            f: cfg.f,
            dropout: cfg.dropout,
        }
    }

    pub fn of(ds: &Dataset, cfg: &RunConfig) -> Result<Self> {
        let first = ds
            .samples
            .first()
            .ok_or_else(|| MmffError::Data("dataset is empty".into()))?;
        let input = first.sequences.each_ref().map(|s| s.dims());
        for s in &ds.samples {
            for m in Modality::ALL {
                if s.sequences[m.index()].dims() != input[m.index()] {
                    return Err(MmffError::Data(format!(
                        "sample `{}`: {m} frames have {} dims, expected {}",
                        s.id,
                        s.sequences[m.index()].dims(),
                        input[m.index()]
                    )));
                }
            }
        }
        Ok(ModelDims::new(input, cfg))
    }
}

/// Per-stage training traces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub encoder_losses: Vec<f64>,
    pub proxy_losses: Vec<f64>,
    pub fusion: Option<BackboneTrace>,
}

/// Everything the analysis needs about one evaluated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleAnalysis {
    pub id: String,
    pub label: f64,
    /// Prediction on the label scale.
    pub prediction: f64,
    pub weights: OrderWeights,
    pub factors: FactorSet,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub dims: ModelDims,
    pub store: ParamStore,
    pub encoders: ModalityEncoders,
    /// Temporary stage-0 regression heads, one per modality.
    pub pretrain: [Linear; 3],
    pub proxy: ProxyParams,
    pub fusion: FusionParams,
    /// Mean and standard deviation used to standardize labels.
    pub label_scale: (f64, f64),
    /// Number of completed training stages.
    pub completed: u8,
}

fn round32(v: f64) -> f64 {
    v as f32 as f64
}

impl Model {
    pub fn new(dims: ModelDims, seed: u64) -> Result<Self> {
        let mut rng = RngStream::new(seed).derive(1);
        let mut store = ParamStore::new();
        let encoders = ModalityEncoders::new(&mut store, "enc", dims.input, dims.h, dims.d, dims.dropout, &mut rng)?;
        let pretrain = Modality::ALL
            .map(|m| Linear::new(&mut store, &format!("pretrain.{m}"), dims.d, 1, true, &mut rng))
            .into_iter()
            .collect::<Result<Vec<_>>>()?
            .try_into()
            .unwrap();
        let proxy = ProxyParams::new(&mut store, "proxy", dims.d, dims.r, &mut rng)?;
        let fusion = FusionParams::new(
            &mut store,
            "fusion",
            FusionConfig::new(dims.d, dims.r, dims.hf, dims.f, dims.dropout),
            &mut rng,
        )?;
        Ok(Model {
            dims,
            store,
            encoders,
            pretrain,
            proxy,
            fusion,
            label_scale: (0.0, 1.0),
            completed: 0,
        })
    }

    /// Parameters of the encoders and their stage-0 heads.
    pub fn encoder_params(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = Modality::ALL.iter().flat_map(|&m| self.encoders.get(m).params()).collect();
        ids.extend(self.pretrain.iter().flat_map(Linear::params));
        ids
    }

    fn standardize(&self, y: f64) -> f64 {
        (y - self.label_scale.0) / self.label_scale.1
    }

    fn fit_label_scale(&mut self, train: &Dataset) {
        let y = train.labels();
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        // rounded so a reloaded checkpoint reproduces the scale exactly
        self.label_scale = (round32(mean), round32(std));
    }

    fn check_dataset(&self, ds: &Dataset) -> Result<()> {
        let dims = ModelDims::of(ds, &RunConfig::default())?;
        if dims.input != self.dims.input {
            return Err(MmffError::Data(format!(
                "dataset frame dims {:?} do not match the model's {:?}",
                dims.input, self.dims.input
            )));
        }
        Ok(())
    }

    /// Run stages `from..3` in order.
    pub fn train(&mut self, train: &Dataset, cfg: &RunConfig, from: u8) -> Result<TrainReport> {
        let mut report = TrainReport::default();
        for stage in from..STAGE_COUNT {
            self.train_stage(stage, train, cfg, &mut report)?;
        }
        Ok(report)
    }

    /// Run one training stage; earlier stages must be complete.
    pub fn train_stage(&mut self, stage: u8, train: &Dataset, cfg: &RunConfig, report: &mut TrainReport) -> Result<()> {
        cfg.validate()?;
        self.check_dataset(train)?;
        if stage >= STAGE_COUNT {
            return Err(MmffError::Usage(format!("stage must be 0, 1 or 2, got {stage}")));
        }
        if stage > self.completed {
            return Err(MmffError::State(format!(
                "cannot start at stage {stage}: only {} stage(s) completed",
                self.completed
            )));
        }
        let rng = &mut RngStream::new(cfg.seed).derive(100 + stage as u64);
        let loop_cfg = LoopConfig {
            epochs: cfg.epochs[stage as usize],
            batch_size: cfg.batch_size,
        };
        match stage {
            0 => {
                self.fit_label_scale(train);
                report.encoder_losses = self.train_encoders(train, cfg, loop_cfg, rng)?;
            }
            1 => {
                let features = self.features(train)?;
                report.proxy_losses =
                    self.proxy
                        .train_latent_stage(&mut self.store, &features, cfg.optimizer(), loop_cfg, rng)?;
            }
            _ => {
                let data = self
                    .features(train)?
                    .into_iter()
                    .zip(&train.samples)
                    .map(|(features, s)| {
                        let z = self.proxy.proxy_encode(&self.store, &features)?.z;
                        Ok(FusionSample {
                            features,
                            z,
                            target: self.standardize(s.label),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                report.fusion = Some(self.fusion.train_backbone(&mut self.store, &data, cfg.optimizer(), loop_cfg, rng)?);
            }
        }
        self.completed = stage + 1;
        Ok(())
    }

    /// Stage 0: each encoder regresses the standardized label through its own
    /// affine head. Encoders and heads are frozen afterwards.
    fn train_encoders(&mut self, train: &Dataset, cfg: &RunConfig, loop_cfg: LoopConfig, rng: &mut RngStream) -> Result<Vec<f64>> {
        let own = self.encoder_params();
        for id in self.store.ids().collect::<Vec<_>>() {
            self.store.set_frozen(id, true);
        }
        for &id in &own {
            self.store.set_frozen(id, false);
        }
        let targets: Vec<f64> = train.samples.iter().map(|s| self.standardize(s.label)).collect();
        let mut opt = AdamW::new(cfg.optimizer())?;
        let encoders = &self.encoders;
        let heads = &self.pretrain;
        let losses = run_epochs(
            &mut self.store,
            &mut opt,
            train.len(),
            loop_cfg,
            rng,
            "encoder stage",
            |store, i, rng| {
                let mut g = Graph::new();
                let mut total = None;
                for m in Modality::ALL {
                    let x = encoders.get(m).encode(&mut g, store, &train.samples[i].sequences[m.index()], Mode::Train, rng)?;
                    let y = heads[m.index()].forward(&mut g, store, x)?;
                    let l = g.mse(y, &[targets[i]])?;
                    total = Some(match total {
                        None => l,
                        Some(t) => g.add(t, l)?,
                    });
                }
                Ok((g, total.unwrap(), ()))
            },
            |_: Event<()>| Ok(()),
        )?;
        for &id in &own {
            self.store.set_frozen(id, true);
        }
        Ok(losses)
    }

    /// Eval-mode encoder outputs for every sample, in dataset order.
    pub fn features(&self, ds: &Dataset) -> Result<Vec<ModalityFeatures>> {
        ds.samples
            .par_iter()
            .map(|s| {
                self.encoders
                    .features(&self.store, &s.id, s.sequences.each_ref())
            })
            .collect()
    }

    /// Eval-mode forward pass of every sample.
    pub fn analyze(&self, ds: &Dataset) -> Result<Vec<SampleAnalysis>> {
        if self.completed < STAGE_COUNT {
            return Err(MmffError::State(format!(
                "model has completed {} of {STAGE_COUNT} training stages",
                self.completed
            )));
        }
        self.check_dataset(ds)?;
        let features = self.features(ds)?;
        features
            .par_iter()
            .zip(&ds.samples)
            .map(|(x, s)| {
                let z = self.proxy.proxy_encode(&self.store, x)?.z;
                let out = self.fusion.forward_values(&self.store, x, &z)?;
                Ok(SampleAnalysis {
                    id: s.id.clone(),
                    label: s.label,
                    prediction: out.prediction * self.label_scale.1 + self.label_scale.0,
                    weights: out.weights,
                    factors: out.factors,
                })
            })
            .collect()
    }

    /// Predictions on the label scale after dropping orders outside `retained`.
    pub fn ablated_predictions(&self, analyses: &[SampleAnalysis], retained: &[usize]) -> Result<Vec<f64>> {
        analyses
            .iter()
            .map(|a| {
                let spec = ablate_orders(&a.weights.order, retained)?;
                let v = ablated_fuse(&a.factors.orders, &spec)?;
                let y = self.fusion.predict_values(&self.store, &v)?;
                Ok(y * self.label_scale.1 + self.label_scale.0)
            })
            .collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::from_store(&self.store, self.completed);
        let d = &self.dims;
        let sizes = [d.input[0], d.input[1], d.input[2], d.d, d.r, d.h, d.hf, d.f].map(|v| v as f64);
        c.push_meta("meta.dims", &sizes);
        c.push_meta("meta.dropout", &[d.dropout]);
        c.push_meta("meta.label", &[self.label_scale.0, self.label_scale.1]);
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let sizes = c.meta("meta.dims")?;
        if sizes.len() != 8 || sizes.iter().any(|&v| v < 1.0 || v.fract() != 0.0) {
            return Err(MmffError::Format(format!("invalid model dims {sizes:?}")));
        }
        let s = sizes.iter().map(|&v| v as usize).collect::<Vec<_>>();
        let dropout = c.meta("meta.dropout")?[0];
        let label = c.meta("meta.label")?;
        if label.len() != 2 {
            return Err(MmffError::Format("invalid label scale".into()));
        }
        let dims = ModelDims {
            input: [s[0], s[1], s[2]],
            d: s[3],
            r: s[4],
            h: s[5],
            hf: s[6],
            f: s[7],
            dropout,
        };
        let mut model = Model::new(dims, 0)?;
        c.restore_into(&mut model.store)?;
        model.label_scale = (label[0], label[1]);
        model.completed = c.stage.min(STAGE_COUNT);
        Ok(model)
    }
}

/// Dataset-mean weights and their aggregate.
pub fn mean_contributions(analyses: &[SampleAnalysis]) -> Option<ContributionReport> {
    let w: Vec<OrderWeights> = analyses.iter().map(|a| a.weights).collect();
    OrderWeights::mean(&w).map(|m| aggregate_contributions(&m))
}
