//! Acceptance suite. Runs every criterion, prints one line per criterion and
//! exits non-zero if any of them fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use mmff_core::analysis::{ablate_orders, ablated_fuse, aggregate_contributions, compute_metrics};
use mmff_core::config::RunConfig;
use mmff_core::data::{load_dataset, save_checkpoint, synth_generate, synth_samples, Split};
use mmff_core::encoder::BiLstm;
use mmff_core::fusion::{fuse, fuse_values, FusionConfig, FusionParams, FusionSample};
use mmff_core::pipeline::{compress_dataset, fit_preprocessors, mean_contributions, Model, ModelDims, TrainReport};
use mmff_core::preprocess::{
    compress_sequence, first_principal_component, fit_low_variance_filter, key_frame_indices, midimax_select,
    power_iteration, PrincipalAxis,
};
use mmff_core::proxy::ProxyParams;
use mmff_core::tensor::check::{check_param_gradients, numeric_input_gradient, relative_error};
use mmff_core::tensor::{Activation, Mode, Primitive};
use mmff_core::{
    Checkpoint, Dataset, FrameSequence, Graph, Modality, ModalityFeatures, NodeId, OrderWeights, ParamStore, RngStream,
    SynthConfig,
};

type Outcome = std::result::Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let held: bool = $cond;
        if !held {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: std::result::Result<T, E>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

const GRAD_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-6;

fn random_vec(rng: &mut RngStream, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

/// Values kept at least `gap` away from every point in `kinks`.
fn away_from(rng: &mut RngStream, n: usize, kinks: &[f64], gap: f64) -> Vec<f64> {
    (0..n)
        .map(|_| loop {
            let v = rng.uniform_in(-2.0, 2.0);
            if kinks.iter().all(|k| (v - k).abs() > gap) {
                break v;
            }
        })
        .collect()
}

// ---------------------------------------------------------------- criterion 1

struct PrimitiveCase {
    kind: Primitive,
    shapes: Vec<Vec<usize>>,
    kinks: Vec<f64>,
}

fn primitive_cases() -> Vec<PrimitiveCase> {
    let case = |kind, shapes: Vec<Vec<usize>>| PrimitiveCase {
        kind,
        shapes,
        kinks: vec![],
    };
    let act = |a, kinks: Vec<f64>| PrimitiveCase {
        kind: Primitive::Activation(a),
        shapes: vec![vec![7]],
        kinks,
    };
    vec![
        case(Primitive::MatMul, vec![vec![3, 4], vec![4, 2]]),
        case(Primitive::MatMul, vec![vec![3, 4], vec![4]]),
        case(Primitive::Add, vec![vec![5], vec![5]]),
        case(Primitive::Scale, vec![vec![4], vec![1]]),
        case(Primitive::Hadamard, vec![vec![6], vec![6]]),
        case(Primitive::Concat, vec![vec![2], vec![3], vec![1]]),
        case(Primitive::Mean, vec![vec![5]]),
        case(Primitive::Sum, vec![vec![5]]),
        case(Primitive::Affine, vec![vec![3, 4], vec![4], vec![3]]),
        case(Primitive::Softmax, vec![vec![5]]),
        case(Primitive::Pick(2), vec![vec![4]]),
        act(Activation::Relu, vec![0.0]),
        act(Activation::Elu, vec![0.0]),
        act(Activation::Tanh, vec![]),
        act(Activation::Hardtanh, vec![-1.0, 1.0]),
        act(Activation::Sigmoid, vec![]),
    ]
}

/// Loss `sum(w * op(inputs))` with fixed random weights `w`.
fn primitive_loss(kind: Primitive, shapes: &[Vec<usize>], inputs: &[Vec<f64>], w: &[f64]) -> (Graph, Vec<NodeId>, f64) {
    let mut g = Graph::new();
    let ids: Vec<_> = shapes
        .iter()
        .zip(inputs)
        .map(|(s, v)| g.variable(s.clone(), v.clone()).unwrap())
        .collect();
    let out = g.apply(kind, &ids).unwrap();
    let wn = g.constant(g.shape(out).to_vec(), w.to_vec()).unwrap();
    let prod = g.hadamard(out, wn).unwrap();
    let loss = g.sum(prod);
    let value = g.scalar(loss);
    g.backward(loss).unwrap();
    (g, ids, value)
}

fn check_primitives(rng: &mut RngStream) -> std::result::Result<(usize, f64), String> {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for case in primitive_cases() {
        for _ in 0..5 {
            let inputs: Vec<Vec<f64>> = case
                .shapes
                .iter()
                .map(|s| away_from(rng, s.iter().product(), &case.kinks, 1e-3))
                .collect();
            let out_len = {
                let mut g = Graph::new();
                let ids: Vec<_> = case
                    .shapes
                    .iter()
                    .zip(&inputs)
                    .map(|(s, v)| g.variable(s.clone(), v.clone()).unwrap())
                    .collect();
                let out = g.apply(case.kind, &ids).map_err(|e| e.to_string())?;
                g.value(out).len()
            };
            let w = random_vec(rng, out_len);
            let (g, ids, _) = primitive_loss(case.kind, &case.shapes, &inputs, &w);
            for (slot, input) in inputs.iter().enumerate() {
                let analytic = g.grad(ids[slot]).to_vec();
                let numeric = numeric_input_gradient(input, FD_STEP, |x| {
                    let mut xs = inputs.clone();
                    xs[slot] = x.to_vec();
                    primitive_loss(case.kind, &case.shapes, &xs, &w).2
                });
                for (a, n) in analytic.iter().zip(&numeric) {
                    let e = relative_error(*a, *n);
                    worst = worst.max(e);
                    ensure!(e < GRAD_TOL, "{} operand {slot}: analytic {a} vs numeric {n}", case.kind);
                    checked += 1;
                }
            }
        }
    }
    Ok((checked, worst))
}

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = RngStream::new(11);
    let (prim_checked, prim_worst) = check_primitives(&mut rng)?;
    let mut worst = prim_worst;
    let mut families = Vec::new();

    // two-layer BiLSTM, input 3, hidden 4, 5 steps
    {
        let mut store = ParamStore::new();
        let lstm = ok(BiLstm::new(&mut store, "lstm", 3, 4, 2, 0.0, &mut rng))?;
        let seq: Vec<Vec<f64>> = (0..5).map(|_| random_vec(&mut rng, 3)).collect();
        let w = random_vec(&mut rng, lstm.out_dim());
        let ids = lstm.params();
        let report = ok(check_param_gradients(&mut store, &ids, 6, FD_STEP, &mut rng, |store, backprop| {
            let mut g = Graph::new();
            let xs = seq.iter().map(|x| g.vector(x)).collect::<Result<Vec<_>, _>>()?;
            let h = lstm.encode(&mut g, store, &xs, Mode::Eval, &mut RngStream::new(0))?;
            let wn = g.vector(&w)?;
            let p = g.hadamard(h, wn)?;
            let loss = g.sum(p);
            if backprop {
                g.backward_into(loss, store)?;
            }
            Ok(g.scalar(loss))
        }))?;
        families.push(("bilstm", report.max_rel_error(), report.entries.len()));
    }

    let (d, r, hf, f) = (8, 4, 4, 4);
    let features = |rng: &mut RngStream| ModalityFeatures {
        id: "x".into(),
        text: random_vec(rng, d),
        audio: random_vec(rng, d),
        video: random_vec(rng, d),
    };

    // latent reconstruction loss
    {
        let mut store = ParamStore::new();
        let proxy = ok(ProxyParams::new(&mut store, "proxy", d, r, &mut rng))?;
        let x = features(&mut rng);
        let ids = proxy.params();
        let report = ok(check_param_gradients(&mut store, &ids, 8, FD_STEP, &mut rng, |store, backprop| {
            let (mut g, loss) = proxy.latent_loss(store, &x)?;
            if backprop {
                g.backward_into(loss, store)?;
            }
            Ok(g.scalar(loss))
        }))?;
        families.push(("latent_loss", report.max_rel_error(), report.entries.len()));
    }

    // end-to-end squared error, per parameter family
    {
        let mut store = ParamStore::new();
        let cfg = FusionConfig::new(d, r, hf, f, 0.3);
        let fusion = ok(FusionParams::new(&mut store, "fusion", cfg, &mut rng))?;
        let sample = FusionSample {
            features: features(&mut rng),
            z: random_vec(&mut rng, r),
            target: 0.7,
        };
        let named = [
            ("mse/encoders", fusion.encoder_params()),
            ("mse/projections", fusion.projection_params()),
            ("mse/heads", fusion.head_params()),
            ("mse/all", fusion.params()),
        ];
        for (name, ids) in named {
            let report = ok(check_param_gradients(&mut store, &ids, 6, FD_STEP, &mut rng, |store, backprop| {
                let (mut g, loss, _) = fusion.sample_loss(store, &sample, Mode::Eval, &mut RngStream::new(0))?;
                if backprop {
                    g.backward_into(loss, store)?;
                }
                Ok(g.scalar(loss))
            }))?;
            families.push((name, report.max_rel_error(), report.entries.len()));
        }
    }

    let mut detail = format!("primitives {prim_checked} coords");
    for (name, err, n) in &families {
        worst = worst.max(*err);
        ensure!(*err < GRAD_TOL, "{name}: max relative error {err:.3e}");
        ensure!(*n > 0, "{name}: nothing checked");
        detail.push_str(&format!(", {name} {n}"));
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("{detail}; max rel error {worst:.2e}; {:.2}s", elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------- criterion 2

/// Reference selection: every slice is handled on its own by sorting
/// `(value, index)` pairs.
fn midimax_reference(series: &[f64], ratio: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < series.len() {
        let end = (start + ratio).min(series.len());
        let len = end - start;
        let partial = len < ratio;
        if len < 3 || (partial && len <= 3) {
            out.extend(start..end);
        } else {
            let mut ranked: Vec<(f64, usize)> = (start..end).map(|i| (series[i], i)).collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let first_with = |v: f64| (start..end).find(|&i| series[i] == v).unwrap();
            let lo = first_with(ranked[0].0);
            let hi = first_with(ranked[len - 1].0);
            let mid = first_with(ranked[(len - 1) / 2].0);
            let mut picked = vec![hi, lo, mid];
            picked.sort_unstable();
            out.extend(picked);
        }
        start = end;
    }
    out
}

fn random_series(rng: &mut RngStream, n: usize) -> Vec<f64> {
    // a coarse grid produces plenty of ties
    let coarse = rng.uniform() < 0.3;
    (0..n)
        .map(|_| {
            if coarse {
                rng.below(4) as f64
            } else {
                rng.normal()
            }
        })
        .collect()
}

fn unit(frame: &[f64]) -> Vec<f64> {
    let n = frame.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        frame.iter().map(|v| v / n).collect()
    } else {
        frame.to_vec()
    }
}

fn criterion_midimax() -> Outcome {
    let mut rng = RngStream::new(22);
    for case in 0..1000 {
        let n = 1 + rng.below(200);
        let ratio = 1 + rng.below(12);
        let series = random_series(&mut rng, n);
        let got = ok(midimax_select(&series, ratio))?.indices();
        let want = midimax_reference(&series, ratio);
        ensure!(got == want, "case {case} (n={n}, ratio={ratio}): {got:?} vs {want:?}");
    }

    for case in 0..300 {
        let m = 1 + rng.below(150);
        let k = 1 + rng.below(5);
        let target = 3 + rng.below(60);
        let rows: Vec<Vec<f64>> = (0..m).map(|_| random_vec(&mut rng, k)).collect();
        let seq = ok(FrameSequence::from_rows("s", Modality::Audio, &rows))?;
        let direction = unit(&random_vec(&mut rng, k));
        let axis = PrincipalAxis::new(random_vec(&mut rng, k), direction, 1.0);
        let out = ok(compress_sequence(&seq, &axis, target))?;
        ensure!(out.len() <= target, "case {case}: {} frames for target {target}", out.len());
        ensure!(out.dims() == k, "case {case}: dims changed");
        let idx = ok(key_frame_indices(&seq, &axis, target))?;
        ensure!(idx.windows(2).all(|w| w[0] <= w[1]), "case {case}: indices not ordered");
        // each output frame is a normalized input frame, taken in order
        let normalized: Vec<Vec<f64>> = rows.iter().map(|r| unit(r)).collect();
        let mut pos = 0;
        for (j, frame) in out.frames().enumerate() {
            match (pos..m).find(|&i| normalized[i] == frame) {
                Some(i) => pos = i,
                None => return Err(format!("case {case}: output frame {j} is not a later input frame")),
            }
        }
        // indices agree with the reference selection, cut or padded
        let projected: Vec<f64> = rows.iter().map(|r| axis.project(r)).collect();
        let ratio = (3 * m).div_ceil(target).max(1);
        let mut want = midimax_reference(&projected, ratio);
        want.truncate(target);
        let last = *want.last().unwrap();
        want.resize(target, last);
        ensure!(idx == want, "case {case}: key frames {idx:?} vs {want:?}");
    }
    Ok("1000 selection cases and 300 compression cases agree with the reference".into())
}

// ---------------------------------------------------------------- criterion 3

fn criterion_filter() -> Outcome {
    let mut rng = RngStream::new(33);
    let mut dropped_total = 0;
    let mut errors = 0;
    for case in 0..100 {
        let n = 1 + rng.below(6);
        let k = 1 + rng.below(8);
        let spread: Vec<f64> = (0..k)
            .map(|_| match rng.below(3) {
                0 => 0.0,
                1 => rng.uniform_in(0.0, 0.1),
                _ => rng.uniform_in(0.1, 1.0),
            })
            .collect();
        let seqs: Vec<FrameSequence> = (0..n)
            .map(|i| {
                let m = 1 + rng.below(10);
                let base: Vec<f64> = (0..k).map(|_| rng.uniform()).collect();
                let rows: Vec<Vec<f64>> = (0..m)
                    .map(|_| (0..k).map(|c| base[c] + spread[c] * rng.uniform()).collect())
                    .collect();
                FrameSequence::from_rows(format!("s{i}"), Modality::Audio, &rows).unwrap()
            })
            .collect();
        let beta = rng.uniform_in(0.0, 0.02);

        // mean over samples of the population variance within each sample
        let mut stat = vec![0.0; k];
        for s in &seqs {
            for (c, st) in stat.iter_mut().enumerate() {
                let col: Vec<f64> = s.frames().map(|f| f[c]).collect();
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                *st += col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
            }
        }
        let keep: Vec<bool> = stat.iter().map(|s| s / n as f64 > beta).collect();

        match fit_low_variance_filter(&seqs, beta) {
            Ok(mask) => {
                ensure!(mask.keep == keep, "case {case}: kept {:?}, expected {keep:?}", mask.keep);
                dropped_total += keep.iter().filter(|&&x| !x).count();
            }
            Err(e) => {
                ensure!(!keep.iter().any(|&x| x), "case {case}: unexpected error {e}");
                errors += 1;
            }
        }
    }
    Ok(format!("100 datasets, {dropped_total} dimensions dropped, {errors} all-dropped rejections"))
}

// ---------------------------------------------------------------- criterion 4

fn criterion_pca() -> Outcome {
    let mut rng = RngStream::new(44);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let k = 5 + rng.below(6);
        let n = 20 + rng.below(60);
        // correlated data: random mixing of independent sources of varying scale
        let mix: Vec<f64> = random_vec(&mut rng, k * k);
        let scales: Vec<f64> = (0..k).map(|_| rng.uniform_in(0.1, 3.0)).collect();
        let mut data = Vec::with_capacity(n * k);
        for _ in 0..n {
            let s: Vec<f64> = scales.iter().map(|sc| sc * rng.normal()).collect();
            for row in 0..k {
                data.push((0..k).map(|c| mix[row * k + c] * s[c]).sum::<f64>());
            }
        }
        let mean: Vec<f64> = (0..k).map(|c| data.iter().skip(c).step_by(k).sum::<f64>() / n as f64).collect();
        let mut cov = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                let s: f64 = data
                    .chunks(k)
                    .map(|r| (r[a] - mean[a]) * (r[b] - mean[b]))
                    .sum();
                cov[a * k + b] = s / (n - 1) as f64;
            }
        }
        let cv = |v: &[f64]| -> Vec<f64> { (0..k).map(|a| (0..k).map(|b| cov[a * k + b] * v[b]).sum()).collect() };
        let rayleigh = |v: &[f64]| -> f64 {
            let c = cv(v);
            c.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / v.iter().map(|x| x * x).sum::<f64>()
        };

        let axis = ok(first_principal_component(&data, k))?;
        let (w, lambda, _) = ok(power_iteration(&cov, k))?;
        for (name, dir, lam) in [("axis", &axis.direction, axis.eigenvalue), ("power", &w, lambda)] {
            let c = cv(dir);
            let res = c.iter().zip(dir.iter()).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
            ensure!(res < 1e-6 * lam, "case {case} {name}: residual {res:.3e}, eigenvalue {lam:.3e}");
            worst = worst.max(res / lam);
            let q = rayleigh(dir);
            for _ in 0..100 {
                let u = unit(&random_vec(&mut rng, k));
                ensure!(rayleigh(&u) <= q + 1e-12 * q, "case {case} {name}: random direction beats the axis");
            }
        }
    }
    Ok(format!("50 covariances, worst residual {worst:.2e} of the eigenvalue"))
}

// ---------------------------------------------------------------- criterion 5

fn small_fusion(rng: &mut RngStream) -> std::result::Result<(ParamStore, FusionParams), String> {
    let mut store = ParamStore::new();
    let fusion = ok(FusionParams::new(&mut store, "fusion", FusionConfig::new(8, 4, 4, 4, 0.0), rng))?;
    Ok((store, fusion))
}

fn criterion_simplex() -> Outcome {
    let mut rng = RngStream::new(55);
    let (store, fusion) = small_fusion(&mut rng)?;
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let scale = [0.1, 1.0, 10.0][case % 3];
        let z: Vec<f64> = random_vec(&mut rng, 4).iter().map(|v| v * scale).collect();
        let w = ok(fusion.order_weights(&store, &z))?;
        for v in w.vectors() {
            ensure!(v.iter().all(|&x| x >= 0.0), "case {case}: negative weight {v:?}");
            let s: f64 = v.iter().sum();
            worst = worst.max((s - 1.0).abs());
            ensure!((s - 1.0).abs() <= 1e-6, "case {case}: weights sum to {s}");
        }
    }

    let x = ModalityFeatures {
        id: "x".into(),
        text: random_vec(&mut rng, 8),
        audio: random_vec(&mut rng, 8),
        video: random_vec(&mut rng, 8),
    };
    let out = ok(fusion.forward_values(&store, &x, &random_vec(&mut rng, 4)))?;

    // vertex: fusing with [1, 0, 0] returns the first-order factor
    let mut g = Graph::new();
    let orders = out.factors.orders.clone().map(|v| g.vector(&v).unwrap());
    let gamma = ok(g.vector(&[1.0, 0.0, 0.0]))?;
    let fused = ok(fuse(&mut g, orders, gamma))?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    ensure!(bits(g.value(fused)) == bits(&out.factors.orders[0]), "vertex fusion differs from v1");
    let plain = ok(fuse_values(&out.factors.orders, &[1.0, 0.0, 0.0]))?;
    ensure!(bits(&plain) == bits(&out.factors.orders[0]), "plain vertex fusion differs from v1");

    // the fused vector is the weighted sum of the order factors
    let recon = ok(fuse_values(&out.factors.orders, &out.weights.order))?;
    for (a, b) in recon.iter().zip(&out.factors.fused) {
        ensure!((a - b).abs() < 1e-12, "fused vector {b} vs weighted sum {a}");
    }

    // zero-annihilation of each factor family
    let mut g = Graph::new();
    let inputs = [g.vector(&x.text).unwrap(), g.vector(&x.audio).unwrap(), g.vector(&x.video).unwrap()];
    let mut r0 = RngStream::new(0);
    let zero = |g: &Graph, id| g.value(id).iter().all(|&v| v == 0.0);
    for m in 0..3 {
        let mut w = [0.5, 0.3, 0.2];
        w[m] = 0.0;
        let gamma = g.vector(&w).unwrap();
        let first = ok(fusion.first_order_factors(&mut g, &store, inputs, gamma, Mode::Eval, &mut r0))?;
        ensure!(zero(&g, first[m]), "first-order factor {m} survives a zero weight");
        ensure!((0..3).filter(|&i| i != m).all(|i| !zero(&g, first[i])), "non-zero first-order weight annihilated");
        let second = ok(fusion.second_order_factors(&mut g, &store, inputs, gamma, Mode::Eval, &mut r0))?;
        for (k, (p, q)) in mmff_core::fusion::PAIRS.iter().enumerate() {
            let touches = p.index() == m || q.index() == m;
            ensure!(zero(&g, second[k]) == touches, "second-order pair {k} with zero weight on {m}");
        }
        let third = ok(fusion.third_order_factor(&mut g, &store, inputs, gamma, Mode::Eval, &mut r0))?;
        ensure!(zero(&g, third), "third-order factor survives a zero weight on {m}");
    }
    Ok(format!("1000 proxies, worst sum error {worst:.1e}; vertex and annihilation identities hold"))
}

// ---------------------------------------------------------------- criterion 6

fn frozen_family_bytes(c: &Checkpoint) -> std::result::Result<Vec<u8>, String> {
    let arrays = c
        .arrays
        .iter()
        .filter(|a| ["enc.", "pretrain.", "proxy."].iter().any(|p| a.name.starts_with(p)))
        .cloned()
        .collect();
    ok(Checkpoint { stage: 0, arrays }.to_bytes())
}

fn criterion_freeze() -> Outcome {
    let cfg = ok(RunConfig::from_str_validated(
        "d = 8\nr = 4\nh = 4\nhf = 4\nf = 4\nepochs_stage0 = 3\nepochs_stage1 = 3\nepochs_stage2 = 5\nbatch_size = 4\ntarget_len_audio = 6\ntarget_len_video = 8\nlr = 0.01\ndropout = 0.3\n",
    ))?;
    let sc = SynthConfig {
        samples: 12,
        lengths: [5, 20, 24],
        seed: 6,
        ..SynthConfig::default()
    };
    let (train, _) = ok(synth_samples(&sc))?;
    let train = Dataset {
        split: Split::Train,
        samples: train,
    };
    let pre = ok(fit_preprocessors(&train, cfg.beta))?;
    let train = ok(compress_dataset(&train, &pre, cfg.target_len_audio, cfg.target_len_video))?;
    let mut model = ok(Model::new(ok(ModelDims::of(&train, &cfg))?, cfg.seed))?;
    let mut report = TrainReport::default();
    ok(model.train_stage(0, &train, &cfg, &mut report))?;
    ok(model.train_stage(1, &train, &cfg, &mut report))?;
    let before = model.to_checkpoint();
    ok(model.train_stage(2, &train, &cfg, &mut report))?;
    let after = model.to_checkpoint();

    let (b, a) = (frozen_family_bytes(&before)?, frozen_family_bytes(&after)?);
    ensure!(b.len() > 64, "no encoder or proxy arrays found");
    ensure!(a == b, "encoder/proxy arrays changed during stage 2");
    let fusion_changed = before
        .arrays
        .iter()
        .filter(|x| x.name.starts_with("fusion."))
        .any(|x| after.get(&x.name).is_some_and(|y| y.values != x.values));
    ensure!(fusion_changed, "stage 2 did not update the fusion parameters");
    Ok(format!("{} bytes of encoder and proxy arrays identical; fusion updated", b.len()))
}

// ---------------------------------------------------------------- criterion 7

fn criterion_ablation() -> Outcome {
    let mut rng = RngStream::new(77);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let dropped = rng.below(3);
        let mut raw = [rng.uniform(), rng.uniform(), rng.uniform()];
        raw[dropped] = 0.0;
        let s: f64 = raw.iter().sum();
        let gamma = raw.map(|v| v / s);
        let orders = [random_vec(&mut rng, 8), random_vec(&mut rng, 8), random_vec(&mut rng, 8)];
        let retained: Vec<usize> = (1..=3).filter(|&k| k != dropped + 1).collect();
        let spec = ok(ablate_orders(&gamma, &retained))?;
        let ablated = ok(ablated_fuse(&orders, &spec))?;
        let full = ok(fuse_values(&orders, &gamma))?;
        for (a, b) in ablated.iter().zip(&full) {
            worst = worst.max((a - b).abs());
        }
        ensure!(worst < 1e-12, "case {case}: fused vector moved by {worst:.3e}");
    }
    let spec = ok(ablate_orders(&[0.4, 0.35, 0.25], &[1, 2]))?;
    let want = [8.0 / 15.0, 7.0 / 15.0, 0.0];
    for (g, w) in spec.weights.iter().zip(want) {
        ensure!((g - w).abs() < 1e-12, "renormalized weights {:?}", spec.weights);
    }
    Ok(format!("1000 zero-weight drops, worst change {worst:.1e}; [0.4,0.35,0.25] -> [8/15,7/15,0]"))
}

// ---------------------------------------------------------------- criterion 8

#[allow(clippy::approx_constant)]
fn criterion_arithmetic() -> Outcome {
    let w = OrderWeights {
        per_order: [[0.245, 0.566, 0.189], [0.408, 0.347, 0.245], [0.277, 0.330, 0.393]],
        order: [0.387, 0.295, 0.318],
    };
    let r = aggregate_contributions(&w);
    let published = [0.304, 0.425, 0.271];
    for (m, (got, want)) in r.aggregate.iter().zip(published).enumerate() {
        ensure!((got - want).abs() <= 0.005, "modality {m}: {got:.4} vs {want}");
    }
    Ok(format!(
        "aggregate [{:.4}, {:.4}, {:.4}] vs [0.304, 0.425, 0.271]",
        r.aggregate[0], r.aggregate[1], r.aggregate[2]
    ))
}

// ---------------------------------------------------------------- criterion 9

struct Reference {
    ccc: f64,
    rmse: f64,
    mae: f64,
    pearson: f64,
}

fn metrics_reference(y: &[f64], p: &[f64]) -> Reference {
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let mp = p.iter().sum::<f64>() / n;
    let vy = y.iter().map(|a| (a - my) * (a - my)).sum::<f64>() / n;
    let vp = p.iter().map(|a| (a - mp) * (a - mp)).sum::<f64>() / n;
    let cov = y.iter().zip(p).map(|(a, b)| (a - my) * (b - mp)).sum::<f64>() / n;
    Reference {
        ccc: 2.0 * cov / (vy + vp + (my - mp).powi(2)),
        rmse: (y.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n).sqrt(),
        mae: y.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() / n,
        pearson: cov / (vy * vp).sqrt(),
    }
}

fn criterion_metrics() -> Outcome {
    let mut rng = RngStream::new(99);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
    for case in 0..1000 {
        let n = 2 + rng.below(60);
        let y: Vec<f64> = (0..n).map(|_| rng.uniform_in(0.0, 24.0)).collect();
        let slope = rng.uniform_in(-1.5, 1.5);
        let noise = rng.uniform_in(0.0, 5.0);
        let p: Vec<f64> = y.iter().map(|v| slope * v + 3.0 + noise * rng.normal()).collect();
        let got = ok(compute_metrics(&y, &p))?;
        let want = metrics_reference(&y, &p);
        let ccc = got.ccc.ok_or(format!("case {case}: ccc undefined"))?;
        let pearson = got.pearson.ok_or(format!("case {case}: pearson undefined"))?;
        ensure!(got.samples == n, "case {case}: sample count");
        ensure!(close(ccc, want.ccc), "case {case}: ccc {ccc} vs {}", want.ccc);
        ensure!(close(got.rmse, want.rmse), "case {case}: rmse {} vs {}", got.rmse, want.rmse);
        ensure!(close(got.mae, want.mae), "case {case}: mae {} vs {}", got.mae, want.mae);
        ensure!(close(pearson, want.pearson), "case {case}: pearson {pearson} vs {}", want.pearson);
    }
    let m = ok(compute_metrics(&[0.0, 1.0, 2.0], &[0.0, 2.0, 4.0]))?;
    let ccc = m.ccc.ok_or("worked example: ccc undefined")?;
    ensure!((ccc - 8.0 / 13.0).abs() <= 1e-12, "worked example ccc {ccc}");
    Ok(format!("1000 random pairs match; worked example ccc {ccc:.12}"))
}

// ------------------------------------------------------------ criteria 10, 11

const E2E_CONFIG: &str = "\
d = 32
r = 8
h = 16
hf = 16
f = 16
lr = 0.003
epochs_stage0 = 40
epochs_stage1 = 60
epochs_stage2 = 80
dropout = 0.4
target_len_audio = 30
target_len_video = 40
batch_size = 16
";

struct RunArtifacts {
    ccc: f64,
    aggregate: [f64; 3],
    seconds: f64,
    checkpoint: Vec<u8>,
    metrics: Vec<u8>,
}

fn end_to_end(seed: u64, dir: &Path) -> std::result::Result<RunArtifacts, String> {
    let start = Instant::now();
    let mut cfg = ok(RunConfig::from_str_validated(E2E_CONFIG))?;
    cfg.seed = seed;
    let sc = SynthConfig {
        samples: 64,
        test_samples: 32,
        dominant: Some(Modality::Audio),
        seed,
        ..SynthConfig::default()
    };
    let paths = ok(synth_generate(&sc, &dir.join("data")))?;
    let train = ok(load_dataset(&paths.train))?;
    let test = ok(load_dataset(paths.test.as_ref().ok_or("no test manifest")?))?;
    let pre = ok(fit_preprocessors(&train, cfg.beta))?;
    let train = ok(compress_dataset(&train, &pre, cfg.target_len_audio, cfg.target_len_video))?;
    let test = ok(compress_dataset(&test, &pre, cfg.target_len_audio, cfg.target_len_video))?;
    let mut model = ok(Model::new(ok(ModelDims::of(&train, &cfg))?, cfg.seed))?;
    ok(model.train(&train, &cfg, 0))?;

    let analyses = ok(model.analyze(&test))?;
    let y: Vec<f64> = analyses.iter().map(|a| a.label).collect();
    let p: Vec<f64> = analyses.iter().map(|a| a.prediction).collect();
    let metrics = ok(compute_metrics(&y, &p))?;
    let contrib = mean_contributions(&analyses).ok_or("no analyses")?;

    let ckpt_path = dir.join("model.ckpt");
    let metrics_path = dir.join("metrics.csv");
    ok(save_checkpoint(&model.to_checkpoint(), &ckpt_path))?;
    ok(std::fs::write(&metrics_path, metrics.to_csv()))?;
    Ok(RunArtifacts {
        ccc: metrics.ccc.ok_or("ccc undefined")?,
        aggregate: contrib.aggregate,
        seconds: start.elapsed().as_secs_f64(),
        checkpoint: ok(std::fs::read(&ckpt_path))?,
        metrics: ok(std::fs::read(&metrics_path))?,
    })
}

fn criterion_end_to_end(first: &mut Option<RunArtifacts>) -> Outcome {
    let mut lines = Vec::new();
    let mut audio_wins = 0;
    let mut failures = Vec::new();
    for seed in 0..5u64 {
        let dir = ok(tempfile::tempdir())?;
        let run = end_to_end(seed, dir.path())?;
        let a = run.aggregate;
        let audio_top = a[1] > a[0] && a[1] > a[2];
        audio_wins += usize::from(audio_top);
        if run.ccc < 0.8 {
            failures.push(format!("seed {seed} ccc {:.3}", run.ccc));
        }
        if run.seconds > 300.0 {
            failures.push(format!("seed {seed} took {:.0}s", run.seconds));
        }
        lines.push(format!(
            "seed {seed}: ccc {:.3}, gamma [{:.3}, {:.3}, {:.3}], {:.1}s",
            run.ccc, a[0], a[1], a[2], run.seconds
        ));
        if seed == 0 {
            *first = Some(run);
        }
    }
    if audio_wins < 4 {
        failures.push(format!("audio largest in only {audio_wins} of 5 seeds"));
    }
    let detail = lines.join("; ");
    if failures.is_empty() {
        Ok(format!("{detail}; audio largest in {audio_wins}/5"))
    } else {
        Err(format!("{}; {detail}", failures.join(", ")))
    }
}

fn criterion_determinism(first: &Option<RunArtifacts>) -> Outcome {
    let first = first.as_ref().ok_or("the seed-0 end-to-end run did not complete")?;
    let dir = ok(tempfile::tempdir())?;
    let again = end_to_end(0, dir.path())?;
    ensure!(again.checkpoint == first.checkpoint, "checkpoints differ");
    ensure!(again.metrics == first.metrics, "metric CSVs differ");
    Ok(format!(
        "checkpoint ({} bytes) and metrics CSV identical across two seed-0 runs",
        first.checkpoint.len()
    ))
}

// ---------------------------------------------------------------- driver

fn report(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("criterion {n:>2} [PASS] {name}: {detail} ({secs:.1}s)");
            true
        }
        Err(detail) => {
            println!("criterion {n:>2} [FAIL] {name}: {detail} ({secs:.1}s)");
            false
        }
    }
}

fn main() {
    let mut first = None;
    let results = [
        report(1, "gradient suite", criterion_gradients),
        report(2, "midimax oracle", criterion_midimax),
        report(3, "filter oracle", criterion_filter),
        report(4, "principal axis", criterion_pca),
        report(5, "simplex suite", criterion_simplex),
        report(6, "hierarchy freeze", criterion_freeze),
        report(7, "ablation consistency", criterion_ablation),
        report(8, "contribution arithmetic", criterion_arithmetic),
        report(9, "metrics oracle", criterion_metrics),
        report(10, "end-to-end synthetic", || criterion_end_to_end(&mut first)),
        report(11, "determinism", || criterion_determinism(&first)),
    ];
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
