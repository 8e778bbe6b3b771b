use mmff_core::config::RunConfig;
use mmff_core::data::{load_checkpoint, save_checkpoint, synth_samples, Split};
use mmff_core::pipeline::{compress_dataset, fit_preprocessors, Model, ModelDims, TrainReport};
use mmff_core::{Dataset, MmffError, SynthConfig};

fn tiny() -> (RunConfig, Dataset, Dataset) {
    let cfg = RunConfig::from_str_validated(
        "d = 8\nr = 4\nh = 4\nhf = 4\nf = 4\nepochs_stage0 = 3\nepochs_stage1 = 3\nepochs_stage2 = 4\n\
         batch_size = 4\ntarget_len_audio = 6\ntarget_len_video = 8\nlr = 0.01\n",
    )
    .unwrap();
    let sc = SynthConfig {
        samples: 12,
        test_samples: 6,
        lengths: [5, 20, 24],
        seed: 3,
        ..SynthConfig::default()
    };
    let (train, test) = synth_samples(&sc).unwrap();
    let train = Dataset { split: Split::Train, samples: train };
    let test = Dataset { split: Split::Test, samples: test };
    let pre = fit_preprocessors(&train, cfg.beta).unwrap();
    let train = compress_dataset(&train, &pre, cfg.target_len_audio, cfg.target_len_video).unwrap();
    let test = compress_dataset(&test, &pre, cfg.target_len_audio, cfg.target_len_video).unwrap();
    (cfg, train, test)
}

#[test]
fn compressed_lengths() {
    let (cfg, train, _) = tiny();
    for s in &train.samples {
        assert_eq!(s.sequences[1].len(), cfg.target_len_audio);
        assert_eq!(s.sequences[2].len(), cfg.target_len_video);
    }
}

#[test]
fn reloaded_checkpoint_predicts_like_the_trained_model() {
    let (cfg, train, test) = tiny();
    let mut model = Model::new(ModelDims::of(&train, &cfg).unwrap(), cfg.seed).unwrap();
    let report = model.train(&train, &cfg, 0).unwrap();
    assert_eq!(report.encoder_losses.len(), 3);
    assert_eq!(report.proxy_losses.len(), 3);
    assert_eq!(report.fusion.as_ref().unwrap().losses.len(), 4);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&model.to_checkpoint(), &path).unwrap();
    let reloaded = Model::from_checkpoint(&load_checkpoint(&path).unwrap()).unwrap();
    assert_eq!(reloaded.completed, 3);

    let a = model.analyze(&test).unwrap();
    let b = reloaded.analyze(&test).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.id, y.id);
        // parameters are stored in single precision
        assert!((x.prediction - y.prediction).abs() < 1e-3 * x.prediction.abs().max(1.0));
        assert!(y.weights.on_simplex(1e-9));
    }
}

#[test]
fn stages_run_in_order() {
    let (cfg, train, test) = tiny();
    let mut model = Model::new(ModelDims::of(&train, &cfg).unwrap(), cfg.seed).unwrap();
    let mut report = TrainReport::default();
    assert!(matches!(model.train_stage(2, &train, &cfg, &mut report), Err(MmffError::State(_))));
    assert!(matches!(model.analyze(&test), Err(MmffError::State(_))));
    model.train_stage(0, &train, &cfg, &mut report).unwrap();
    model.train_stage(1, &train, &cfg, &mut report).unwrap();
    assert_eq!(model.completed, 2);
    assert!(model.analyze(&test).is_err());
}

#[test]
fn resuming_matches_a_full_run() {
    let (cfg, train, _) = tiny();
    let dims = ModelDims::of(&train, &cfg).unwrap();
    let mut full = Model::new(dims, cfg.seed).unwrap();
    full.train(&train, &cfg, 0).unwrap();

    let mut partial = Model::new(dims, cfg.seed).unwrap();
    let mut report = TrainReport::default();
    partial.train_stage(0, &train, &cfg, &mut report).unwrap();
    let mut resumed = Model::from_checkpoint(&partial.to_checkpoint()).unwrap();
    resumed.train(&train, &cfg, 1).unwrap();
    assert_eq!(resumed.completed, 3);
    let a = full.to_checkpoint();
    let b = resumed.to_checkpoint();
    assert_eq!(a.arrays.len(), b.arrays.len());
    for x in a.arrays.iter().filter(|x| x.name.starts_with("enc.") || x.name.starts_with("pretrain.")) {
        assert_eq!(Some(x), b.get(&x.name), "{}", x.name);
    }
}
