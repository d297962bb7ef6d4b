use semsum_core::losses::adversarial_losses;
use semsum_core::model::Features;
use semsum_core::trainer::{stage1_update_discriminator, stage3_update_selector_generator, train_epoch};
use semsum_core::{
    fit, load_checkpoint, make_splits, save_checkpoint, synth_generate, ModelConfig, ModelState,
    Protocol, SynthConfig, TrainConfig,
};

fn tiny_config() -> ModelConfig {
    ModelConfig::desk(16, 8)
}

fn tiny_bundle() -> semsum_core::DatasetBundle {
    synth_generate(&SynthConfig::new(21, 5, 30, 16, 8, 5)).unwrap()
}

#[test]
fn adversarial_losses_at_an_undecided_discriminator() {
    let (d, g) = adversarial_losses(0.5f64, 0.5);
    assert!((d - 2.0 * 2f64.ln()).abs() < 1e-12);
    assert!((g - 2f64.ln()).abs() < 1e-12);
    let (d, _) = adversarial_losses(1.0f64, 0.0);
    assert!(d < 1e-6);
    let mut last = f64::INFINITY;
    for k in 1..20 {
        let (_, g) = adversarial_losses(0.5f64, k as f64 / 20.0);
        assert!(g < last);
        last = g;
    }
}

#[test]
fn discriminator_alone_separates_real_from_reconstructed() {
    let bundle = tiny_bundle();
    let features = Features::<f64>::from_record(&bundle.records[0]);
    let cfg = TrainConfig::default();
    let mut state = ModelState::<f64>::new(tiny_config(), 2).unwrap();
    let first = stage1_update_discriminator(&mut state, &features, &cfg).unwrap();
    let mut last = first;
    for _ in 0..300 {
        last = stage1_update_discriminator(&mut state, &features, &cfg).unwrap();
        if last < 0.05 {
            break;
        }
    }
    assert!(last < 0.2, "d_loss {first} -> {last}");
}

#[test]
fn stage_three_reports_non_negative_finite_losses() {
    let bundle = tiny_bundle();
    let features = Features::<f32>::from_record(&bundle.records[1]);
    let mut state = ModelState::<f32>::new(tiny_config(), 4).unwrap();
    let out = stage3_update_selector_generator(&mut state, &features, &TrainConfig::default()).unwrap();
    for v in [out.rec, out.sparsity, out.g_loss, out.total] {
        assert!(v.is_finite() && v >= 0.0);
    }
    assert!((out.total - (out.rec + out.sparsity + out.g_loss)).abs() < 1e-5);
}

#[test]
fn empty_training_split_is_an_error() {
    let bundle = tiny_bundle();
    let mut split = make_splits(&bundle, 0, 1).unwrap().remove(0);
    split.train_ids.clear();
    let mut state = ModelState::<f32>::new(tiny_config(), 0).unwrap();
    assert!(train_epoch(&mut state, &bundle, &split, &TrainConfig::default()).is_err());
}

#[test]
fn fit_keeps_the_best_epoch_and_checkpoints_round_trip() {
    let bundle = tiny_bundle();
    let split = make_splits(&bundle, 1, 1).unwrap().remove(0);
    let train = TrainConfig {
        epochs: 6,
        seed: 3,
        protocol: Some(Protocol::MeanUser),
        ..TrainConfig::default()
    };
    let out = fit::<f32>(&bundle, &split, &tiny_config(), &train).unwrap();
    assert_eq!(out.log.len(), 6);
    let f1s: Vec<f64> = out.log.iter().map(|m| m.val_f1.unwrap()).collect();
    assert!(out.best_f1 >= f1s[0]);
    assert_eq!(out.best_f1, f1s.iter().cloned().fold(f64::MIN, f64::max));
    assert_eq!(f1s[out.best_epoch - 1], out.best_f1);
    assert_eq!(out.best.epoch, out.best_epoch);
    for m in &out.log {
        assert!([m.d_loss, m.g_loss, m.rec, m.sparsity, m.semantic, m.total].iter().all(|v| v.is_finite()));
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("best.ckpt");
    save_checkpoint(&out.best, &path).unwrap();
    let back: ModelState<f32> = load_checkpoint(&path).unwrap();
    assert_eq!(back, out.best);
    assert!(load_checkpoint::<f64>(&path).is_err());

    let again = fit::<f32>(&bundle, &split, &tiny_config(), &train).unwrap();
    assert_eq!(
        serde_json::to_string(&again.log).unwrap(),
        serde_json::to_string(&out.log).unwrap()
    );
    assert_eq!(again.best, out.best);
}

#[test]
fn mismatched_dimensions_are_rejected_before_training() {
    let bundle = tiny_bundle();
    let split = make_splits(&bundle, 1, 1).unwrap().remove(0);
    let wrong = ModelConfig::desk(12, 8);
    assert!(fit::<f32>(&bundle, &split, &wrong, &TrainConfig::default()).is_err());
    let zero_epochs = TrainConfig { epochs: 0, ..TrainConfig::default() };
    assert!(fit::<f32>(&bundle, &split, &tiny_config(), &zero_epochs).is_err());
}
