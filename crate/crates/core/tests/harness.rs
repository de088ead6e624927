use glnet_core::glnet::checkpoint;
use glnet_core::glnet::ModelSpec;
use glnet_core::harness::{
    learning_rate, train, train_to_dir, AdamW, DataConfig, ModelRef, OptimizerConfig,
    ScheduleConfig, SyntheticDataset, TrainConfig, CHECKPOINT_FILE, CONFIG_FILE, EVAL_FILE,
    METRICS_FILE,
};
use glnet_core::nn::ParamStore;
use glnet_core::{Error, Tensor};

fn short(steps: usize) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size: 8,
        eval_samples: 16,
        ..Default::default()
    }
}

#[test]
fn config_round_trips() {
    let mut c = TrainConfig::default();
    assert_eq!(TrainConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
    c.model = ModelRef::Inline(ModelSpec::micro());
    c.optimizer.grad_clip = None;
    assert_eq!(TrainConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    c.save(&path).unwrap();
    assert_eq!(TrainConfig::load(&path).unwrap(), c);
}

#[test]
fn config_rejects_unknown_keys_and_bad_values() {
    let good = serde_json::to_value(TrainConfig::default()).unwrap();
    let mut v = good.clone();
    v["learning_rate"] = 1.0.into();
    assert!(matches!(
        TrainConfig::from_json(&v.to_string()),
        Err(Error::Json(_))
    ));
    let mut v = good.clone();
    v["optimizer"]["momentum"] = 0.9.into();
    assert!(TrainConfig::from_json(&v.to_string()).is_err());
    for (path, bad) in [
        (vec!["version"], serde_json::json!(2)),
        (vec!["optimizer", "lr"], serde_json::json!(0.0)),
        (vec!["steps"], serde_json::json!(0)),
        (vec!["model"], serde_json::json!("nope")),
        (vec!["data", "image_size"], serde_json::json!(48)),
        (vec!["data", "num_classes"], serde_json::json!(3)),
    ] {
        let mut v = good.clone();
        let mut slot = &mut v;
        for k in &path {
            slot = &mut slot[*k];
        }
        *slot = bad;
        assert!(TrainConfig::from_json(&v.to_string()).is_err(), "{path:?}");
    }
}

#[test]
fn dataset_is_deterministic_and_balanced() {
    let d = SyntheticDataset::new(DataConfig::default(), 3).unwrap();
    assert_eq!(d.sample(17), d.sample(17));
    assert_ne!(
        d.sample(17).0,
        SyntheticDataset::new(DataConfig::default(), 4)
            .unwrap()
            .sample(17)
            .0
    );
    let (x, y) = d.batch::<f64>(0, 8).unwrap();
    assert_eq!(x.shape(), [8, 3, 32, 32]);
    assert_eq!(y, [0, 1, 2, 3, 0, 1, 2, 3]);
    assert!(x.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    assert!(SyntheticDataset::new(
        DataConfig {
            num_classes: 3,
            ..Default::default()
        },
        0
    )
    .is_err());
}

#[test]
fn class_pixel_means_coincide() {
    // Averaged over many samples, no pixel carries the label on its own.
    let d = SyntheticDataset::new(
        DataConfig {
            noise: 0.0,
            ..Default::default()
        },
        0,
    )
    .unwrap();
    let per_class = 400;
    let mut means = vec![vec![0.0; 3 * 32 * 32]; 4];
    for i in 0..4 * per_class {
        let (img, label) = d.sample(i as u64);
        for (m, v) in means[label].iter_mut().zip(img) {
            *m += v / per_class as f64;
        }
    }
    let worst = means.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(worst < 0.15, "{worst}");
}

#[test]
fn schedule_warms_up_then_decays() {
    let s = ScheduleConfig {
        warmup_steps: 10,
        min_lr: 1e-5,
    };
    assert!((learning_rate(0, 100, 1e-3, &s) - 1e-4).abs() < 1e-15);
    assert!((learning_rate(9, 100, 1e-3, &s) - 1e-3).abs() < 1e-15);
    let tail: Vec<f64> = (10..100).map(|i| learning_rate(i, 100, 1e-3, &s)).collect();
    assert!(tail.windows(2).all(|w| w[1] <= w[0]));
    assert!((learning_rate(100, 100, 1e-3, &s) - 1e-5).abs() < 1e-15);
}

#[test]
fn adamw_first_step_and_decoupled_decay() {
    let mut ps = ParamStore::<f64>::new();
    let w = ps
        .insert("w".into(), Tensor::from_f64(&[1, 2], &[1.0, -1.0]).unwrap())
        .unwrap();
    let b = ps
        .insert("b".into(), Tensor::from_f64(&[2], &[1.0, -1.0]).unwrap())
        .unwrap();
    let cfg = OptimizerConfig {
        weight_decay: 0.1,
        ..Default::default()
    };
    let mut opt = AdamW::new(cfg, &ps);
    let grads = vec![vec![0.5, -2.0], vec![0.5, -2.0]];
    opt.step(&mut ps, &grads, 0.01).unwrap();
    // bias-corrected first step moves each entry by lr against its gradient sign
    let bv = ps.get(b).data().to_vec();
    assert!((bv[0] - 0.99).abs() < 1e-9 && (bv[1] + 0.99).abs() < 1e-9);
    let wv = ps.get(w).data().to_vec();
    assert!((wv[0] - (1.0 * (1.0 - 0.001) - 0.01)).abs() < 1e-9);
    let mut g = vec![vec![3.0, 4.0]];
    assert_eq!(AdamW::clip(&mut g, Some(1.0)), 5.0);
    assert!((g[0][0] - 0.6).abs() < 1e-12 && (g[0][1] - 0.8).abs() < 1e-12);
}

#[test]
fn first_loss_is_near_chance() {
    let mut first = None;
    train(&short(1), |r| first = Some(r.loss)).unwrap();
    let l = first.unwrap();
    assert!((l - 4f64.ln()).abs() < 0.1 * 4f64.ln(), "{l}");
}

#[test]
fn equal_seeds_give_identical_curves() {
    let a = train(&short(15), |_| {}).unwrap();
    let b = train(&short(15), |_| {}).unwrap();
    let bits = |o: &glnet_core::harness::TrainOutcome| -> Vec<u64> {
        o.records.iter().map(|r| r.loss.to_bits()).collect()
    };
    assert_eq!(bits(&a), bits(&b));
    let c = train(
        &TrainConfig {
            seed: 1,
            ..short(15)
        },
        |_| {},
    )
    .unwrap();
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn diverging_run_aborts_with_a_report() {
    let mut c = short(50);
    c.optimizer.lr = 1e30;
    c.schedule.min_lr = 0.0;
    c.schedule.warmup_steps = 0;
    match train(&c, |_| {}) {
        Err(Error::NonFiniteLoss { step, .. }) => assert!(step < 50),
        other => panic!(
            "expected a non-finite loss abort, got {:?}",
            other.map(|o| o.records.len())
        ),
    }
}

#[test]
fn training_writes_log_and_loadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_to_dir(&short(5), dir.path(), |_| {}).unwrap();
    let log = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(
        log.lines().next().unwrap(),
        "step,lr,loss,accuracy,grad_norm"
    );
    assert_eq!(log.lines().count(), 6);
    assert!(dir.path().join(EVAL_FILE).exists());
    assert_eq!(
        TrainConfig::load(&dir.path().join(CONFIG_FILE)).unwrap(),
        short(5)
    );
    let back = checkpoint::load::<f32>(&dir.path().join(CHECKPOINT_FILE)).unwrap();
    let (x, _) = SyntheticDataset::new(DataConfig::default(), 9)
        .unwrap()
        .batch::<f32>(0, 4)
        .unwrap();
    assert_eq!(
        back.logits(&x).unwrap().data(),
        out.model.logits(&x).unwrap().data()
    );
}
