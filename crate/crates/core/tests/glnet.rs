use std::collections::HashSet;

use glnet_core::glnet::checkpoint::{read_checkpoint, write_checkpoint};
use glnet_core::glnet::{ForwardOptions, GlNetModel, ModelSpec, PRESETS};
use glnet_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn images(b: usize, res: usize, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..b * 3 * res * res)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    Tensor::from_f64(&[b, 3, res, res], &data).unwrap()
}

#[test]
fn same_seed_builds_identical_parameters() {
    let a = GlNetModel::<f32>::build(&ModelSpec::stl(), 5).unwrap();
    let b = GlNetModel::<f32>::build(&ModelSpec::stl(), 5).unwrap();
    assert_eq!(a.params.names(), b.params.names());
    for (x, y) in a.params.tensors().iter().zip(b.params.tensors()) {
        assert_eq!(x.data(), y.data());
    }
    let names: HashSet<&String> = a.params.names().iter().collect();
    assert_eq!(names.len(), a.params.len());
    let c = GlNetModel::<f32>::build(&ModelSpec::stl(), 6).unwrap();
    assert!(a
        .params
        .tensors()
        .iter()
        .zip(c.params.tensors())
        .any(|(x, y)| x.data() != y.data()));
}

#[test]
fn initial_biases_are_zero_and_norm_gains_one() {
    let m = GlNetModel::<f64>::build(&ModelSpec::preset("4g").unwrap(), 0).unwrap();
    for (_, name, t) in m.params.iter() {
        if name.ends_with(".bias") {
            assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
        }
        if name.contains("norm") && name.ends_with(".weight") {
            assert!(t.data().iter().all(|&v| v == 1.0), "{name}");
        }
    }
}

#[test]
fn preset_parameter_totals() {
    for (name, expected) in [("stl", 30.3e6), ("4g", 27e6)] {
        let m = GlNetModel::<f32>::build(&ModelSpec::by_name(name).unwrap(), 0).unwrap();
        let n = m.params.num_scalars() as f64;
        assert!((n - expected).abs() / expected < 0.05, "{name}: {n}");
    }
}

#[test]
fn stages_run_at_quarter_to_thirty_second_resolution() {
    for name in PRESETS.iter().filter(|&&n| n != "micro") {
        let spec = ModelSpec::by_name(name).unwrap();
        let model = GlNetModel::<f32>::build(&spec, 0).unwrap();
        let out = model
            .forward(&images(1, 224, 1), ForwardOptions::default())
            .unwrap();
        assert_eq!(out.logits.shape(), [1, spec.num_classes]);
        assert!(out.logits.all_finite());
        for (s, shape) in out.stage_shapes.iter().enumerate() {
            let side = 224 / (4 << s);
            assert_eq!(
                shape,
                &[1, spec.stage_channels(s), side, side],
                "{name} stage {s}"
            );
        }
        // the last stage attends over 7 x 7 = 49 tokens
        assert_eq!(out.stage_shapes[3][2] * out.stage_shapes[3][3], 49);
    }
}

#[test]
fn logits_shape_at_256_and_non_square_inputs() {
    let spec = ModelSpec::stl();
    let model = GlNetModel::<f32>::build(&spec, 0).unwrap();
    assert_eq!(model.logits(&images(2, 256, 2)).unwrap().shape(), [2, 1000]);
    let micro = GlNetModel::<f32>::build(&ModelSpec::micro(), 0).unwrap();
    let x = Tensor::<f32>::zeros(&[1, 3, 32, 64]).unwrap();
    assert_eq!(micro.logits(&x).unwrap().shape(), [1, 4]);
    assert!(micro
        .logits(&Tensor::<f32>::zeros(&[1, 3, 48, 48]).unwrap())
        .is_err());
    assert!(micro
        .logits(&Tensor::<f32>::zeros(&[1, 1, 32, 32]).unwrap())
        .is_err());
}

#[test]
fn states_follow_glmix_blocks_in_order() {
    let spec = ModelSpec::preset("4g").unwrap();
    let spec = ModelSpec {
        base_channels: 16,
        blocks: [1, 1, 4, 1],
        num_slots: 4,
        num_classes: 4,
        ..spec
    };
    let model = GlNetModel::<f32>::build(&spec, 0).unwrap();
    let out = model
        .forward(
            &images(1, 64, 3),
            ForwardOptions {
                collect_states: true,
                ..Default::default()
            },
        )
        .unwrap();
    let blocks: Vec<usize> = out.states.iter().map(|s| s.block).collect();
    // stage 3 alternates GLMix and attention, starting with GLMix
    assert_eq!(blocks, [0, 1, 2, 4]);
}

#[test]
fn inference_is_deterministic_and_training_mode_drops_paths() {
    let spec = ModelSpec {
        drop_path: 0.5,
        ..ModelSpec::micro()
    };
    let model = GlNetModel::<f32>::build(&spec, 0).unwrap();
    let x = images(4, 32, 4);
    assert_eq!(
        model.logits(&x).unwrap().data(),
        model.logits(&x).unwrap().data()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let train = model
        .forward(
            &x,
            ForwardOptions {
                train_rng: Some(&mut rng),
                ..Default::default()
            },
        )
        .unwrap();
    assert_ne!(train.logits.data(), model.logits(&x).unwrap().data());
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    for spec in [ModelSpec::micro(), ModelSpec::preset("4g").unwrap()] {
        let model = GlNetModel::<f32>::build(&spec, 11).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        let back: GlNetModel<f32> = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back.spec(), model.spec());
        let res = if spec.name == "micro" { 32 } else { 64 };
        let x = images(2, res, 5);
        assert_eq!(
            back.logits(&x).unwrap().data(),
            model.logits(&x).unwrap().data()
        );
        assert!(read_checkpoint::<f32, _>(&buf[..buf.len() - 3]).is_err());
    }
    assert!(read_checkpoint::<f32, _>(&b"NOT-A-CHECKPOINT\n"[..]).is_err());
}
