use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::glnet::{ForwardOptions, GlNetModel, ModelSpec};
use crate::gradcheck::{check, uniform, Case, GradCheckOptions, GradCheckReport, MODEL_TOL};

/// Entries checked per parameter tensor.
const ENTRIES_PER_TENSOR: usize = 3;
/// Many parameters of a freshly initialized deep network get gradients of
/// 1e-9 and below, where central differences of an O(1) loss only resolve
/// about 1e-11. The floor keeps those entries from reading as failures.
const DENOM_FLOOR: f64 = 1e-6;

/// Cross-entropy of a two-image batch through the whole network, checked
/// at a few random entries of every parameter tensor.
fn model_case(name: &str, spec: ModelSpec, rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let model = GlNetModel::<f64>::build(&spec, 7)?;
    let x = uniform(&[2, spec.in_channels, 32, 32], rng);
    let labels = [
        rng.gen_range(0..spec.num_classes),
        rng.gen_range(0..spec.num_classes),
    ];
    let inputs = model.params.tensors().to_vec();
    let opts = GradCheckOptions {
        max_elements: Some(ENTRIES_PER_TENSOR),
        seed: rng.gen(),
        denom_floor: DENOM_FLOOR,
        ..Default::default()
    };
    check(
        name,
        &inputs,
        |a| {
            let store = model.params.with_tensors(a.to_vec())?;
            model
                .net
                .forward(&store, &x, ForwardOptions::default())?
                .logits
                .cross_entropy(&labels)
        },
        &opts,
    )
}

pub fn model_gradcheck_cases() -> Vec<Case> {
    vec![
        Case::new("micro_glnet", MODEL_TOL, |r| {
            model_case("micro_glnet", ModelSpec::micro(), r)
        }),
        Case::new("micro_glnet_advanced", MODEL_TOL, |r| {
            let spec = ModelSpec {
                name: "micro_advanced".into(),
                overlapped_embed: true,
                hybrid_stage3: true,
                conv_pos_enc: true,
                conv_ffn: true,
                ffn_ratio: 3,
                ..ModelSpec::micro()
            };
            model_case("micro_glnet_advanced", spec, r)
        }),
    ]
}
