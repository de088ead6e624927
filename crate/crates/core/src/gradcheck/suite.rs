//! Registered finite-difference cases, grouped by scope.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check, probe_loss, uniform, GradCheckOptions, GradCheckReport};
use crate::error::{Error, Result};
use crate::glmix::{cluster, dispatch, GlMix, GlMixConfig};
use crate::nn::{ConvPosEnc, Downsample, Ffn, Init, Mhsa, ParamStore, PatchEmbed};
use crate::tensor::{Tensor, LAYER_NORM_EPS};

/// Tolerance on the elementwise relative error for single primitives.
pub const OPS_TOL: f64 = 1e-6;
/// Tolerance for composite layers and the GLMix block.
pub const BLOCK_TOL: f64 = 1e-4;
/// Tolerance for end-to-end spot checks through a whole network.
pub const MODEL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Ops,
    Block,
    Model,
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ops" => Ok(Scope::Ops),
            "block" => Ok(Scope::Block),
            "model" => Ok(Scope::Model),
            _ => Err(Error::config(format!(
                "unknown gradcheck scope `{s}` (ops, block, model)"
            ))),
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Ops => "ops",
            Scope::Block => "block",
            Scope::Model => "model",
        })
    }
}

pub struct Case {
    pub name: &'static str,
    pub tol: f64,
    run: fn(&mut ChaCha8Rng) -> Result<GradCheckReport>,
}

impl Case {
    pub const fn new(
        name: &'static str,
        tol: f64,
        run: fn(&mut ChaCha8Rng) -> Result<GradCheckReport>,
    ) -> Self {
        Case { name, tol, run }
    }
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub name: String,
    pub tol: f64,
    pub report: GradCheckReport,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.report.passes(self.tol)
    }
}

/// Checks `f(inputs)` through a fixed random probe of its output.
fn probe(
    name: &str,
    rng: &mut ChaCha8Rng,
    inputs: Vec<Tensor<f64>>,
    f: impl Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
) -> Result<GradCheckReport> {
    let shape = {
        let _g = crate::tensor::no_grad();
        f(&inputs)?.shape().to_vec()
    };
    let r = uniform(&shape, rng);
    check(
        name,
        &inputs,
        |a| probe_loss(&f(a)?, &r),
        &GradCheckOptions::default(),
    )
}

fn u(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    uniform(shape, rng)
}

/// Same as `u` but bounded away from zero, for divisors.
fn positive(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    uniform(shape, rng).scale(0.5).add_scalar(1.0)
}

fn conv_case(
    rng: &mut ChaCha8Rng,
    name: &str,
    x: &[usize],
    w: &[usize],
    stride: usize,
    pad: usize,
    groups: usize,
) -> Result<GradCheckReport> {
    let inputs = vec![u(rng, x), u(rng, w), u(rng, &[w[0]])];
    probe(name, rng, inputs, |a| {
        a[0].conv2d(&a[1], Some(&a[2]), stride, pad, groups)
    })
}

/// Checks a parameterized layer at its initial weights w.r.t. its input and
/// every parameter.
fn layer_case<L>(
    name: &str,
    rng: &mut ChaCha8Rng,
    x_shape: &[usize],
    build: impl FnOnce(&mut Init<'_, f64>) -> Result<L>,
    forward: impl Fn(&L, &ParamStore<f64>, &Tensor<f64>) -> Result<Tensor<f64>>,
) -> Result<GradCheckReport> {
    let mut ps = ParamStore::new();
    let mut init_rng = ChaCha8Rng::seed_from_u64(7);
    let layer = build(&mut Init::new(&mut ps, &mut init_rng))?;
    let mut inputs = vec![u(rng, x_shape)];
    inputs.extend(ps.tensors().iter().map(Tensor::detach));
    probe(name, rng, inputs, |a| {
        let store = ps.with_tensors(a[1..].to_vec())?;
        forward(&layer, &store, &a[0])
    })
}

pub fn op_cases() -> Vec<Case> {
    vec![
        Case::new("add", OPS_TOL, |r| {
            let i = vec![u(r, &[2, 3, 4]), u(r, &[2, 3, 4])];
            probe("add", r, i, |a| a[0].add(&a[1]))
        }),
        Case::new("sub", OPS_TOL, |r| {
            let i = vec![u(r, &[2, 3, 4]), u(r, &[2, 3, 4])];
            probe("sub", r, i, |a| a[0].sub(&a[1]))
        }),
        Case::new("mul", OPS_TOL, |r| {
            let i = vec![u(r, &[2, 3, 4]), u(r, &[2, 3, 4])];
            probe("mul", r, i, |a| a[0].mul(&a[1]))
        }),
        Case::new("scale", OPS_TOL, |r| {
            let i = vec![u(r, &[3, 5])];
            probe("scale", r, i, |a| Ok(a[0].scale(-0.7)))
        }),
        Case::new("add_scalar", OPS_TOL, |r| {
            let i = vec![u(r, &[3, 5])];
            probe("add_scalar", r, i, |a| Ok(a[0].add_scalar(0.3)))
        }),
        Case::new("neg", OPS_TOL, |r| {
            let i = vec![u(r, &[3, 5])];
            probe("neg", r, i, |a| Ok(a[0].neg()))
        }),
        Case::new("div_scalar_tensor", OPS_TOL, |r| {
            let i = vec![u(r, &[3, 5]), positive(r, &[1])];
            probe("div_scalar_tensor", r, i, |a| a[0].div_scalar_tensor(&a[1]))
        }),
        Case::new("mul_per_sample", OPS_TOL, |r| {
            let i = vec![u(r, &[3, 2, 4]), u(r, &[3])];
            probe("mul_per_sample", r, i, |a| a[0].mul_per_sample(&a[1]))
        }),
        Case::new("expand_batch", OPS_TOL, |r| {
            let i = vec![u(r, &[2, 3])];
            probe("expand_batch", r, i, |a| a[0].expand_batch(3))
        }),
        Case::new("reshape", OPS_TOL, |r| {
            let i = vec![u(r, &[2, 3, 4])];
            probe("reshape", r, i, |a| a[0].reshape(&[4, 6]))
        }),
        Case::new("flatten", OPS_TOL, |r| {
            let i = vec![u(r, &[2, 3, 2, 2])];
            probe("flatten", r, i, |a| a[0].flatten(2, 3))
        }),
        Case::new("unflatten", OPS_TOL, |r| {
            let i = vec![u(r, &[2, 3, 6])];
            probe("unflatten", r, i, |a| a[0].unflatten(2, &[2, 3]))
        }),
        Case::new("permute", OPS_TOL, |r| {
            let i = vec![u(r, &[2, 3, 4])];
            probe("permute", r, i, |a| a[0].permute(&[2, 0, 1]))
        }),
        Case::new("transpose", OPS_TOL, |r| {
            let i = vec![u(r, &[2, 3, 4])];
            probe("transpose", r, i, |a| a[0].transpose(1, 2))
        }),
        Case::new("sum", OPS_TOL, |r| {
            let i = vec![u(r, &[3, 4])];
            probe("sum", r, i, |a| Ok(a[0].sum()))
        }),
        Case::new("mean", OPS_TOL, |r| {
            let i = vec![u(r, &[3, 4])];
            probe("mean", r, i, |a| Ok(a[0].mean()))
        }),
        Case::new("sum_axis", OPS_TOL, |r| {
            let i = vec![u(r, &[2, 3, 4])];
            probe("sum_axis", r, i, |a| a[0].sum_axis(1))
        }),
        Case::new("mean_axis", OPS_TOL, |r| {
            let i = vec![u(r, &[2, 3, 4])];
            probe("mean_axis", r, i, |a| a[0].mean_axis(2))
        }),
        Case::new("matmul", OPS_TOL, |r| {
            let i = vec![u(r, &[2, 3, 4]), u(r, &[2, 4, 5])];
            probe("matmul", r, i, |a| a[0].matmul(&a[1]))
        }),
        Case::new("matmul_broadcast_rhs", OPS_TOL, |r| {
            let i = vec![u(r, &[2, 3, 4]), u(r, &[4, 5])];
            probe("matmul_broadcast_rhs", r, i, |a| a[0].matmul(&a[1]))
        }),
        Case::new("matmul_broadcast_lhs", OPS_TOL, |r| {
            let i = vec![u(r, &[3, 4]), u(r, &[2, 4, 5])];
            probe("matmul_broadcast_lhs", r, i, |a| a[0].matmul(&a[1]))
        }),
        Case::new("linear", OPS_TOL, |r| {
            let i = vec![u(r, &[2, 3, 4]), u(r, &[5, 4]), u(r, &[5])];
            probe("linear", r, i, |a| a[0].linear(&a[1], Some(&a[2])))
        }),
        Case::new("conv2d", OPS_TOL, |r| {
            conv_case(r, "conv2d", &[2, 3, 5, 5], &[4, 3, 3, 3], 1, 1, 1)
        }),
        Case::new("conv2d_strided", OPS_TOL, |r| {
            conv_case(r, "conv2d_strided", &[1, 3, 6, 6], &[4, 3, 3, 3], 2, 1, 1)
        }),
        Case::new("conv2d_patch", OPS_TOL, |r| {
            conv_case(r, "conv2d_patch", &[1, 3, 8, 8], &[4, 3, 4, 4], 4, 0, 1)
        }),
        Case::new("conv2d_grouped", OPS_TOL, |r| {
            conv_case(r, "conv2d_grouped", &[1, 4, 5, 5], &[6, 2, 3, 3], 1, 1, 2)
        }),
        Case::new("conv2d_depthwise", OPS_TOL, |r| {
            conv_case(r, "conv2d_depthwise", &[1, 4, 6, 6], &[4, 1, 5, 5], 1, 2, 4)
        }),
        Case::new("conv2d_pointwise", OPS_TOL, |r| {
            conv_case(r, "conv2d_pointwise", &[2, 3, 4, 4], &[5, 3, 1, 1], 1, 0, 1)
        }),
        Case::new("adaptive_avg_pool2d", OPS_TOL, |r| {
            let i = vec![u(r, &[1, 2, 5, 7])];
            probe("adaptive_avg_pool2d", r, i, |a| {
                a[0].adaptive_avg_pool2d(2, 3)
            })
        }),
        Case::new("layer_norm", OPS_TOL, |r| {
            let i = vec![u(r, &[2, 4, 3, 3]), u(r, &[4]), u(r, &[4])];
            probe("layer_norm", r, i, |a| {
                a[0].layer_norm(1, &a[1], &a[2], LAYER_NORM_EPS)
            })
        }),
        Case::new("layer_norm_last_axis", OPS_TOL, |r| {
            let i = vec![u(r, &[2, 3, 6]), u(r, &[6]), u(r, &[6])];
            probe("layer_norm_last_axis", r, i, |a| {
                a[0].layer_norm(2, &a[1], &a[2], LAYER_NORM_EPS)
            })
        }),
        Case::new("l2_normalize", OPS_TOL, |r| {
            let i = vec![u(r, &[2, 4, 5])];
            probe("l2_normalize", r, i, |a| a[0].l2_normalize(1, 1e-8))
        }),
        Case::new("softmax", OPS_TOL, |r| {
            let i = vec![u(r, &[2, 3, 5]).scale(3.0)];
            probe("softmax", r, i, |a| a[0].softmax(2))
        }),
        Case::new("softmax_inner_axis", OPS_TOL, |r| {
            let i = vec![u(r, &[2, 4, 3]).scale(3.0)];
            probe("softmax_inner_axis", r, i, |a| a[0].softmax(1))
        }),
        Case::new("gelu", OPS_TOL, |r| {
            let i = vec![u(r, &[3, 7]).scale(3.0)];
            probe("gelu", r, i, |a| Ok(a[0].gelu()))
        }),
        Case::new("cross_entropy", OPS_TOL, |r| {
            let i = vec![u(r, &[4, 5]).scale(2.0)];
            probe("cross_entropy", r, i, |a| a[0].cross_entropy(&[0, 3, 4, 1]))
        }),
    ]
}

pub fn block_cases() -> Vec<Case> {
    vec![
        Case::new("mhsa", BLOCK_TOL, |r| {
            layer_case(
                "mhsa",
                r,
                &[1, 4, 8],
                |i| Mhsa::new(i, "attn", 8, 2),
                |l, ps, x| l.forward(ps, x),
            )
        }),
        Case::new("ffn", BLOCK_TOL, |r| {
            layer_case(
                "ffn",
                r,
                &[1, 4, 8],
                |i| Ffn::new(i, "ffn", 8, 3, false),
                |l, ps, x| l.forward(ps, x),
            )
        }),
        Case::new("conv_ffn", BLOCK_TOL, |r| {
            layer_case(
                "conv_ffn",
                r,
                &[1, 4, 4, 4],
                |i| Ffn::new(i, "ffn", 4, 2, true),
                |l, ps, x| l.forward(ps, x),
            )
        }),
        Case::new("patch_embed", BLOCK_TOL, |r| {
            layer_case(
                "patch_embed",
                r,
                &[1, 3, 8, 8],
                |i| PatchEmbed::new(i, "stem", 3, 8, false),
                |l, ps, x| l.forward(ps, x),
            )
        }),
        Case::new("patch_embed_overlapped", BLOCK_TOL, |r| {
            layer_case(
                "patch_embed_overlapped",
                r,
                &[1, 3, 8, 8],
                |i| PatchEmbed::new(i, "stem", 3, 8, true),
                |l, ps, x| l.forward(ps, x),
            )
        }),
        Case::new("downsample", BLOCK_TOL, |r| {
            layer_case(
                "downsample",
                r,
                &[1, 3, 4, 4],
                |i| Downsample::new(i, "down", 3, false),
                |l, ps, x| l.forward(ps, x),
            )
        }),
        Case::new("downsample_overlapped", BLOCK_TOL, |r| {
            layer_case(
                "downsample_overlapped",
                r,
                &[1, 3, 4, 4],
                |i| Downsample::new(i, "down", 3, true),
                |l, ps, x| l.forward(ps, x),
            )
        }),
        Case::new("conv_pos_enc", BLOCK_TOL, |r| {
            layer_case(
                "conv_pos_enc",
                r,
                &[1, 4, 5, 5],
                |i| ConvPosEnc::new(i, "cpe", 4),
                |l, ps, x| l.forward(ps, x),
            )
        }),
        Case::new("cluster_dispatch", BLOCK_TOL, |r| {
            let i = vec![
                u(r, &[1, 4, 5, 5]),
                positive(r, &[1]).scale(0.3),
                u(r, &[1, 4, 4]),
            ];
            probe("cluster_dispatch", r, i, |a| {
                let (slots, state) = cluster(&a[0], &a[1], 4, None)?;
                dispatch(&slots.add(&a[2])?, &state)
            })
        }),
        Case::new("glmix_local_branch", BLOCK_TOL, |r| {
            let mut cfg = GlMixConfig::new(8, 4, 2);
            cfg.layout = crate::glmix::Layout::LocalOnly;
            layer_case(
                "glmix_local_branch",
                r,
                &[1, 8, 6, 6],
                |i| GlMix::new(i, "mixer", cfg),
                |l, ps, x| Ok(l.forward(ps, x)?.0),
            )
        }),
        Case::new("glmix_block", BLOCK_TOL, glmix_block_case),
    ]
}

/// The whole GLMix block at its initial weights on a 1×8×6×6 grid with 4 slots.
fn glmix_block_case(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let mut ps = ParamStore::new();
    let mut init_rng = ChaCha8Rng::seed_from_u64(21);
    let block = GlMix::new(
        &mut Init::new(&mut ps, &mut init_rng),
        "mixer",
        GlMixConfig::new(8, 4, 2),
    )?;
    let mut inputs = vec![u(rng, &[1, 8, 6, 6])];
    inputs.extend(ps.tensors().iter().map(Tensor::detach));
    probe("glmix_block", rng, inputs, |a| {
        let store = ps.with_tensors(a[1..].to_vec())?;
        Ok(block.forward(&store, &a[0])?.0)
    })
}

pub fn cases(scope: Scope) -> Vec<Case> {
    match scope {
        Scope::Ops => op_cases(),
        Scope::Block => block_cases(),
        Scope::Model => crate::harness::model_gradcheck_cases(),
    }
}

/// Runs every case of `scope`; each case draws from its own seeded stream.
pub fn run(scope: Scope, seed: u64) -> Result<Vec<CaseResult>> {
    cases(scope)
        .into_iter()
        .enumerate()
        .map(|(i, case)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            Ok(CaseResult {
                name: case.name.to_string(),
                tol: case.tol,
                report: (case.run)(&mut rng)?,
            })
        })
        .collect()
}
