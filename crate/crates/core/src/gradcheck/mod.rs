//! Central finite-difference gradient checking.
//!
//! The numerical side only ever evaluates forward passes with gradients
//! disabled, so it stays independent of the backward rules under test.

mod suite;

pub use suite::{
    block_cases, cases, op_cases, run, Case, CaseResult, Scope, BLOCK_TOL, MODEL_TOL, OPS_TOL,
};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{no_grad, Tensor};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Added to `|numeric|` in the relative-error denominator.
    pub denom_floor: f64,
    /// Check at most this many elements per input (all when `None`).
    pub max_elements: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            denom_floor: 1e-8,
            max_elements: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// (input index, element index) of the worst relative error.
    pub worst: (usize, usize),
    /// Analytic and finite-difference values at `worst`.
    pub worst_values: (f64, f64),
    /// Largest finite-difference magnitude seen.
    pub max_numeric: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err.is_finite() && self.max_rel_err < tol
    }

    /// Largest absolute error relative to the largest gradient entry. Less
    /// sensitive than the elementwise ratio to entries whose true value is
    /// near zero and therefore dominated by finite-difference noise.
    pub fn normwise_rel_err(&self) -> f64 {
        self.max_abs_err / (self.max_numeric + 1e-300)
    }
}

/// Compares the autodiff gradient of the scalar `f(inputs)` against central
/// differences for every input tensor.
pub fn check<F>(
    name: &str,
    inputs: &[Tensor<f64>],
    f: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let leaves: Vec<Tensor<f64>> = inputs.iter().map(|t| t.clone().into_leaf(true)).collect();
    let loss = f(&leaves)?;
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let _guard = no_grad();
    let base: Vec<Tensor<f64>> = inputs.iter().map(Tensor::detach).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        name: name.to_string(),
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst: (0, 0),
        worst_values: (0.0, 0.0),
        max_numeric: 0.0,
        checked: 0,
    };
    for (i, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let picks: Vec<usize> = match opts.max_elements {
            Some(m) if m < n => {
                let mut v = sample(&mut rng, n, m).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        for j in picks {
            let eval = |delta: f64| -> Result<f64> {
                let mut data = input.to_vec();
                data[j] += delta;
                let mut args = base.clone();
                args[i] = Tensor::from_vec(input.shape(), data)?;
                f(&args)?.item()
            };
            let numeric = (eval(opts.step)? - eval(-opts.step)?) / (2.0 * opts.step);
            let abs = (analytic[i][j] - numeric).abs();
            let rel = abs / (numeric.abs() + opts.denom_floor);
            report.checked += 1;
            report.max_abs_err = report.max_abs_err.max(abs);
            report.max_numeric = report.max_numeric.max(numeric.abs());
            if rel > report.max_rel_err || rel.is_nan() {
                report.max_rel_err = rel;
                report.worst = (i, j);
                report.worst_values = (analytic[i][j], numeric);
            }
        }
    }
    Ok(report)
}

/// Tensor with entries drawn uniformly from `[-1, 1)`.
pub fn uniform(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .expect("valid shape")
}

/// `Σ y ⊙ w`: a scalar probe whose gradient with respect to `y` is `w`.
pub fn probe_loss(y: &Tensor<f64>, weights: &Tensor<f64>) -> Result<Tensor<f64>> {
    Ok(y.mul(weights)?.sum())
}
