//! Cost accounting.
//!
//! [`audit`] derives per-module parameter and operation counts of a model
//! spec in closed form, [`audit_matches_runtime`] checks them against an
//! instrumented forward pass, and [`scaling_benchmark`] times single mixers
//! across resolutions.
//!
//! One multiply-add counts as one operation. Norms count 2 per element,
//! softmax 4, activations 1 and pooling one per element read; these
//! elementwise terms are tracked separately so totals can exclude them.

mod audit;
mod golden;
mod runtime;
mod scaling;

pub use audit::{audit, CostReport, CostRow};
pub use golden::{check_golden, Golden, GoldenCheck, EVOLUTION, GOLDEN, GOLDEN_EXTRA, GOLDEN_TOL};
pub use runtime::{audit_matches_runtime, ModuleComparison, RuntimeAudit, RUNTIME_TOL};
pub use scaling::{
    fit_exponent, linear_fit, scaling_benchmark, BlockKind, ScalingPoint, ScalingResult,
    EMBED_STRIDE, REPEATS,
};
