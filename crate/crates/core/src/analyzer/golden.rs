use super::audit::{audit, CostReport};
use crate::error::Result;
use crate::glnet::ModelSpec;

/// Relative tolerance on published totals.
pub const GOLDEN_TOL: f64 = 0.05;

/// A published cost figure at 224×224.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Golden {
    pub model: &'static str,
    pub gmacs: f64,
    /// Some rows only quote a FLOPs figure.
    pub mparams: Option<f64>,
}

const fn g(model: &'static str, gmacs: f64, mparams: Option<f64>) -> Golden {
    Golden {
        model,
        gmacs,
        mparams,
    }
}

/// Presets and the ablation rows every audit must reproduce.
pub const GOLDEN: [Golden; 8] = [
    g("stl", 4.4, Some(30.3)),
    g("4g", 4.5, Some(27.0)),
    g("9g", 9.7, Some(61.0)),
    g("16g", 16.7, Some(106.0)),
    g("stl_local_only", 3.8, Some(26.4)),
    g("stl_global_only", 3.8, Some(28.3)),
    g("stl_slots9", 3.9, None),
    g("stl_slots81", 4.5, None),
];

/// The remaining rows of the design-choice ablation. Informative only.
pub const GOLDEN_EXTRA: [Golden; 9] = [
    g("stl_seq_global_first", 4.4, Some(30.3)),
    g("stl_seq_local_first", 4.4, Some(30.3)),
    g("stl_wmhsa_local", 5.0, Some(32.2)),
    g("stl_static_slots", 4.4, Some(30.5)),
    g("stl_k7", 4.4, Some(30.3)),
    g("stl_k3", 4.3, Some(30.4)),
    g("stl_slots25", 4.0, Some(30.3)),
    g("stl_slots36", 4.1, Some(30.3)),
    g("stl_slots49", 4.2, Some(30.3)),
];

/// Cumulative architecture changes from the base model to GLNet-4G.
pub const EVOLUTION: [Golden; 6] = [
    g("stl", 4.4, Some(30.3)),
    g("evo_overlap", 4.7, Some(32.3)),
    g("evo_hybrid", 4.8, Some(31.4)),
    g("evo_cpe", 4.8, Some(31.4)),
    g("evo_deeper", 4.5, Some(26.8)),
    g("evo_conv_ffn", 4.5, Some(27.0)),
];

#[derive(Debug, Clone)]
pub struct GoldenCheck {
    pub golden: Golden,
    pub report: CostReport,
    pub macs_rel_err: f64,
    pub params_rel_err: Option<f64>,
}

impl GoldenCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.macs_rel_err.abs() <= tol && self.params_rel_err.is_none_or(|e| e.abs() <= tol)
    }

    pub fn line(&self, tol: f64) -> String {
        let params = match (self.golden.mparams, self.params_rel_err) {
            (Some(p), Some(e)) => {
                format!("{:.2}M vs {p}M ({:+.1}%)", self.report.mparams(), 100.0 * e)
            }
            _ => format!("{:.2}M", self.report.mparams()),
        };
        format!(
            "{:<22} {:.3}G vs {}G ({:+.1}%)  {params}  {}",
            self.golden.model,
            self.report.gmacs(),
            self.golden.gmacs,
            100.0 * self.macs_rel_err,
            if self.passed(tol) { "ok" } else { "MISS" }
        )
    }
}

fn rel(actual: f64, expected: f64) -> f64 {
    (actual - expected) / expected
}

/// Audits each model at 224² against its published totals. Errors are
/// signed relative deviations.
pub fn check_golden(table: &[Golden]) -> Result<Vec<GoldenCheck>> {
    table
        .iter()
        .map(|&golden| {
            let report = audit(&ModelSpec::by_name(golden.model)?, 224)?;
            Ok(GoldenCheck {
                golden,
                macs_rel_err: rel(report.gmacs(), golden.gmacs),
                params_rel_err: golden.mparams.map(|p| rel(report.mparams(), p)),
                report,
            })
        })
        .collect()
}
