use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::audit::audit;
use crate::error::{Error, Result};
use crate::glnet::{GlNetModel, ModelSpec};
use crate::tensor::{counter, no_grad, Tensor};

/// Relative agreement required between the two counts of every module.
pub const RUNTIME_TOL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ModuleComparison {
    pub name: String,
    pub closed_macs: u64,
    pub counted_macs: u64,
    pub closed_params: u64,
    pub built_params: u64,
}

impl ModuleComparison {
    pub fn macs_rel_err(&self) -> f64 {
        rel(self.counted_macs, self.closed_macs)
    }

    pub fn params_rel_err(&self) -> f64 {
        rel(self.built_params, self.closed_params)
    }

    fn worst_err(&self) -> f64 {
        self.macs_rel_err().max(self.params_rel_err())
    }
}

fn rel(a: u64, b: u64) -> f64 {
    if a == b {
        0.0
    } else {
        a.abs_diff(b) as f64 / b.max(1) as f64
    }
}

/// Per-module comparison of the closed-form audit with an instrumented
/// forward pass and the parameters of a built model.
#[derive(Debug, Clone)]
pub struct RuntimeAudit {
    pub model: String,
    pub resolution: usize,
    pub modules: Vec<ModuleComparison>,
    /// Costs or parameters the instrumentation saw outside every audited
    /// module.
    pub unattributed_macs: BTreeMap<String, u64>,
    pub unattributed_params: BTreeMap<String, u64>,
}

impl RuntimeAudit {
    pub fn closed_total(&self) -> u64 {
        self.modules.iter().map(|m| m.closed_macs).sum()
    }

    pub fn counted_total(&self) -> u64 {
        self.modules.iter().map(|m| m.counted_macs).sum::<u64>()
            + self.unattributed_macs.values().sum::<u64>()
    }

    pub fn total_rel_err(&self) -> f64 {
        rel(self.counted_total(), self.closed_total())
    }

    pub fn worst(&self) -> Option<&ModuleComparison> {
        self.modules
            .iter()
            .max_by(|a, b| a.worst_err().total_cmp(&b.worst_err()))
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.unattributed_macs.values().all(|&v| v == 0)
            && self.unattributed_params.is_empty()
            && self.modules.iter().all(|m| m.worst_err() <= tol)
    }

    /// Names the worst module, or the first unattributed cost.
    pub fn defect_report(&self) -> String {
        let mut s = format!("{} @ {}: ", self.model, self.resolution);
        if let Some((k, v)) = self.unattributed_macs.iter().find(|(_, &v)| v > 0) {
            let _ = write!(s, "{v} ops counted in unaudited scope `{k}`");
        } else if let Some((k, v)) = self.unattributed_params.iter().next() {
            let _ = write!(s, "{v} parameters under unaudited prefix `{k}`");
        } else if let Some(m) = self.worst() {
            let _ = write!(
                s,
                "worst module `{}`: counted {} vs closed form {} ops ({:.3}%), params {} vs {}",
                m.name,
                m.counted_macs,
                m.closed_macs,
                100.0 * m.macs_rel_err(),
                m.built_params,
                m.closed_params
            );
        }
        s
    }

    /// Ok when every module agrees within `tol`, else an audit error naming
    /// the worst offender.
    pub fn ensure(&self, tol: f64) -> Result<()> {
        if self.passed(tol) {
            Ok(())
        } else {
            Err(Error::Audit(self.defect_report()))
        }
    }
}

/// Runs one f32 forward pass of `spec` at `resolution²` under the operation
/// counter and pairs every counted scope and parameter with its audit row.
pub fn audit_matches_runtime(spec: &ModelSpec, resolution: usize) -> Result<RuntimeAudit> {
    let report = audit(spec, resolution)?;
    let model = GlNetModel::<f32>::build(spec, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = spec.in_channels * resolution * resolution;
    let pixels: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let images = Tensor::<f32>::from_f64(&[1, spec.in_channels, resolution, resolution], &pixels)?;
    let (logits, counts) = counter::count(|| {
        let _g = no_grad();
        model.logits(&images)
    });
    logits?;

    let mut params: BTreeMap<String, u64> = BTreeMap::new();
    let mut unattributed_params = BTreeMap::new();
    for (_, name, t) in model.params.iter() {
        let owner = report
            .rows
            .iter()
            .filter(|r| name.starts_with(&r.name) && name[r.name.len()..].starts_with('.'))
            .max_by_key(|r| r.name.len());
        match owner {
            Some(r) => *params.entry(r.name.clone()).or_default() += t.numel() as u64,
            None => *unattributed_params.entry(name.to_string()).or_default() += t.numel() as u64,
        }
    }

    let mut unattributed_macs = BTreeMap::new();
    for scope in counts.by_scope.keys() {
        if report.row(scope).is_none() {
            unattributed_macs.insert(scope.clone(), counts.scope_total(scope));
        }
    }
    let modules = report
        .rows
        .iter()
        .map(|r| ModuleComparison {
            name: r.name.clone(),
            closed_macs: r.macs.total(),
            counted_macs: counts.scope_total(&r.name),
            closed_params: r.params,
            built_params: params.get(&r.name).copied().unwrap_or(0),
        })
        .collect();
    Ok(RuntimeAudit {
        model: spec.name.clone(),
        resolution,
        modules,
        unattributed_macs,
        unattributed_params,
    })
}
