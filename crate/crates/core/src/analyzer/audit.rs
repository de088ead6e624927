use std::fmt::Write as _;

use crate::error::Result;
use crate::glmix::{full_attention_cost, glmix_cost, Macs};
use crate::glnet::{MixerKind, ModelSpec};
use crate::tensor::counter::{ACTIVATION_OPS_PER_ELEMENT as ACT, NORM_OPS_PER_ELEMENT as NORM};

/// One module of a cost audit. Row names match both parameter-name prefixes
/// and the instrumentation scopes of the forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostRow {
    pub name: String,
    pub params: u64,
    pub macs: Macs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub model: String,
    pub resolution: usize,
    pub rows: Vec<CostRow>,
}

impl CostReport {
    pub fn total_params(&self) -> u64 {
        self.rows.iter().map(|r| r.params).sum()
    }

    pub fn total_macs(&self) -> Macs {
        self.rows
            .iter()
            .fold(Macs::default(), |acc, r| acc + r.macs)
    }

    /// Grand total in multiply-accumulates; `elementwise` toggles norms,
    /// softmax, activations and pooling.
    pub fn total(&self, elementwise: bool) -> u64 {
        let m = self.total_macs();
        if elementwise {
            m.total()
        } else {
            m.linear
        }
    }

    pub fn gmacs(&self) -> f64 {
        self.total(true) as f64 / 1e9
    }

    pub fn mparams(&self) -> f64 {
        self.total_params() as f64 / 1e6
    }

    pub fn row(&self, name: &str) -> Option<&CostRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("module,params,linear_macs,elementwise_ops,total\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.name,
                r.params,
                r.macs.linear,
                r.macs.elementwise,
                r.macs.total()
            );
        }
        let t = self.total_macs();
        let _ = writeln!(
            s,
            "total,{},{},{},{}",
            self.total_params(),
            t.linear,
            t.elementwise,
            t.total()
        );
        s
    }

    pub fn to_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut s = format!("{} @ {}x{}\n", self.model, self.resolution, self.resolution);
        let _ = writeln!(
            s,
            "{:<width$}  {:>12}  {:>15}  {:>13}",
            "module", "params", "linear MACs", "elementwise"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<width$}  {:>12}  {:>15}  {:>13}",
                r.name, r.params, r.macs.linear, r.macs.elementwise
            );
        }
        let t = self.total_macs();
        let _ = writeln!(
            s,
            "{:<width$}  {:>12}  {:>15}  {:>13}",
            "total",
            self.total_params(),
            t.linear,
            t.elementwise
        );
        let _ = writeln!(
            s,
            "= {:.2}M params, {:.3}G MACs",
            self.mparams(),
            self.gmacs()
        );
        s
    }
}

struct Rows(Vec<CostRow>);

impl Rows {
    fn push(&mut self, name: String, params: u64, macs: Macs) {
        self.0.push(CostRow { name, params, macs });
    }
}

fn conv(cin: u64, cout: u64, k: u64, groups: u64, out_pixels: u64) -> (u64, Macs) {
    let per_out = (cin / groups) * k * k;
    (
        cout * per_out + cout,
        Macs::new(out_pixels * cout * per_out, 0),
    )
}

fn layer_norm(c: u64, pixels: u64) -> (u64, Macs) {
    (2 * c, Macs::new(0, NORM * c * pixels))
}

fn conv_out(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    (n + 2 * pad - k) / stride + 1
}

/// Closed-form per-module audit of a backbone at `resolution × resolution`,
/// batch 1.
pub fn audit(spec: &ModelSpec, resolution: usize) -> Result<CostReport> {
    spec.validate()?;
    spec.check_resolution(resolution, resolution)?;
    let mut rows = Rows(Vec::new());
    let c0 = spec.base_channels as u64;
    let cin = spec.in_channels as u64;

    let mut side = resolution / 4;
    let (p, m) = if spec.overlapped_embed {
        let mid = (spec.base_channels / 2).max(1) as u64;
        let half = conv_out(resolution, 3, 2, 1);
        let half_px = (half * half) as u64;
        let (p1, m1) = conv(cin, mid, 3, 1, half_px);
        let (pn, mn) = layer_norm(mid, half_px);
        let gelu = Macs::new(0, ACT * mid * half_px);
        let q = conv_out(half, 3, 2, 1);
        let (p2, m2) = conv(mid, c0, 3, 1, (q * q) as u64);
        (p1 + pn + p2, m1 + mn + gelu + m2)
    } else {
        conv(cin, c0, 4, 1, (side * side) as u64)
    };
    let (pn, mn) = layer_norm(c0, (side * side) as u64);
    rows.push("stem".into(), p + pn, m + mn);

    for stage in 0..4 {
        let c = spec.stage_channels(stage) as u64;
        let n = (side * side) as u64;
        let e = spec.ffn_ratio as u64;
        for b in 0..spec.blocks[stage] {
            let name = format!("stages.{stage}.blocks.{b}");
            if spec.conv_pos_enc {
                let (p, m) = conv(c, c, 3, c, n);
                rows.push(format!("{name}.cpe"), p, m);
            }
            let (p, m) = layer_norm(c, n);
            rows.push(format!("{name}.norm1"), p, m);
            match spec.mixer_kind(stage, b) {
                MixerKind::GlMix => {
                    let g = glmix_cost(&spec.glmix_config(stage), side, side)?;
                    let cfg = spec.glmix_config(stage);
                    if cfg.layout.has_local() {
                        rows.push(format!("{name}.mixer.local"), g.local_params, g.local);
                    }
                    if cfg.layout.has_global() {
                        rows.push(format!("{name}.mixer.cluster"), g.cluster_params, g.cluster);
                        rows.push(
                            format!("{name}.mixer.slot_attn"),
                            g.slot_attn_params,
                            g.slot_attn,
                        );
                        rows.push(format!("{name}.mixer.dispatch"), 0, g.dispatch);
                    }
                }
                MixerKind::FullAttention => {
                    let (p, m) = full_attention_cost(side * side, c as usize, spec.heads(stage));
                    rows.push(format!("{name}.attn"), p, m);
                }
            }
            let (p, m) = layer_norm(c, n);
            rows.push(format!("{name}.norm2"), p, m);
            let hidden = e * c;
            let mut p = 2 * hidden * c + hidden + c;
            let mut m = Macs::new(2 * hidden * c * n, ACT * hidden * n);
            if spec.conv_ffn {
                let (pd, md) = conv(hidden, hidden, 3, hidden, n);
                p += pd;
                m += md;
            }
            rows.push(format!("{name}.ffn"), p, m);
        }
        if stage < 3 {
            let (k, pad) = if spec.overlapped_embed {
                (3, 1)
            } else {
                (2, 0)
            };
            let next = conv_out(side, k, 2, pad);
            let (p, m) = conv(c, 2 * c, k as u64, 1, (next * next) as u64);
            let (pn, mn) = layer_norm(2 * c, (next * next) as u64);
            rows.push(format!("downsamples.{stage}"), p + pn, m + mn);
            side = next;
        }
    }
    let c = spec.stage_channels(3) as u64;
    let n = (side * side) as u64;
    let classes = spec.num_classes as u64;
    let (pn, mn) = layer_norm(c, n);
    let pool = Macs::new(0, c * n);
    rows.push(
        "head".into(),
        pn + c * classes + classes,
        mn + pool + Macs::new(c * classes, 0),
    );

    Ok(CostReport {
        model: spec.name.clone(),
        resolution,
        rows: rows.0,
    })
}
