use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::glmix::{full_attention_cost, glmix_cost, GlMix, GlMixConfig};
use crate::nn::{grid_attention, Init, Mhsa, ParamStore};
use crate::tensor::{counter, no_grad, Tensor};

/// Input images are embedded at 1/4 resolution before the first block, so an
/// `r × r` image gives an `r/4 × r/4` grid.
pub const EMBED_STRIDE: usize = 4;
pub const REPEATS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    GlMix,
    FullAttention,
}

impl BlockKind {
    pub const ALL: [BlockKind; 2] = [BlockKind::GlMix, BlockKind::FullAttention];

    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::GlMix => "glmix",
            BlockKind::FullAttention => "full_attention",
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BlockKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "glmix" => Ok(BlockKind::GlMix),
            "full_attention" | "attention" => Ok(BlockKind::FullAttention),
            _ => Err(Error::config(format!(
                "unknown block kind `{s}` (glmix, full_attention)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingPoint {
    pub resolution: usize,
    /// Side of the feature grid the block sees.
    pub grid: usize,
    /// Median wall-clock seconds of one forward pass.
    pub seconds: f64,
    /// Instrumented operation count of one forward pass.
    pub macs: u64,
    pub closed_macs: u64,
}

impl ScalingPoint {
    pub fn pixels(&self) -> usize {
        self.grid * self.grid
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingResult {
    pub kind: BlockKind,
    pub channels: usize,
    pub num_slots: usize,
    pub heads: usize,
    pub points: Vec<ScalingPoint>,
    /// Slope of log(seconds) against log(pixels).
    pub time_exponent: f64,
    /// Slope of log(MACs) against log(pixels).
    pub mac_exponent: f64,
    /// R² of a straight-line fit of seconds against pixels.
    pub linear_r2: f64,
}

/// Least-squares slope, intercept and R² of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, my - slope * mx, r2)
}

/// Slope of the log-log fit.
pub fn fit_exponent(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).0
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

enum Bench {
    GlMix(GlMix),
    Attention(Mhsa),
}

impl Bench {
    fn forward(&self, ps: &ParamStore<f32>, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        match self {
            Bench::GlMix(m) => Ok(m.forward(ps, x)?.0),
            Bench::Attention(a) => grid_attention(a, ps, x),
        }
    }
}

/// Times one mixer forward pass (batch 1, f32, no autograd, on the calling
/// thread) at each image resolution and fits the growth exponents.
pub fn scaling_benchmark(
    kind: BlockKind,
    channels: usize,
    num_slots: usize,
    heads: usize,
    resolutions: &[usize],
) -> Result<ScalingResult> {
    if resolutions.len() < 3 {
        return Err(Error::config(
            "a scaling fit needs at least three resolutions",
        ));
    }
    if resolutions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("resolutions must be strictly increasing"));
    }
    if let Some(r) = resolutions
        .iter()
        .find(|&&r| r % EMBED_STRIDE != 0 || r == 0)
    {
        return Err(Error::config(format!(
            "resolution {r} is not a positive multiple of {EMBED_STRIDE}"
        )));
    }
    let cfg = GlMixConfig::new(channels, num_slots, heads);
    let mut ps = ParamStore::<f32>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let bench = {
        let mut init = Init::new(&mut ps, &mut rng);
        match kind {
            BlockKind::GlMix => Bench::GlMix(GlMix::new(&mut init, "mixer", cfg)?),
            BlockKind::FullAttention => {
                Bench::Attention(Mhsa::new(&mut init, "attn", channels, heads)?)
            }
        }
    };
    let _g = no_grad();
    let mut points = Vec::with_capacity(resolutions.len());
    for &resolution in resolutions {
        let grid = resolution / EMBED_STRIDE;
        let data: Vec<f64> = (0..channels * grid * grid)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let x = Tensor::<f32>::from_f64(&[1, channels, grid, grid], &data)?;
        let (out, counts) = counter::count(|| bench.forward(&ps, &x));
        out?;
        let closed_macs = match kind {
            BlockKind::GlMix => glmix_cost(&cfg, grid, grid)?.macs(),
            BlockKind::FullAttention => full_attention_cost(grid * grid, channels, heads).1.total(),
        };
        let mut times = Vec::with_capacity(REPEATS);
        for _ in 0..REPEATS {
            let start = Instant::now();
            bench.forward(&ps, &x)?;
            times.push(start.elapsed().as_secs_f64());
        }
        points.push(ScalingPoint {
            resolution,
            grid,
            seconds: median(times),
            macs: counts.total(),
            closed_macs,
        });
    }
    let px: Vec<f64> = points.iter().map(|p| p.pixels() as f64).collect();
    let secs: Vec<f64> = points.iter().map(|p| p.seconds).collect();
    let macs: Vec<f64> = points.iter().map(|p| p.macs as f64).collect();
    Ok(ScalingResult {
        kind,
        channels,
        num_slots,
        heads,
        time_exponent: fit_exponent(&px, &secs),
        mac_exponent: fit_exponent(&px, &macs),
        linear_r2: linear_fit(&px, &secs).2,
        points,
    })
}

impl ScalingResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,resolution,grid,pixels,seconds,macs,closed_macs\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6e},{},{}",
                self.kind,
                p.resolution,
                p.grid,
                p.pixels(),
                p.seconds,
                p.macs,
                p.closed_macs
            );
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{} (C={}, M={}, heads={})\n{:>10}  {:>6}  {:>8}  {:>12}  {:>14}\n",
            self.kind,
            self.channels,
            self.num_slots,
            self.heads,
            "resolution",
            "grid",
            "pixels",
            "seconds",
            "MACs"
        );
        for p in &self.points {
            let _ = writeln!(
                s,
                "{:>10}  {:>6}  {:>8}  {:>12.6}  {:>14}",
                p.resolution,
                format!("{0}x{0}", p.grid),
                p.pixels(),
                p.seconds,
                p.macs
            );
        }
        let _ = writeln!(
            s,
            "time ~ pixels^{:.3}, MACs ~ pixels^{:.3}, linear R^2 {:.4}",
            self.time_exponent, self.mac_exponent, self.linear_r2
        );
        s
    }
}
