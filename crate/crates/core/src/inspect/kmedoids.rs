use itertools::Itertools;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::maps::AssignmentMaps;
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 4;
pub const DEFAULT_MAX_ITERS: usize = 50;
/// Independent PAM runs per selection.
pub const RESTARTS: u64 = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct MedoidSelection {
    /// Selected point indices, distinct, in selection order.
    pub medoids: Vec<usize>,
    /// For every point, the index of its medoid (a point index).
    pub assignment: Vec<usize>,
    /// Sum of distances to the assigned medoids.
    pub cost: f64,
    /// Accepted swaps of the kept run.
    pub iterations: usize,
    /// Cost of the kept run after seeding and after each accepted swap.
    pub history: Vec<f64>,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn distance_matrix(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|a| points.iter().map(|b| euclid(a, b)).collect())
        .collect()
}

fn cost_of(d: &[Vec<f64>], medoids: &[usize]) -> f64 {
    (0..d.len())
        .map(|i| {
            medoids
                .iter()
                .map(|&m| d[i][m])
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::invalid(
            "kmedoids",
            format!("k = {k} must be in 1..={n}"),
        ));
    }
    Ok(())
}

/// Greedy k-means++ seeding: a uniform first pick, then at each step
/// `2 + ln k` candidates drawn with probability proportional to their squared
/// distance to the chosen set, keeping the one that lowers the cost most.
fn seed_medoids(d: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = d.len();
    let trials = 2 + (k as f64).ln() as usize;
    let first = rng.gen_range(0..n);
    let mut nearest: Vec<f64> = (0..n).map(|i| d[i][first]).collect();
    let mut medoids = vec![first];
    while medoids.len() < k {
        let weights: Vec<f64> = nearest.iter().map(|v| v * v).collect();
        let candidates: Vec<usize> = match WeightedIndex::new(&weights) {
            Ok(dist) => (0..trials).map(|_| dist.sample(rng)).collect(),
            // every remaining point duplicates a medoid
            Err(_) => vec![(0..n).find(|i| !medoids.contains(i)).expect("k <= n")],
        };
        let cost_with = |c: usize| (0..n).map(|i| nearest[i].min(d[i][c])).sum::<f64>();
        let pick = candidates
            .into_iter()
            .min_by(|&a, &b| cost_with(a).total_cmp(&cost_with(b)))
            .expect("at least one candidate");
        for (i, v) in nearest.iter_mut().enumerate() {
            *v = v.min(d[i][pick]);
        }
        medoids.push(pick);
    }
    medoids
}

/// PAM k-medoids on the rows of `points` under Euclidean distance. Each
/// iteration applies the single best cost-reducing swap of a medoid with a
/// non-medoid; stops when none improves or after `max_iters` swaps.
///
/// Single-swap search can stall in a local optimum, so PAM runs from
/// [`RESTARTS`] seedings (stream `r` of `seed` for restart `r`) and keeps the
/// cheapest result, the earliest on ties. Deterministic given `seed`.
pub fn kmedoids_points(
    points: &[Vec<f64>],
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<MedoidSelection> {
    check_k(points.len(), k)?;
    let d = distance_matrix(points);
    let mut best: Option<MedoidSelection> = None;
    for r in 0..RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r);
        let run = pam(&d, k, max_iters, &mut rng);
        if best.as_ref().is_none_or(|b| run.cost < b.cost) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn pam(d: &[Vec<f64>], k: usize, max_iters: usize, rng: &mut ChaCha8Rng) -> MedoidSelection {
    let n = d.len();
    let mut medoids = seed_medoids(d, k, rng);
    let mut cost = cost_of(d, &medoids);
    let mut history = vec![cost];
    let mut iterations = 0;
    while iterations < max_iters {
        let mut best: Option<(usize, usize, f64)> = None;
        for slot in 0..k {
            for cand in (0..n).filter(|c| !medoids.contains(c)) {
                let mut trial = medoids.clone();
                trial[slot] = cand;
                let c = cost_of(d, &trial);
                let bar = best.map_or(cost, |b| b.2);
                if c < bar - 1e-12 * cost.max(1.0) {
                    best = Some((slot, cand, c));
                }
            }
        }
        let Some((slot, cand, c)) = best else { break };
        medoids[slot] = cand;
        cost = c;
        history.push(cost);
        iterations += 1;
    }
    let assignment = (0..n)
        .map(|i| {
            if medoids.contains(&i) {
                return i;
            }
            *medoids
                .iter()
                .min_by(|&&a, &&b| d[i][a].total_cmp(&d[i][b]))
                .expect("k >= 1")
        })
        .collect();
    MedoidSelection {
        medoids,
        assignment,
        cost,
        iterations,
        history,
    }
}

/// Unit-length copies of the flattened maps; all-zero maps stay zero.
pub fn normalized_rows(maps: &AssignmentMaps) -> Vec<Vec<f64>> {
    maps.maps
        .iter()
        .map(|m| {
            let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                m.iter().map(|v| v / norm).collect()
            } else {
                m.clone()
            }
        })
        .collect()
}

/// Representative slots: k-medoids on the L2-normalized maps, so grouping
/// follows spatial pattern rather than total mass.
pub fn kmedoids(
    maps: &AssignmentMaps,
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<MedoidSelection> {
    kmedoids_points(&normalized_rows(maps), k, max_iters, seed)
}

/// Reference solution by enumerating every medoid subset. Exponential; for
/// small instances only.
pub fn kmedoids_exhaustive(points: &[Vec<f64>], k: usize) -> Result<(Vec<usize>, f64)> {
    check_k(points.len(), k)?;
    let d = distance_matrix(points);
    let best = (0..points.len())
        .combinations(k)
        .map(|s| {
            let c = cost_of(&d, &s);
            (s, c)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one subset");
    Ok(best)
}
