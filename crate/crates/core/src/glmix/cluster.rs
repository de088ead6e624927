use log::warn;

use super::cost::slot_grid_side;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Denominator floor of the cosine similarity.
pub const COSINE_EPS: f64 = 1e-8;
/// Initial scale: logits are cosine similarities times 5.
pub const SIGMA_INIT: f64 = 0.2;
/// Lower clamp applied to σ after optimizer steps.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// Everything one clustering pass produced, shared by the conjugate
/// dispatching step and by visualization.
#[derive(Debug, Clone)]
pub struct ClusterState<T: Element> {
    /// `[B, M, C]` initial slots.
    pub slots_init: Tensor<T>,
    /// `[B, M, H·W]` correspondence logits.
    pub logits: Tensor<T>,
    /// `[B, M, H·W]`, each row (fixed slot) sums to 1 over pixels.
    pub cluster_weights: Tensor<T>,
    /// `[B, M, H·W]`, each column (fixed pixel) sums to 1 over slots.
    dispatch_weights_t: Tensor<T>,
    pub height: usize,
    pub width: usize,
}

impl<T: Element> ClusterState<T> {
    pub fn batch(&self) -> usize {
        self.logits.shape()[0]
    }

    pub fn num_slots(&self) -> usize {
        self.logits.shape()[1]
    }

    /// `[B, H·W, M]`, each row (fixed pixel) sums to 1 over slots.
    pub fn dispatch_weights(&self) -> Result<Tensor<T>> {
        self.dispatch_weights_t.transpose(1, 2)
    }

    /// Dispatch weights in the `[B, M, H·W]` layout used internally.
    pub fn dispatch_weights_by_slot(&self) -> &Tensor<T> {
        &self.dispatch_weights_t
    }

    /// Copy with every tensor cut from the graph.
    pub fn detached(&self) -> Self {
        ClusterState {
            slots_init: self.slots_init.detach(),
            logits: self.logits.detach(),
            cluster_weights: self.cluster_weights.detach(),
            dispatch_weights_t: self.dispatch_weights_t.detach(),
            height: self.height,
            width: self.width,
        }
    }
}

/// Soft clustering of a `[B, C, H, W]` grid into `M` slots.
///
/// `S_init` comes from adaptive average pooling onto a √M×√M grid (or from
/// `learned_slots`, `[M, C]`), the logits are cosine similarities between
/// `S_init` and every pixel divided by `sigma`, and the refined slots are the
/// softmax-over-pixels weighted means of the pixel features.
pub fn cluster<T: Element>(
    x: &Tensor<T>,
    sigma: &Tensor<T>,
    num_slots: usize,
    learned_slots: Option<&Tensor<T>>,
) -> Result<(Tensor<T>, ClusterState<T>)> {
    let s = x.shape();
    if s.len() != 4 {
        return Err(Error::invalid(
            "cluster",
            format!("expected [B, C, H, W], got {s:?}"),
        ));
    }
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let side = slot_grid_side(num_slots)?;
    if h * w < num_slots {
        warn!("clustering {h}x{w} pixels into {num_slots} slots; some slots will duplicate pixels");
    }
    let x_flat = x.flatten(2, 3)?; // [B, C, N]
    let slots_init = match learned_slots {
        Some(table) => {
            if table.shape() != [num_slots, c] {
                return Err(Error::shape("cluster", table.shape(), &[num_slots, c]));
            }
            table.expand_batch(b)?
        }
        None => x
            .adaptive_avg_pool2d(side, side)?
            .flatten(2, 3)?
            .transpose(1, 2)?,
    };
    let slots_hat = slots_init.l2_normalize(2, COSINE_EPS)?;
    let x_hat = x_flat.l2_normalize(1, COSINE_EPS)?;
    let logits = slots_hat.matmul(&x_hat)?.div_scalar_tensor(sigma)?;
    let cluster_weights = logits.softmax(2)?;
    let dispatch_weights_t = logits.softmax(1)?;
    let slots = cluster_weights.matmul(&x_flat.transpose(1, 2)?)?;
    Ok((
        slots,
        ClusterState {
            slots_init,
            logits,
            cluster_weights,
            dispatch_weights_t,
            height: h,
            width: w,
        },
    ))
}

/// Soft dispatching of transformed slots `[B, M, C]` back to a `[B, C, H, W]` grid.
pub fn dispatch<T: Element>(slots: &Tensor<T>, state: &ClusterState<T>) -> Result<Tensor<T>> {
    let s = slots.shape();
    if s.len() != 3 || s[0] != state.batch() || s[1] != state.num_slots() {
        return Err(Error::shape("dispatch", s, state.logits.shape()));
    }
    slots
        .transpose(1, 2)?
        .matmul(&state.dispatch_weights_t)?
        .unflatten(2, &[state.height, state.width])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::uniform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sigma(v: f64) -> Tensor<f64> {
        Tensor::from_f64(&[1], &[v]).unwrap()
    }

    #[test]
    fn non_square_slot_count_rejected() {
        let x = Tensor::<f64>::ones(&[1, 2, 4, 4]).unwrap();
        assert!(matches!(
            cluster(&x, &sigma(0.2), 5, None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn constant_input_gives_constant_slots() {
        let v = [0.3, -1.2, 2.0];
        let data: Vec<f64> = v.iter().flat_map(|&c| std::iter::repeat_n(c, 16)).collect();
        let x = Tensor::<f64>::from_vec(&[1, 3, 4, 4], data).unwrap();
        let (slots, _) = cluster(&x, &sigma(0.2), 4, None).unwrap();
        for m in 0..4 {
            for c in 0..3 {
                assert!((slots.data()[m * 3 + c] - v[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn huge_sigma_makes_every_slot_the_spatial_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = uniform(&[1, 3, 4, 4], &mut rng);
        let (slots, state) = cluster(&x, &sigma(1e12), 4, None).unwrap();
        assert!(state
            .cluster_weights
            .data()
            .iter()
            .all(|&w| (w - 1.0 / 16.0).abs() < 1e-12));
        for c in 0..3 {
            let mean = x.data()[c * 16..(c + 1) * 16].iter().sum::<f64>() / 16.0;
            for m in 0..4 {
                assert!((slots.data()[m * 3 + c] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_slot_dispatch_copies_the_slot_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = uniform(&[1, 2, 3, 3], &mut rng);
        let (_, state) = cluster(&x, &sigma(0.2), 1, None).unwrap();
        assert!(state
            .dispatch_weights_by_slot()
            .data()
            .iter()
            .all(|&w| w == 1.0));
        let slot = Tensor::<f64>::from_f64(&[1, 1, 2], &[0.7, -0.4]).unwrap();
        let g = dispatch(&slot, &state).unwrap();
        assert_eq!(g.shape(), &[1, 2, 3, 3]);
        assert!(g.data()[..9].iter().all(|&v| v == 0.7));
        assert!(g.data()[9..].iter().all(|&v| v == -0.4));
    }

    #[test]
    fn dispatch_rejects_mismatched_slots() {
        let x = Tensor::<f64>::ones(&[1, 2, 4, 4]).unwrap();
        let (_, state) = cluster(&x, &sigma(0.2), 4, None).unwrap();
        let wrong = Tensor::<f64>::ones(&[1, 9, 2]).unwrap();
        assert!(dispatch(&wrong, &state).is_err());
    }

    #[test]
    fn fewer_pixels_than_slots_is_allowed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = uniform(&[1, 4, 2, 2], &mut rng);
        let (slots, state) = cluster(&x, &sigma(0.2), 9, None).unwrap();
        assert_eq!(slots.shape(), &[1, 9, 4]);
        assert!(state.cluster_weights.all_finite());
    }
}
