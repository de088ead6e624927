use crate::error::{Error, Result};
use crate::glmix::ClusterState;
use crate::glnet::BlockState;
use crate::tensor::Element;

/// Per-slot spatial maps taken from one image's clustering weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMaps {
    /// `M` maps of `height * width` values, row-major.
    pub maps: Vec<Vec<f64>>,
    pub height: usize,
    pub width: usize,
    pub block: usize,
    pub image_id: String,
}

impl AssignmentMaps {
    /// Splits the clustering weights of batch element `sample` into one map
    /// per slot.
    pub fn from_state<T: Element>(
        state: &ClusterState<T>,
        sample: usize,
        block: usize,
        image_id: impl Into<String>,
    ) -> Result<Self> {
        if sample >= state.batch() {
            return Err(Error::invalid(
                "extract_maps",
                format!(
                    "sample {sample} out of range for batch of {}",
                    state.batch()
                ),
            ));
        }
        let (m, n) = (state.num_slots(), state.height * state.width);
        let w = state.cluster_weights.to_f64_vec();
        let base = sample * m * n;
        Ok(AssignmentMaps {
            maps: (0..m)
                .map(|s| w[base + s * n..base + (s + 1) * n].to_vec())
                .collect(),
            height: state.height,
            width: state.width,
            block,
            image_id: image_id.into(),
        })
    }

    pub fn num_slots(&self) -> usize {
        self.maps.len()
    }

    /// Per-map rescaling to `[0, 1]`. A constant map becomes all zeros.
    pub fn min_max_normalized(&self) -> Self {
        let maps = self
            .maps
            .iter()
            .map(|map| {
                let lo = map.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let span = hi - lo;
                map.iter()
                    .map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
                    .collect()
            })
            .collect();
        AssignmentMaps {
            maps,
            ..self.clone()
        }
    }

    /// Total clustering weight each pixel hands out across all slots.
    pub fn pixel_mass(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.height * self.width];
        for map in &self.maps {
            for (acc, v) in mass.iter_mut().zip(map) {
                *acc += v;
            }
        }
        mass
    }
}

/// Maps of block `block` (global index, forward order) for batch element
/// `sample`, from the states collected during a forward pass.
pub fn extract_maps<T: Element>(
    states: &[BlockState<T>],
    block: usize,
    sample: usize,
    image_id: &str,
) -> Result<AssignmentMaps> {
    let state = states.iter().find(|s| s.block == block).ok_or_else(|| {
        let have: Vec<usize> = states.iter().map(|s| s.block).collect();
        Error::invalid(
            "extract_maps",
            format!("no clustering state for block {block} (blocks with states: {have:?})"),
        )
    })?;
    AssignmentMaps::from_state(&state.state, sample, block, image_id)
}
