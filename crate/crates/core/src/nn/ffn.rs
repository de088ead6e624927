use super::{Conv2d, Init, Linear, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Position-wise feed-forward network `fc2(GELU(fc1(x)))`. The convolutional
/// variant adds a residual 3×3 depthwise convolution on the expanded
/// features: `fc2(GELU(h + DW(h)))` with `h = fc1(x)`.
#[derive(Debug, Clone)]
pub struct Ffn {
    pub fc1: Linear,
    pub fc2: Linear,
    pub dwconv: Option<Conv2d>,
    pub dim: usize,
    pub hidden: usize,
}

impl Ffn {
    pub fn new<T: Element>(
        init: &mut Init<'_, T>,
        name: &str,
        dim: usize,
        ratio: usize,
        conv_ffn: bool,
    ) -> Result<Self> {
        let hidden = dim * ratio;
        let mut s = init.sub(name);
        let fc1 = Linear::new(&mut s, "fc1", dim, hidden)?;
        let dwconv = if conv_ffn {
            Some(Conv2d::depthwise(&mut s, "dwconv", hidden, 3)?)
        } else {
            None
        };
        let fc2 = Linear::new(&mut s, "fc2", hidden, dim)?;
        Ok(Ffn {
            fc1,
            fc2,
            dwconv,
            dim,
            hidden,
        })
    }

    /// Accepts `[B, N, C]` tokens or a `[B, C, H, W]` grid.
    pub fn forward<T: Element>(&self, ps: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        match x.ndim() {
            4 => {
                let mut h = self.fc1.forward_grid(ps, x)?;
                if let Some(dw) = &self.dwconv {
                    h = h.add(&dw.forward(ps, &h)?)?;
                }
                self.fc2.forward_grid(ps, &h.gelu())
            }
            _ if self.dwconv.is_some() => Err(Error::invalid(
                "ffn",
                format!(
                    "convolutional FFN needs a [B, C, H, W] grid, got {:?}",
                    x.shape()
                ),
            )),
            _ => {
                let h = self.fc1.forward(ps, x)?.gelu();
                self.fc2.forward(ps, &h)
            }
        }
    }

    pub fn num_params(&self) -> usize {
        self.fc1.num_params()
            + self.fc2.num_params()
            + self.dwconv.as_ref().map_or(0, Conv2d::num_params)
    }
}
