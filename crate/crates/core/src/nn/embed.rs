use super::{Conv2d, Init, LayerNorm, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Image → stride-4 feature grid.
///
/// Non-overlapped: one 4×4 stride-4 convolution. Overlapped: two 3×3
/// stride-2 convolutions (3 → C/2 → C) with LayerNorm and GELU in between.
/// Both end with a LayerNorm.
#[derive(Debug, Clone)]
pub struct PatchEmbed {
    pub first: Conv2d,
    pub mid_norm: Option<LayerNorm>,
    pub second: Option<Conv2d>,
    pub norm: LayerNorm,
    pub overlapped: bool,
}

impl PatchEmbed {
    pub fn new<T: Element>(
        init: &mut Init<'_, T>,
        name: &str,
        in_channels: usize,
        dim: usize,
        overlapped: bool,
    ) -> Result<Self> {
        let mut s = init.sub(name);
        if overlapped {
            let mid = (dim / 2).max(1);
            Ok(PatchEmbed {
                first: Conv2d::new(&mut s, "conv1", in_channels, mid, 3, 2, 1, 1)?,
                mid_norm: Some(LayerNorm::new(&mut s, "norm1", mid)?),
                second: Some(Conv2d::new(&mut s, "conv2", mid, dim, 3, 2, 1, 1)?),
                norm: LayerNorm::new(&mut s, "norm", dim)?,
                overlapped,
            })
        } else {
            Ok(PatchEmbed {
                first: Conv2d::new(&mut s, "proj", in_channels, dim, 4, 4, 0, 1)?,
                mid_norm: None,
                second: None,
                norm: LayerNorm::new(&mut s, "norm", dim)?,
                overlapped,
            })
        }
    }

    pub fn forward<T: Element>(&self, ps: &ParamStore<T>, img: &Tensor<T>) -> Result<Tensor<T>> {
        let s = img.shape();
        if s.len() != 4 || !s[2].is_multiple_of(4) || !s[3].is_multiple_of(4) {
            return Err(Error::invalid(
                "patch_embed",
                format!("image extents must be divisible by 4, got {s:?}"),
            ));
        }
        let mut x = self.first.forward(ps, img)?;
        if let (Some(norm), Some(second)) = (&self.mid_norm, &self.second) {
            x = second.forward(ps, &norm.forward(ps, &x)?.gelu())?;
        }
        self.norm.forward(ps, &x)
    }

    pub fn num_params(&self) -> usize {
        self.first.num_params()
            + self.mid_norm.as_ref().map_or(0, LayerNorm::num_params)
            + self.second.as_ref().map_or(0, Conv2d::num_params)
            + self.norm.num_params()
    }
}

/// Halves resolution and doubles channels: 3×3 stride-2 (overlapped) or
/// 2×2 stride-2 convolution, followed by LayerNorm.
#[derive(Debug, Clone)]
pub struct Downsample {
    pub conv: Conv2d,
    pub norm: LayerNorm,
}

impl Downsample {
    pub fn new<T: Element>(
        init: &mut Init<'_, T>,
        name: &str,
        dim: usize,
        overlapped: bool,
    ) -> Result<Self> {
        let mut s = init.sub(name);
        let conv = if overlapped {
            Conv2d::new(&mut s, "conv", dim, 2 * dim, 3, 2, 1, 1)?
        } else {
            Conv2d::new(&mut s, "conv", dim, 2 * dim, 2, 2, 0, 1)?
        };
        Ok(Downsample {
            conv,
            norm: LayerNorm::new(&mut s, "norm", 2 * dim)?,
        })
    }

    pub fn forward<T: Element>(&self, ps: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let s = x.shape();
        if s.len() != 4 || !s[2].is_multiple_of(2) || !s[3].is_multiple_of(2) {
            return Err(Error::invalid(
                "downsample",
                format!("grid extents must be even, got {s:?}"),
            ));
        }
        self.norm.forward(ps, &self.conv.forward(ps, x)?)
    }

    pub fn num_params(&self) -> usize {
        self.conv.num_params() + self.norm.num_params()
    }
}

/// Convolutional position encoding `x + DW3×3(x)`.
#[derive(Debug, Clone)]
pub struct ConvPosEnc {
    pub conv: Conv2d,
}

impl ConvPosEnc {
    pub fn new<T: Element>(init: &mut Init<'_, T>, name: &str, dim: usize) -> Result<Self> {
        Ok(ConvPosEnc {
            conv: Conv2d::depthwise(init, name, dim, 3)?,
        })
    }

    pub fn forward<T: Element>(&self, ps: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.add(&self.conv.forward(ps, x)?)
    }

    pub fn num_params(&self) -> usize {
        self.conv.num_params()
    }
}
