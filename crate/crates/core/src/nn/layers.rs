use super::{Init, ParamId, ParamStore};
use crate::error::Result;
use crate::tensor::{Element, Tensor, LAYER_NORM_EPS};

pub const LINEAR_INIT_STD: f64 = 0.02;

/// Fully connected layer; weight is `[out, in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new<T: Element>(
        init: &mut Init<'_, T>,
        name: &str,
        in_features: usize,
        out_features: usize,
    ) -> Result<Self> {
        let mut s = init.sub(name);
        let weight = s.trunc_normal("weight", &[out_features, in_features], LINEAR_INIT_STD)?;
        let bias = Some(s.constant("bias", &[out_features], 0.0)?);
        Ok(Linear {
            weight,
            bias,
            in_features,
            out_features,
        })
    }

    /// Applies to the last axis of `x`.
    pub fn forward<T: Element>(&self, ps: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.linear(ps.get(self.weight), self.bias.map(|b| ps.get(b)))
    }

    /// Applies over the channel axis of a `[B, C, H, W]` grid (a 1×1 convolution).
    pub fn forward_grid<T: Element>(&self, ps: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let w = ps
            .get(self.weight)
            .reshape(&[self.out_features, self.in_features, 1, 1])?;
        x.conv2d(&w, self.bias.map(|b| ps.get(b)), 1, 0, 1)
    }

    pub fn num_params(&self) -> usize {
        self.in_features * self.out_features
            + if self.bias.is_some() {
                self.out_features
            } else {
                0
            }
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Conv2d {
    /// Square-kernel convolution with bias, weights drawn from
    /// Normal(0, sqrt(2 / fan_out)) where fan_out = k²·C_out / groups.
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Element>(
        init: &mut Init<'_, T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Self> {
        if groups == 0
            || !in_channels.is_multiple_of(groups)
            || !out_channels.is_multiple_of(groups)
        {
            return Err(crate::Error::config(format!(
                "{}.{name}: {groups} groups incompatible with {in_channels}->{out_channels} channels",
                init.prefix()
            )));
        }
        let mut s = init.sub(name);
        let fan_out = kernel * kernel * out_channels / groups;
        let weight = s.normal(
            "weight",
            &[out_channels, in_channels / groups, kernel, kernel],
            (2.0 / fan_out as f64).sqrt(),
        )?;
        let bias = Some(s.constant("bias", &[out_channels], 0.0)?);
        Ok(Conv2d {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            groups,
        })
    }

    /// Shape-preserving depthwise convolution (odd kernel, stride 1).
    pub fn depthwise<T: Element>(
        init: &mut Init<'_, T>,
        name: &str,
        channels: usize,
        kernel: usize,
    ) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return Err(crate::Error::config(format!(
                "depthwise kernel must be odd, got {kernel}"
            )));
        }
        Self::new(
            init,
            name,
            channels,
            channels,
            kernel,
            1,
            (kernel - 1) / 2,
            channels,
        )
    }

    pub fn forward<T: Element>(&self, ps: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.conv2d(
            ps.get(self.weight),
            self.bias.map(|b| ps.get(b)),
            self.stride,
            self.padding,
            self.groups,
        )
    }

    pub fn num_params(&self) -> usize {
        self.out_channels * (self.in_channels / self.groups) * self.kernel * self.kernel
            + if self.bias.is_some() {
                self.out_channels
            } else {
                0
            }
    }
}

/// Layer normalization over the channel axis: axis 1 of a 4-d grid,
/// otherwise the last axis.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub channels: usize,
}

impl LayerNorm {
    pub fn new<T: Element>(init: &mut Init<'_, T>, name: &str, channels: usize) -> Result<Self> {
        let mut s = init.sub(name);
        Ok(LayerNorm {
            gamma: s.constant("weight", &[channels], 1.0)?,
            beta: s.constant("bias", &[channels], 0.0)?,
            channels,
        })
    }

    pub fn forward<T: Element>(&self, ps: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let axis = if x.ndim() == 4 { 1 } else { x.ndim() - 1 };
        x.layer_norm(axis, ps.get(self.gamma), ps.get(self.beta), LAYER_NORM_EPS)
    }

    pub fn num_params(&self) -> usize {
        2 * self.channels
    }
}
