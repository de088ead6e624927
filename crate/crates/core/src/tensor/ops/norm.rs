use super::{axis_layout, check_axis};
use crate::error::{Error, Result};
use crate::tensor::counter::{self, OpKind, NORM_OPS_PER_ELEMENT};
use crate::tensor::{Element, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl<T: Element> Tensor<T> {
    /// Normalizes every 1-D slice along `axis` to zero mean and unit
    /// (biased) variance, then applies the per-position affine `gamma`, `beta`.
    pub fn layer_norm(
        &self,
        axis: usize,
        gamma: &Tensor<T>,
        beta: &Tensor<T>,
        eps: f64,
    ) -> Result<Tensor<T>> {
        check_axis("layer_norm", self.shape(), axis)?;
        let (outer, n, inner) = axis_layout(self.shape(), axis);
        if gamma.shape() != [n] || beta.shape() != [n] {
            return Err(Error::shape("layer_norm", self.shape(), gamma.shape()));
        }
        counter::record(OpKind::Norm, NORM_OPS_PER_ELEMENT * self.numel() as u64);
        let eps = T::from_f64_lossy(eps);
        let nf = T::from_usize(n).expect("count");
        let x = self.data();
        let (gm, bt) = (gamma.data(), beta.data());
        let mut xhat = vec![T::zero(); x.len()];
        let mut rstd = vec![T::zero(); outer * inner];
        let mut out = vec![T::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * n + j) * inner + i;
                let mean = (0..n).map(|j| x[idx(j)]).sum::<T>() / nf;
                let var = (0..n).map(|j| (x[idx(j)] - mean).powi(2)).sum::<T>() / nf;
                let r = T::one() / (var + eps).sqrt();
                rstd[o * inner + i] = r;
                for j in 0..n {
                    let xh = (x[idx(j)] - mean) * r;
                    xhat[idx(j)] = xh;
                    out[idx(j)] = xh * gm[j] + bt[j];
                }
            }
        }
        let gamma_t = gamma.clone();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            "layer_norm",
            &[self, gamma, beta],
            move |g, needs| {
                let gm = gamma_t.data();
                let mut dx = needs[0].then(|| vec![T::zero(); g.len()]);
                let mut dgamma = vec![T::zero(); n];
                let mut dbeta = vec![T::zero(); n];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * n + j) * inner + i;
                        let mut mean_d = T::zero();
                        let mut mean_dx = T::zero();
                        for j in 0..n {
                            let gv = g[idx(j)];
                            let xh = xhat[idx(j)];
                            dgamma[j] = dgamma[j] + gv * xh;
                            dbeta[j] = dbeta[j] + gv;
                            let d = gv * gm[j];
                            mean_d = mean_d + d;
                            mean_dx = mean_dx + d * xh;
                        }
                        if let Some(dx) = dx.as_mut() {
                            mean_d = mean_d / nf;
                            mean_dx = mean_dx / nf;
                            let r = rstd[o * inner + i];
                            for j in 0..n {
                                let d = g[idx(j)] * gm[j];
                                dx[idx(j)] = r * (d - mean_d - xhat[idx(j)] * mean_dx);
                            }
                        }
                    }
                }
                vec![dx, needs[1].then_some(dgamma), needs[2].then_some(dbeta)]
            },
        ))
    }

    /// Divides every slice along `axis` by `max(‖slice‖₂, eps)`.
    pub fn l2_normalize(&self, axis: usize, eps: f64) -> Result<Tensor<T>> {
        check_axis("l2_normalize", self.shape(), axis)?;
        let (outer, n, inner) = axis_layout(self.shape(), axis);
        counter::record(OpKind::Norm, NORM_OPS_PER_ELEMENT * self.numel() as u64);
        let eps = T::from_f64_lossy(eps);
        let x = self.data();
        let mut denom = vec![T::zero(); outer * inner];
        let mut clamped = vec![false; outer * inner];
        let mut out = vec![T::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * n + j) * inner + i;
                let norm = (0..n).map(|j| x[idx(j)].powi(2)).sum::<T>().sqrt();
                let d = if norm > eps { norm } else { eps };
                denom[o * inner + i] = d;
                clamped[o * inner + i] = norm <= eps;
                for j in 0..n {
                    out[idx(j)] = x[idx(j)] / d;
                }
            }
        }
        let y = out.clone();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            "l2_normalize",
            &[self],
            move |g, _| {
                let mut dx = vec![T::zero(); g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * n + j) * inner + i;
                        let d = denom[o * inner + i];
                        if clamped[o * inner + i] {
                            (0..n).for_each(|j| dx[idx(j)] = g[idx(j)] / d);
                        } else {
                            let dot: T = (0..n).map(|j| g[idx(j)] * y[idx(j)]).sum();
                            (0..n).for_each(|j| dx[idx(j)] = (g[idx(j)] - y[idx(j)] * dot) / d);
                        }
                    }
                }
                vec![Some(dx)]
            },
        ))
    }
}
