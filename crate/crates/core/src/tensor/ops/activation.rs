use super::{axis_layout, check_axis};
use crate::error::Result;
use crate::tensor::counter::{self, OpKind, ACTIVATION_OPS_PER_ELEMENT, SOFTMAX_OPS_PER_ELEMENT};
use crate::tensor::{Element, Tensor};

impl<T: Element> Tensor<T> {
    /// Max-stabilized softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<T>> {
        check_axis("softmax", self.shape(), axis)?;
        let (outer, n, inner) = axis_layout(self.shape(), axis);
        counter::record(
            OpKind::Softmax,
            SOFTMAX_OPS_PER_ELEMENT * self.numel() as u64,
        );
        let x = self.data();
        let mut out = vec![T::zero(); x.len()];
        if inner == 1 {
            for (src, dst) in x.chunks(n).zip(out.chunks_mut(n)) {
                let m = src.iter().copied().fold(T::neg_infinity(), T::max);
                let mut z = T::zero();
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = (s - m).exp();
                    z = z + *d;
                }
                dst.iter_mut().for_each(|d| *d = *d / z);
            }
        } else {
            for o in 0..outer {
                let base = o * n * inner;
                let mut mx = vec![T::neg_infinity(); inner];
                for j in 0..n {
                    let row = &x[base + j * inner..][..inner];
                    mx.iter_mut().zip(row).for_each(|(m, &v)| *m = m.max(v));
                }
                let mut z = vec![T::zero(); inner];
                for j in 0..n {
                    let row = &x[base + j * inner..][..inner];
                    let dst = &mut out[base + j * inner..][..inner];
                    for i in 0..inner {
                        dst[i] = (row[i] - mx[i]).exp();
                        z[i] = z[i] + dst[i];
                    }
                }
                for j in 0..n {
                    let dst = &mut out[base + j * inner..][..inner];
                    dst.iter_mut().zip(&z).for_each(|(d, &zz)| *d = *d / zz);
                }
            }
        }
        let y = out.clone();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            "softmax",
            &[self],
            move |g, _| {
                // dx = y ⊙ (g − Σ_axis g⊙y)
                let mut dx = vec![T::zero(); g.len()];
                for o in 0..outer {
                    let base = o * n * inner;
                    let mut dot = vec![T::zero(); inner];
                    for j in 0..n {
                        for i in 0..inner {
                            let k = base + j * inner + i;
                            dot[i] = dot[i] + g[k] * y[k];
                        }
                    }
                    for j in 0..n {
                        for i in 0..inner {
                            let k = base + j * inner + i;
                            dx[k] = y[k] * (g[k] - dot[i]);
                        }
                    }
                }
                vec![Some(dx)]
            },
        ))
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&self) -> Tensor<T> {
        counter::record(
            OpKind::Activation,
            ACTIVATION_OPS_PER_ELEMENT * self.numel() as u64,
        );
        let half = T::from_f64_lossy(0.5);
        let inv_sqrt2 = T::from_f64_lossy(std::f64::consts::FRAC_1_SQRT_2);
        let out = self
            .data()
            .iter()
            .map(|&x| half * x * (T::one() + (x * inv_sqrt2).erf()))
            .collect();
        let x = self.clone();
        Tensor::from_op(self.shape().to_vec(), out, "gelu", &[self], move |g, _| {
            let inv_sqrt_2pi = T::from_f64_lossy(
                0.5 * std::f64::consts::FRAC_2_SQRT_PI * std::f64::consts::FRAC_1_SQRT_2,
            );
            let dx = g
                .iter()
                .zip(x.data())
                .map(|(&g, &x)| {
                    let cdf = half * (T::one() + (x * inv_sqrt2).erf());
                    let pdf = (-half * x * x).exp() * inv_sqrt_2pi;
                    g * (cdf + x * pdf)
                })
                .collect();
            vec![Some(dx)]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits() {
        let x = Tensor::<f64>::zeros(&[3]).unwrap();
        let y = x.softmax(0).unwrap();
        for v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let x = Tensor::<f64>::from_f64(&[2], &[1000.0, 0.0]).unwrap();
        let y = x.softmax(0).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
        assert!(y.data()[1].abs() < 1e-12);
    }

    #[test]
    fn non_last_axis_rows_sum_to_one() {
        let x = Tensor::<f64>::from_vec(
            &[2, 3, 4],
            (0..24).map(|i| (i as f64).sin() * 3.0).collect(),
        )
        .unwrap();
        let y = x.softmax(1).unwrap();
        for o in 0..2 {
            for i in 0..4 {
                let s: f64 = (0..3).map(|j| y.data()[(o * 3 + j) * 4 + i]).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gelu_reference_values() {
        let x = Tensor::<f64>::from_f64(&[3], &[0.0, 1.0, -1.0]).unwrap();
        let y = x.gelu();
        assert_eq!(y.data()[0], 0.0);
        assert!((y.data()[1] - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!((y.data()[2] + 0.158_655_253_931_457_05).abs() < 1e-12);
    }
}
