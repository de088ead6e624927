use crate::error::{Error, Result};
use crate::tensor::counter::{self, OpKind};
use crate::tensor::{gemm, Element, Tensor};

/// How the leading (batch) axes of two matmul operands line up.
#[derive(Clone, Copy)]
enum Batching {
    Both(usize),
    LeftOnly(usize),
    RightOnly(usize),
}

impl Batching {
    fn count(self) -> usize {
        match self {
            Batching::Both(n) | Batching::LeftOnly(n) | Batching::RightOnly(n) => n,
        }
    }
}

impl<T: Element> Tensor<T> {
    /// Matrix product over the last two axes. Leading axes must match, or
    /// one operand may be a plain matrix that is shared across the batch.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() < 2 || sb.len() < 2 || sa[sa.len() - 1] != sb[sb.len() - 2] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (p, q) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let r = sb[sb.len() - 1];
        let (ba, bb) = (&sa[..sa.len() - 2], &sb[..sb.len() - 2]);
        let batching = if ba == bb {
            Batching::Both(ba.iter().product())
        } else if bb.is_empty() {
            Batching::LeftOnly(ba.iter().product())
        } else if ba.is_empty() {
            Batching::RightOnly(bb.iter().product())
        } else {
            return Err(Error::shape("matmul", sa, sb));
        };
        let mut shape = if ba.is_empty() {
            bb.to_vec()
        } else {
            ba.to_vec()
        };
        shape.extend([p, r]);

        let nb = batching.count();
        counter::record(OpKind::Matmul, (nb * p * q * r) as u64);
        let (a, b) = (self.data(), other.data());
        let (a_step, b_step) = match batching {
            Batching::Both(_) => (p * q, q * r),
            Batching::LeftOnly(_) => (p * q, 0),
            Batching::RightOnly(_) => (0, q * r),
        };
        let mut out = vec![T::zero(); nb * p * r];
        for i in 0..nb {
            gemm(
                p,
                q,
                r,
                &a[i * a_step..],
                false,
                &b[i * b_step..],
                false,
                &mut out[i * p * r..(i + 1) * p * r],
                false,
            );
        }

        let (lhs, rhs) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            shape,
            out,
            "matmul",
            &[self, other],
            move |g, needs| {
                let (a, b) = (lhs.data(), rhs.data());
                // dA = g · Bᵀ, dB = Aᵀ · g; a shared operand sums over the batch
                let ga = needs[0].then(|| {
                    let mut ga = vec![T::zero(); a.len()];
                    for i in 0..nb {
                        let off = i * a_step;
                        gemm(
                            p,
                            r,
                            q,
                            &g[i * p * r..],
                            false,
                            &b[i * b_step..],
                            true,
                            &mut ga[off..off + p * q],
                            a_step == 0,
                        );
                    }
                    ga
                });
                let gb = needs[1].then(|| {
                    let mut gb = vec![T::zero(); b.len()];
                    for i in 0..nb {
                        let off = i * b_step;
                        gemm(
                            q,
                            p,
                            r,
                            &a[i * a_step..],
                            true,
                            &g[i * p * r..],
                            false,
                            &mut gb[off..off + q * r],
                            b_step == 0,
                        );
                    }
                    gb
                });
                vec![ga, gb]
            },
        ))
    }

    /// `x · wᵀ + b` over the last axis: `x [.., in]`, `w [out, in]`, `b [out]`.
    pub fn linear(&self, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        let sx = self.shape();
        let sw = weight.shape();
        if sw.len() != 2 || sx.is_empty() || sx[sx.len() - 1] != sw[1] {
            return Err(Error::shape("linear", sx, sw));
        }
        let (out_f, in_f) = (sw[0], sw[1]);
        if let Some(b) = bias {
            if b.shape() != [out_f] {
                return Err(Error::shape("linear", sw, b.shape()));
            }
        }
        let rows = self.numel() / in_f;
        counter::record(OpKind::Matmul, (rows * in_f * out_f) as u64);
        let mut out = vec![T::zero(); rows * out_f];
        if let Some(b) = bias {
            for row in out.chunks_mut(out_f) {
                row.copy_from_slice(b.data());
            }
        }
        gemm(
            rows,
            in_f,
            out_f,
            self.data(),
            false,
            weight.data(),
            true,
            &mut out,
            bias.is_some(),
        );
        let mut shape = sx.to_vec();
        *shape.last_mut().expect("non-empty") = out_f;

        let (x, w) = (self.clone(), weight.clone());
        let mut inputs = vec![self, weight];
        if let Some(b) = bias {
            inputs.push(b);
        }
        Ok(Tensor::from_op(
            shape,
            out,
            "linear",
            &inputs,
            move |g, needs| {
                let gx = needs[0].then(|| {
                    let mut gx = vec![T::zero(); rows * in_f];
                    gemm(rows, out_f, in_f, g, false, w.data(), false, &mut gx, false);
                    gx
                });
                let gw = needs[1].then(|| {
                    let mut gw = vec![T::zero(); out_f * in_f];
                    gemm(out_f, rows, in_f, g, true, x.data(), false, &mut gw, false);
                    gw
                });
                let mut grads = vec![gx, gw];
                if needs.len() == 3 {
                    grads.push(needs[2].then(|| {
                        let mut gb = vec![T::zero(); out_f];
                        for row in g.chunks(out_f) {
                            gb.iter_mut().zip(row).for_each(|(a, &v)| *a = *a + v);
                        }
                        gb
                    }));
                }
                grads
            },
        ))
    }
}
