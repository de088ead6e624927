use crate::error::{Error, Result};
use crate::tensor::counter::{self, OpKind};
use crate::tensor::{gemm, Element, Tensor};

/// Geometry of one 2-D convolution call.
#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    batch: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    groups: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn cin_g(&self) -> usize {
        self.c_in / self.groups
    }
    fn cout_g(&self) -> usize {
        self.c_out / self.groups
    }
    fn is_depthwise(&self) -> bool {
        self.groups == self.c_in && self.c_out == self.c_in
    }
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Unfolds one group of one image into `(cin_g·kh·kw) × (ho·wo)` columns.
fn im2col<T: Element>(x: &[T], g: &ConvGeom, group: usize, cols: &mut [T]) {
    let hw_out = g.ho * g.wo;
    for ci in 0..g.cin_g() {
        let plane = &x[(group * g.cin_g() + ci) * g.h * g.w..][..g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = &mut cols[((ci * g.kh + ky) * g.kw + kx) * hw_out..][..hw_out];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let dst = &mut row[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..][..g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back onto the input gradient.
fn col2im<T: Element>(cols: &[T], g: &ConvGeom, group: usize, dx: &mut [T]) {
    let hw_out = g.ho * g.wo;
    for ci in 0..g.cin_g() {
        let plane = &mut dx[(group * g.cin_g() + ci) * g.h * g.w..][..g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = &cols[((ci * g.kh + ky) * g.kw + kx) * hw_out..][..hw_out];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..][..g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] = dst[ix as usize] + row[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn depthwise_forward<T: Element>(x: &[T], w: &[T], g: &ConvGeom, out: &mut [T]) {
    let (h, wd, ho, wo, k_h, k_w) = (g.h, g.w, g.ho, g.wo, g.kh, g.kw);
    for bc in 0..g.batch * g.c_in {
        let c = bc % g.c_in;
        let plane = &x[bc * h * wd..][..h * wd];
        let kern = &w[c * k_h * k_w..][..k_h * k_w];
        let dst = &mut out[bc * ho * wo..][..ho * wo];
        for ky in 0..k_h {
            for kx in 0..k_w {
                let kv = kern[ky * k_w + kx];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * wd..][..wd];
                    let row = &mut dst[oy * wo..][..wo];
                    for (ox, d) in row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < wd as isize {
                            *d = *d + kv * src[ix as usize];
                        }
                    }
                }
            }
        }
    }
}

fn depthwise_backward<T: Element>(
    x: &[T],
    w: &[T],
    g: &ConvGeom,
    gout: &[T],
    dx: Option<&mut [T]>,
    dw: Option<&mut [T]>,
) {
    let (h, wd, ho, wo, k_h, k_w) = (g.h, g.w, g.ho, g.wo, g.kh, g.kw);
    let mut dx = dx;
    let mut dw = dw;
    for bc in 0..g.batch * g.c_in {
        let c = bc % g.c_in;
        let plane = &x[bc * h * wd..][..h * wd];
        let go = &gout[bc * ho * wo..][..ho * wo];
        for ky in 0..k_h {
            for kx in 0..k_w {
                let kv = w[c * k_h * k_w + ky * k_w + kx];
                let mut acc = T::zero();
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix < 0 || ix >= wd as isize {
                            continue;
                        }
                        let gv = go[oy * wo + ox];
                        acc = acc + gv * plane[iy * wd + ix as usize];
                        if let Some(dx) = dx.as_deref_mut() {
                            let i = bc * h * wd + iy * wd + ix as usize;
                            dx[i] = dx[i] + gv * kv;
                        }
                    }
                }
                if let Some(dw) = dw.as_deref_mut() {
                    let i = c * k_h * k_w + ky * k_w + kx;
                    dw[i] = dw[i] + acc;
                }
            }
        }
    }
}

impl<T: Element> Tensor<T> {
    /// 2-D cross-correlation. `self` is `[B, C_in, H, W]`, `weight` is
    /// `[C_out, C_in/groups, kh, kw]`, symmetric zero padding.
    pub fn conv2d(
        &self,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Tensor<T>> {
        let (sx, sw) = (self.shape(), weight.shape());
        if sx.len() != 4 || sw.len() != 4 {
            return Err(Error::shape("conv2d", sx, sw));
        }
        if groups == 0 || sx[1] % groups != 0 || sw[0] % groups != 0 {
            return Err(Error::config(format!(
                "conv2d: {groups} groups do not divide {} input / {} output channels",
                sx[1], sw[0]
            )));
        }
        if sw[1] != sx[1] / groups {
            return Err(Error::shape("conv2d", sx, sw));
        }
        if stride == 0 {
            return Err(Error::config("conv2d: stride must be positive"));
        }
        let (h, w) = (sx[2], sx[3]);
        let (kh, kw) = (sw[2], sw[3]);
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(Error::config(format!(
                "conv2d: kernel {kh}x{kw} larger than padded input {h}x{w} (+{padding})"
            )));
        }
        let geom = ConvGeom {
            batch: sx[0],
            c_in: sx[1],
            h,
            w,
            c_out: sw[0],
            kh,
            kw,
            stride,
            pad: padding,
            groups,
            ho: (h + 2 * padding - kh) / stride + 1,
            wo: (w + 2 * padding - kw) / stride + 1,
        };
        if let Some(b) = bias {
            if b.shape() != [geom.c_out] {
                return Err(Error::shape("conv2d", sw, b.shape()));
            }
        }
        let hw_out = geom.ho * geom.wo;
        counter::record(
            OpKind::Conv,
            (geom.batch * geom.c_out * hw_out * geom.cin_g() * kh * kw) as u64,
        );

        let x = self.data();
        let wt = weight.data();
        let mut out = vec![T::zero(); geom.batch * geom.c_out * hw_out];
        if geom.is_depthwise() {
            depthwise_forward(x, wt, &geom, &mut out);
        } else {
            let kdim = geom.cin_g() * kh * kw;
            let mut cols = if geom.is_pointwise() {
                Vec::new()
            } else {
                vec![T::zero(); kdim * hw_out]
            };
            for b in 0..geom.batch {
                let xb = &x[b * geom.c_in * h * w..][..geom.c_in * h * w];
                for gi in 0..groups {
                    let a = &wt[gi * geom.cout_g() * kdim..][..geom.cout_g() * kdim];
                    let dst = &mut out[(b * geom.c_out + gi * geom.cout_g()) * hw_out..]
                        [..geom.cout_g() * hw_out];
                    if geom.is_pointwise() {
                        let src = &xb[gi * geom.cin_g() * hw_out..][..kdim * hw_out];
                        gemm(
                            geom.cout_g(),
                            kdim,
                            hw_out,
                            a,
                            false,
                            src,
                            false,
                            dst,
                            false,
                        );
                    } else {
                        im2col(xb, &geom, gi, &mut cols);
                        gemm(
                            geom.cout_g(),
                            kdim,
                            hw_out,
                            a,
                            false,
                            &cols,
                            false,
                            dst,
                            false,
                        );
                    }
                }
            }
        }
        if let Some(bv) = bias {
            for (i, plane) in out.chunks_mut(hw_out).enumerate() {
                let bval = bv.data()[i % geom.c_out];
                plane.iter_mut().for_each(|v| *v = *v + bval);
            }
        }

        let (xt, wt_t) = (self.clone(), weight.clone());
        let mut inputs = vec![self, weight];
        if let Some(b) = bias {
            inputs.push(b);
        }
        let shape = vec![geom.batch, geom.c_out, geom.ho, geom.wo];
        Ok(Tensor::from_op(
            shape,
            out,
            "conv2d",
            &inputs,
            move |gout, needs| {
                let g = geom;
                let (x, wt) = (xt.data(), wt_t.data());
                let mut dx = needs[0].then(|| vec![T::zero(); x.len()]);
                let mut dw = needs[1].then(|| vec![T::zero(); wt.len()]);
                if g.is_depthwise() {
                    depthwise_backward(x, wt, &g, gout, dx.as_deref_mut(), dw.as_deref_mut());
                } else {
                    let kdim = g.cin_g() * g.kh * g.kw;
                    let mut cols = vec![T::zero(); kdim * hw_out];
                    for b in 0..g.batch {
                        let xb = &x[b * g.c_in * g.h * g.w..][..g.c_in * g.h * g.w];
                        for gi in 0..g.groups {
                            let a = &wt[gi * g.cout_g() * kdim..][..g.cout_g() * kdim];
                            let go = &gout[(b * g.c_out + gi * g.cout_g()) * hw_out..]
                                [..g.cout_g() * hw_out];
                            if let Some(dw) = dw.as_mut() {
                                let dst = &mut dw[gi * g.cout_g() * kdim..][..g.cout_g() * kdim];
                                if g.is_pointwise() {
                                    let src = &xb[gi * g.cin_g() * hw_out..][..kdim * hw_out];
                                    gemm(g.cout_g(), hw_out, kdim, go, false, src, true, dst, true);
                                } else {
                                    im2col(xb, &g, gi, &mut cols);
                                    gemm(
                                        g.cout_g(),
                                        hw_out,
                                        kdim,
                                        go,
                                        false,
                                        &cols,
                                        true,
                                        dst,
                                        true,
                                    );
                                }
                            }
                            if let Some(dx) = dx.as_mut() {
                                let dxb = &mut dx[b * g.c_in * g.h * g.w..][..g.c_in * g.h * g.w];
                                if g.is_pointwise() {
                                    let dst = &mut dxb[gi * g.cin_g() * hw_out..][..kdim * hw_out];
                                    gemm(kdim, g.cout_g(), hw_out, a, true, go, false, dst, true);
                                } else {
                                    gemm(
                                        kdim,
                                        g.cout_g(),
                                        hw_out,
                                        a,
                                        true,
                                        go,
                                        false,
                                        &mut cols,
                                        false,
                                    );
                                    col2im(&cols, &g, gi, dxb);
                                }
                            }
                        }
                    }
                }
                let mut grads = vec![dx, dw];
                if needs.len() == 3 {
                    grads.push(needs[2].then(|| {
                        let mut gb = vec![T::zero(); g.c_out];
                        for (i, plane) in gout.chunks(hw_out).enumerate() {
                            let s: T = plane.iter().copied().sum();
                            gb[i % g.c_out] = gb[i % g.c_out] + s;
                        }
                        gb
                    }));
                }
                grads
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: &[usize]) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::from_vec(
            shape,
            (0..n).map(|i| ((i * 37 % 11) as f64) - 5.0).collect(),
        )
        .unwrap()
    }

    #[test]
    fn depthwise_delta_kernel_is_identity() {
        let x = ramp(&[2, 3, 5, 4]);
        let mut w = vec![0.0; 3 * 9];
        for c in 0..3 {
            w[c * 9 + 4] = 1.0;
        }
        let w = Tensor::from_vec(&[3, 1, 3, 3], w).unwrap();
        let y = x.conv2d(&w, None, 1, 1, 3).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn pointwise_identity_matrix_is_identity() {
        let x = ramp(&[1, 4, 3, 3]);
        let mut w = vec![0.0; 16];
        for c in 0..4 {
            w[c * 4 + c] = 1.0;
        }
        let w = Tensor::from_vec(&[4, 4, 1, 1], w).unwrap();
        let y = x.conv2d(&w, None, 1, 0, 1).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn output_extent_formula() {
        let x = ramp(&[1, 2, 9, 7]);
        let w = ramp(&[4, 2, 3, 3]);
        let y = x.conv2d(&w, None, 2, 1, 1).unwrap();
        assert_eq!(y.shape(), &[1, 4, (9 + 2 - 3) / 2 + 1, (7 + 2 - 3) / 2 + 1]);
    }

    #[test]
    fn bad_group_count_is_config_error() {
        let x = ramp(&[1, 3, 4, 4]);
        let w = ramp(&[4, 1, 3, 3]);
        assert!(matches!(x.conv2d(&w, None, 1, 1, 2), Err(Error::Config(_))));
    }

    #[test]
    fn general_path_matches_direct_loop() {
        // strided grouped conv against a literal six-loop reference
        let x = ramp(&[1, 4, 6, 5]);
        let w = Tensor::from_vec(
            &[6, 2, 3, 2],
            (0..72).map(|i| (i % 7) as f64 * 0.25 - 0.7).collect(),
        )
        .unwrap();
        let y = x.conv2d(&w, None, 2, 1, 2).unwrap();
        let (ho, wo) = (y.shape()[2], y.shape()[3]);
        for co in 0..6 {
            let gi = co / 3;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = 0.0;
                    for ci in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..2 {
                                let iy = (oy * 2 + ky) as isize - 1;
                                let ix = (ox * 2 + kx) as isize - 1;
                                if (0..6).contains(&iy) && (0..5).contains(&ix) {
                                    s += x.data()
                                        [(gi * 2 + ci) * 30 + iy as usize * 5 + ix as usize]
                                        * w.data()[((co * 2 + ci) * 3 + ky) * 2 + kx];
                                }
                            }
                        }
                    }
                    assert!((y.data()[(co * ho + oy) * wo + ox] - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn depthwise_mac_count() {
        let x = ramp(&[1, 8, 16, 16]);
        let w = ramp(&[8, 1, 5, 5]);
        let (_, counts) = counter::count(|| x.conv2d(&w, None, 1, 2, 8).unwrap());
        assert_eq!(counts.total_of(OpKind::Conv), 16 * 16 * 8 * 25);
    }
}
