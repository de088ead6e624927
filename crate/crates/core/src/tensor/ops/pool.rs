use crate::error::{Error, Result};
use crate::tensor::counter::{self, OpKind};
use crate::tensor::{Element, Tensor};

/// Half-open input range `[floor(i·n/out), ceil((i+1)·n/out))` covered by output cell `i`.
pub fn adaptive_window(i: usize, n: usize, out: usize) -> (usize, usize) {
    let start = i * n / out;
    let end = ((i + 1) * n).div_ceil(out);
    (start, end)
}

impl<T: Element> Tensor<T> {
    /// Average pooling of `[B, C, H, W]` onto an `out_h × out_w` grid with
    /// adaptive window boundaries.
    pub fn adaptive_avg_pool2d(&self, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 4 {
            return Err(Error::invalid(
                "adaptive_avg_pool2d",
                format!("expected 4-d input, got {s:?}"),
            ));
        }
        if out_h == 0 || out_w == 0 {
            return Err(Error::config(
                "adaptive_avg_pool2d: output extent must be positive",
            ));
        }
        let (bc, h, w) = (s[0] * s[1], s[2], s[3]);
        let rows: Vec<(usize, usize)> = (0..out_h).map(|i| adaptive_window(i, h, out_h)).collect();
        let cols: Vec<(usize, usize)> = (0..out_w).map(|j| adaptive_window(j, w, out_w)).collect();
        let reads: usize = rows.iter().map(|r| r.1 - r.0).sum::<usize>()
            * cols.iter().map(|c| c.1 - c.0).sum::<usize>();
        counter::record(OpKind::Pool, (bc * reads) as u64);

        let x = self.data();
        let mut out = Vec::with_capacity(bc * out_h * out_w);
        for p in 0..bc {
            let plane = &x[p * h * w..][..h * w];
            for &(y0, y1) in &rows {
                for &(x0, x1) in &cols {
                    let mut acc = T::zero();
                    for yy in y0..y1 {
                        for xx in x0..x1 {
                            acc = acc + plane[yy * w + xx];
                        }
                    }
                    let area = T::from_usize((y1 - y0) * (x1 - x0)).expect("area");
                    out.push(acc / area);
                }
            }
        }
        let shape = vec![s[0], s[1], out_h, out_w];
        Ok(Tensor::from_op(
            shape,
            out,
            "adaptive_avg_pool2d",
            &[self],
            move |g, _| {
                let mut gx = vec![T::zero(); bc * h * w];
                for p in 0..bc {
                    let plane = &mut gx[p * h * w..][..h * w];
                    for (i, &(y0, y1)) in rows.iter().enumerate() {
                        for (j, &(x0, x1)) in cols.iter().enumerate() {
                            let area = T::from_usize((y1 - y0) * (x1 - x0)).expect("area");
                            let gv = g[(p * out_h + i) * out_w + j] / area;
                            for yy in y0..y1 {
                                for xx in x0..x1 {
                                    plane[yy * w + xx] = plane[yy * w + xx] + gv;
                                }
                            }
                        }
                    }
                }
                vec![Some(gx)]
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooling_to_input_size_is_identity() {
        let x = Tensor::<f64>::from_vec(&[1, 2, 3, 3], (0..18).map(|i| i as f64 * 0.3).collect())
            .unwrap();
        assert_eq!(x.adaptive_avg_pool2d(3, 3).unwrap().data(), x.data());
    }

    #[test]
    fn constant_grid_stays_constant() {
        let x = Tensor::<f64>::full(&[1, 1, 4, 4], 2.5).unwrap();
        assert_eq!(x.adaptive_avg_pool2d(2, 2).unwrap().data(), &[2.5; 4]);
    }

    #[test]
    fn one_dimensional_analogue() {
        let x = Tensor::<f64>::from_f64(&[1, 1, 1, 4], &[1., 2., 3., 4.]).unwrap();
        assert_eq!(x.adaptive_avg_pool2d(1, 2).unwrap().data(), &[1.5, 3.5]);
    }

    #[test]
    fn indivisible_windows_overlap() {
        assert_eq!(adaptive_window(0, 5, 3), (0, 2));
        assert_eq!(adaptive_window(1, 5, 3), (1, 4));
        assert_eq!(adaptive_window(2, 5, 3), (3, 5));
    }

    #[test]
    fn zero_extent_is_config_error() {
        let x = Tensor::<f64>::zeros(&[1, 1, 4, 4]).unwrap();
        assert!(matches!(x.adaptive_avg_pool2d(0, 2), Err(Error::Config(_))));
    }
}
