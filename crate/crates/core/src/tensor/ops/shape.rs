use crate::error::{Error, Result};
use crate::tensor::{numel, Element, Tensor};

/// Materializes `data` (row-major, `shape`) with axes reordered by `perm`.
pub(crate) fn permute_data<T: Copy>(
    data: &[T],
    shape: &[usize],
    perm: &[usize],
) -> (Vec<usize>, Vec<T>) {
    let nd = shape.len();
    let mut strides = vec![1usize; nd];
    for i in (0..nd.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let out_strides: Vec<usize> = perm.iter().map(|&p| strides[p]).collect();
    let total = data.len();
    let mut out = Vec::with_capacity(total);
    if nd == 0 || total == 0 {
        out.extend_from_slice(data);
        return (out_shape, out);
    }
    // innermost axis handled as a strided run
    let last = nd - 1;
    let run = out_shape[last];
    let run_stride = out_strides[last];
    let mut idx = vec![0usize; nd];
    let mut base = 0usize;
    while out.len() < total {
        if run_stride == 1 {
            out.extend_from_slice(&data[base..base + run]);
        } else {
            out.extend((0..run).map(|j| data[base + j * run_stride]));
        }
        // advance the outer odometer
        let mut ax = last;
        loop {
            if ax == 0 {
                break;
            }
            ax -= 1;
            idx[ax] += 1;
            base += out_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            base -= out_strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    (out_shape, out)
}

impl<T: Element> Tensor<T> {
    /// Same data under a new shape with equal element count. Shares the buffer.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if numel(shape) != self.numel() || shape.contains(&0) {
            return Err(Error::shape("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_shared(
            shape.to_vec(),
            self,
            "reshape",
            |g, _| vec![Some(g.to_vec())],
        ))
    }

    /// Merges axes `start..=end` into one.
    pub fn flatten(&self, start: usize, end: usize) -> Result<Tensor<T>> {
        if start > end || end >= self.ndim() {
            return Err(Error::invalid(
                "flatten",
                format!("axes {start}..={end} invalid for shape {:?}", self.shape()),
            ));
        }
        let s = self.shape();
        let mut shape = s[..start].to_vec();
        shape.push(s[start..=end].iter().product());
        shape.extend_from_slice(&s[end + 1..]);
        self.reshape(&shape)
    }

    /// Splits axis `axis` into `sizes`.
    pub fn unflatten(&self, axis: usize, sizes: &[usize]) -> Result<Tensor<T>> {
        if axis >= self.ndim() || numel(sizes) != self.shape()[axis] {
            return Err(Error::shape("unflatten", self.shape(), sizes));
        }
        let s = self.shape();
        let mut shape = s[..axis].to_vec();
        shape.extend_from_slice(sizes);
        shape.extend_from_slice(&s[axis + 1..]);
        self.reshape(&shape)
    }

    /// Reorders axes; output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor<T>> {
        let nd = self.ndim();
        let mut seen = vec![false; nd];
        if perm.len() != nd
            || perm
                .iter()
                .any(|&p| p >= nd || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::invalid(
                "permute",
                format!("{perm:?} is not a permutation of {nd} axes"),
            ));
        }
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return self.reshape(self.shape());
        }
        let (shape, data) = permute_data(self.data(), self.shape(), perm);
        let mut inverse = vec![0; nd];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let out_shape = shape.clone();
        Ok(Tensor::from_op(
            shape,
            data,
            "permute",
            &[self],
            move |g, _| vec![Some(permute_data(g, &out_shape, &inverse).1)],
        ))
    }

    /// Swaps two axes.
    pub fn transpose(&self, a: usize, b: usize) -> Result<Tensor<T>> {
        let nd = self.ndim();
        if a >= nd || b >= nd {
            return Err(Error::invalid(
                "transpose",
                format!("axes ({a}, {b}) for {nd}-d tensor"),
            ));
        }
        let mut perm: Vec<usize> = (0..nd).collect();
        perm.swap(a, b);
        self.permute(&perm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn transpose_2x3() {
        let x = Tensor::<f64>::from_f64(&[2, 3], &[1., 2., 3., 4., 5., 6.]).unwrap();
        let t = x.transpose(0, 1).unwrap();
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.data(), &[1., 4., 2., 5., 3., 6.]);
    }

    #[test]
    fn permute_backward_inverts() {
        let x = Tensor::<f64>::param(&[2, 3, 4], (0..24).map(f64::from).collect()).unwrap();
        let w = Tensor::<f64>::from_vec(&[4, 2, 3], (0..24).map(|i| f64::from(i) * 0.5).collect())
            .unwrap();
        x.permute(&[2, 0, 1])
            .unwrap()
            .mul(&w)
            .unwrap()
            .sum()
            .backward()
            .unwrap();
        let g = x.grad().unwrap();
        // element x[i][j][k] maps to p[k][i][j]
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    assert_eq!(g[i * 12 + j * 4 + k], w.data()[k * 6 + i * 3 + j]);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn reshape_and_flatten_round_trip_bitwise(
            dims in proptest::collection::vec(1usize..5, 2..5),
            seed in any::<u64>(),
        ) {
            let n: usize = dims.iter().product();
            let data: Vec<f64> = (0..n).map(|i| ((i as u64).wrapping_mul(seed | 1) % 1000) as f64 / 7.0).collect();
            let x = Tensor::<f64>::from_vec(&dims, data.clone()).unwrap();
            let flat = x.flatten(0, dims.len() - 1).unwrap();
            let back = flat.unflatten(0, &dims).unwrap();
            prop_assert_eq!(back.shape(), &dims[..]);
            prop_assert!(back.data().iter().zip(&data).all(|(a, b)| a.to_bits() == b.to_bits()));

            let perm: Vec<usize> = (0..dims.len()).rev().collect();
            let p = x.permute(&perm).unwrap().permute(&perm).unwrap();
            prop_assert!(p.data().iter().zip(&data).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
