use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

impl<T: Element> Tensor<T> {
    fn same_shape(&self, other: &Tensor<T>, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(op, self.shape(), other.shape()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.same_shape(other, "add")?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            "add",
            &[self, other],
            |g, needs| vec![needs[0].then(|| g.to_vec()), needs[1].then(|| g.to_vec())],
        ))
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.same_shape(other, "sub")?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            "sub",
            &[self, other],
            |g, needs| {
                vec![
                    needs[0].then(|| g.to_vec()),
                    needs[1].then(|| g.iter().map(|&v| -v).collect()),
                ]
            },
        ))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.same_shape(other, "mul")?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(&a, &b)| a * b)
            .collect();
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            "mul",
            &[self, other],
            move |g, needs| {
                vec![
                    needs[0].then(|| g.iter().zip(b.data()).map(|(&g, &b)| g * b).collect()),
                    needs[1].then(|| g.iter().zip(a.data()).map(|(&g, &a)| g * a).collect()),
                ]
            },
        ))
    }

    pub fn scale(&self, factor: T) -> Tensor<T> {
        let data = self.data().iter().map(|&v| v * factor).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            "scale",
            &[self],
            move |g, _| vec![Some(g.iter().map(|&v| v * factor).collect())],
        )
    }

    pub fn add_scalar(&self, value: T) -> Tensor<T> {
        let data = self.data().iter().map(|&v| v + value).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            "add_scalar",
            &[self],
            |g, _| vec![Some(g.to_vec())],
        )
    }

    pub fn neg(&self) -> Tensor<T> {
        self.scale(-T::one())
    }

    /// `x / s` for a one-element tensor `s` (gradient flows to both).
    pub fn div_scalar_tensor(&self, s: &Tensor<T>) -> Result<Tensor<T>> {
        if s.numel() != 1 {
            return Err(Error::shape("div_scalar_tensor", self.shape(), s.shape()));
        }
        let sv = s.data()[0];
        if sv == T::zero() {
            return Err(Error::invalid("div_scalar_tensor", "division by zero"));
        }
        let data = self.data().iter().map(|&v| v / sv).collect();
        let x = self.clone();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            "div_scalar_tensor",
            &[self, s],
            move |g, needs| {
                let gx = needs[0].then(|| g.iter().map(|&v| v / sv).collect());
                let gs = needs[1].then(|| {
                    let dot: T = g.iter().zip(x.data()).map(|(&g, &x)| g * x).sum();
                    vec![-dot / (sv * sv)]
                });
                vec![gx, gs]
            },
        ))
    }

    /// Scales each leading-axis sample `b` by `factors[b]` (shape `[B]`).
    pub fn mul_per_sample(&self, factors: &Tensor<T>) -> Result<Tensor<T>> {
        if self.ndim() == 0 || factors.shape() != [self.shape()[0]] {
            return Err(Error::shape(
                "mul_per_sample",
                self.shape(),
                factors.shape(),
            ));
        }
        let per = self.numel() / self.shape()[0];
        let f = factors.data();
        let data = self
            .data()
            .chunks(per)
            .zip(f)
            .flat_map(|(row, &s)| row.iter().map(move |&v| v * s))
            .collect();
        let (x, m) = (self.clone(), factors.clone());
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            "mul_per_sample",
            &[self, factors],
            move |g, needs| {
                let gx = needs[0].then(|| {
                    g.chunks(per)
                        .zip(m.data())
                        .flat_map(|(row, &s)| row.iter().map(move |&v| v * s))
                        .collect()
                });
                let gm = needs[1].then(|| {
                    g.chunks(per)
                        .zip(x.data().chunks(per))
                        .map(|(gr, xr)| gr.iter().zip(xr).map(|(&a, &b)| a * b).sum())
                        .collect()
                });
                vec![gx, gm]
            },
        ))
    }

    /// Repeats the tensor along a new leading axis of extent `batch`.
    pub fn expand_batch(&self, batch: usize) -> Result<Tensor<T>> {
        if batch == 0 {
            return Err(Error::invalid("expand_batch", "batch must be positive"));
        }
        let mut shape = vec![batch];
        shape.extend_from_slice(self.shape());
        let n = self.numel();
        let data = (0..batch)
            .flat_map(|_| self.data().iter().copied())
            .collect();
        Ok(Tensor::from_op(
            shape,
            data,
            "expand_batch",
            &[self],
            move |g, _| {
                let mut acc = vec![T::zero(); n];
                for chunk in g.chunks(n) {
                    acc.iter_mut().zip(chunk).for_each(|(a, &v)| *a = *a + v);
                }
                vec![Some(acc)]
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let a = Tensor::<f64>::zeros(&[2, 3]).unwrap();
        let b = Tensor::<f64>::zeros(&[3, 2]).unwrap();
        let msg = a.add(&b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[3, 2]"), "{msg}");
    }

    #[test]
    fn reused_input_accumulates_both_paths() {
        let x = Tensor::<f64>::param(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        x.mul(&x).unwrap().sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, -2.0, 4.0]);

        let y = Tensor::<f64>::param(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        y.sum().add(&y.sum()).unwrap().backward().unwrap();
        assert_eq!(y.grad().unwrap(), vec![2.0; 3]);
    }

    #[test]
    fn div_scalar_tensor_grad() {
        let x = Tensor::<f64>::param(&[2], vec![1.0, 3.0]).unwrap();
        let s = Tensor::<f64>::param(&[1], vec![2.0]).unwrap();
        x.div_scalar_tensor(&s).unwrap().sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.5, 0.5]);
        assert_eq!(s.grad().unwrap(), vec![-1.0]);
    }

    #[test]
    fn expand_batch_sums_gradient() {
        let x = Tensor::<f64>::param(&[2], vec![1.0, 2.0]).unwrap();
        let e = x.expand_batch(3).unwrap();
        assert_eq!(e.shape(), &[3, 2]);
        e.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![3.0, 3.0]);
    }
}
