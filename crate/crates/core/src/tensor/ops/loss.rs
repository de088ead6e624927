use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

impl<T: Element> Tensor<T> {
    /// Mean softmax cross-entropy of `[B, K]` logits against class indices.
    pub fn cross_entropy(&self, targets: &[usize]) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 2 || s[0] != targets.len() {
            return Err(Error::shape("cross_entropy", s, &[targets.len()]));
        }
        let (b, k) = (s[0], s[1]);
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return Err(Error::invalid(
                "cross_entropy",
                format!("target {bad} >= {k} classes"),
            ));
        }
        let x = self.data();
        let mut probs = vec![T::zero(); b * k];
        let mut loss = T::zero();
        for (r, &t) in targets.iter().enumerate() {
            let row = &x[r * k..(r + 1) * k];
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let z: T = row.iter().map(|&v| (v - m).exp()).sum();
            let lse = m + z.ln();
            loss = loss + lse - row[t];
            for j in 0..k {
                probs[r * k + j] = (row[j] - lse).exp();
            }
        }
        let bf = T::from_usize(b).expect("batch");
        let targets = targets.to_vec();
        Ok(Tensor::from_op(
            vec![1],
            vec![loss / bf],
            "cross_entropy",
            &[self],
            move |g, _| {
                let scale = g[0] / bf;
                let mut dx: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (r, &t) in targets.iter().enumerate() {
                    dx[r * k + t] = dx[r * k + t] - scale;
                }
                vec![Some(dx)]
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_k() {
        let x = Tensor::<f64>::zeros(&[3, 4]).unwrap();
        let l = x.cross_entropy(&[0, 1, 3]).unwrap().item().unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_target_rejected() {
        let x = Tensor::<f64>::zeros(&[1, 2]).unwrap();
        assert!(x.cross_entropy(&[2]).is_err());
    }
}
