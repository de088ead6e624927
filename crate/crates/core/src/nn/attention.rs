use super::{Init, Linear, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Multi-head scaled dot-product self-attention over `[B, N, C]` tokens.
#[derive(Debug, Clone)]
pub struct Mhsa {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub dim: usize,
    pub heads: usize,
}

impl Mhsa {
    pub fn new<T: Element>(
        init: &mut Init<'_, T>,
        name: &str,
        dim: usize,
        heads: usize,
    ) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::config(format!(
                "embedding dim {dim} not divisible by {heads} heads"
            )));
        }
        let mut s = init.sub(name);
        Ok(Mhsa {
            q: Linear::new(&mut s, "q", dim, dim)?,
            k: Linear::new(&mut s, "k", dim, dim)?,
            v: Linear::new(&mut s, "v", dim, dim)?,
            out: Linear::new(&mut s, "proj", dim, dim)?,
            dim,
            heads,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn forward<T: Element>(&self, ps: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_with_weights(ps, x)?.0)
    }

    /// Output plus the `[B, heads, N, N]` attention weights.
    pub fn forward_with_weights<T: Element>(
        &self,
        ps: &ParamStore<T>,
        x: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let s = x.shape();
        if s.len() != 3 || s[2] != self.dim {
            return Err(Error::shape("mhsa", s, &[self.dim]));
        }
        let (b, n, h, d) = (s[0], s[1], self.heads, self.head_dim());
        let split = |t: Tensor<T>| -> Result<Tensor<T>> {
            t.reshape(&[b, n, h, d])?.permute(&[0, 2, 1, 3])
        };
        let q = split(self.q.forward(ps, x)?)?;
        let k = self
            .k
            .forward(ps, x)?
            .reshape(&[b, n, h, d])?
            .permute(&[0, 2, 3, 1])?;
        let v = split(self.v.forward(ps, x)?)?;
        let scale = T::one() / T::from_usize(d).expect("head dim").sqrt();
        let attn = q.matmul(&k)?.scale(scale).softmax(3)?;
        let ctx = attn
            .matmul(&v)?
            .permute(&[0, 2, 1, 3])?
            .reshape(&[b, n, self.dim])?;
        Ok((self.out.forward(ps, &ctx)?, attn))
    }

    pub fn num_params(&self) -> usize {
        self.q.num_params() + self.k.num_params() + self.v.num_params() + self.out.num_params()
    }
}

/// `[B, C, H, W]` → `[B, H·W, C]`.
fn grid_to_tokens<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    x.flatten(2, 3)?.transpose(1, 2)
}

/// `[B, H·W, C]` → `[B, C, H, W]`.
fn tokens_to_grid<T: Element>(x: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    x.transpose(1, 2)?.unflatten(2, &[h, w])
}

/// Full self-attention over every position of a grid.
pub fn grid_attention<T: Element>(
    mhsa: &Mhsa,
    ps: &ParamStore<T>,
    x: &Tensor<T>,
) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.len() != 4 {
        return Err(Error::invalid(
            "grid_attention",
            format!("expected [B, C, H, W], got {s:?}"),
        ));
    }
    let y = mhsa.forward(ps, &grid_to_tokens(x)?)?;
    tokens_to_grid(&y, s[2], s[3])
}

/// Self-attention inside non-overlapping `window × window` tiles of a grid.
#[derive(Debug, Clone)]
pub struct WindowMhsa {
    pub mhsa: Mhsa,
    pub window: usize,
}

impl WindowMhsa {
    pub fn new<T: Element>(
        init: &mut Init<'_, T>,
        name: &str,
        dim: usize,
        heads: usize,
        window: usize,
    ) -> Result<Self> {
        Ok(WindowMhsa {
            mhsa: Mhsa::new(init, name, dim, heads)?,
            window,
        })
    }

    pub fn forward<T: Element>(&self, ps: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let s = x.shape();
        if s.len() != 4 {
            return Err(Error::invalid(
                "window_mhsa",
                format!("expected [B, C, H, W], got {s:?}"),
            ));
        }
        let (b, c, h, w, win) = (s[0], s[1], s[2], s[3], self.window);
        if win == 0 || h % win != 0 || w % win != 0 {
            return Err(Error::config(format!(
                "grid {h}x{w} not divisible by window {win}"
            )));
        }
        let (nh, nw) = (h / win, w / win);
        let windows = x
            .reshape(&[b, c, nh, win, nw, win])?
            .permute(&[0, 2, 4, 3, 5, 1])?
            .reshape(&[b * nh * nw, win * win, c])?;
        let y = self.mhsa.forward(ps, &windows)?;
        y.reshape(&[b, nh, nw, win, win, c])?
            .permute(&[0, 5, 1, 3, 2, 4])?
            .reshape(&[b, c, h, w])
    }

    pub fn num_params(&self) -> usize {
        self.mhsa.num_params()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::uniform;
    use crate::nn::ParamStore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(dim: usize, heads: usize) -> (ParamStore<f64>, Mhsa) {
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Mhsa::new(&mut Init::new(&mut ps, &mut rng), "attn", dim, heads).unwrap();
        (ps, m)
    }

    #[test]
    fn heads_must_divide_dim() {
        let mut ps = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            Mhsa::new(&mut Init::new(&mut ps, &mut rng), "a", 10, 3),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn single_token_reduces_to_value_then_output_projection() {
        let (ps, m) = build(8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = uniform(&[1, 1, 8], &mut rng);
        let y = m.forward(&ps, &x).unwrap();
        let expect = m.out.forward(&ps, &m.v.forward(&ps, &x).unwrap()).unwrap();
        for (a, b) in y.data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let (ps, m) = build(8, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = uniform(&[2, 5, 8], &mut rng).scale(4.0);
        let (_, attn) = m.forward_with_weights(&ps, &x).unwrap();
        for row in attn.data().chunks(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn window_attention_with_full_window_matches_grid_attention() {
        let (ps, m) = build(8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = uniform(&[1, 8, 4, 4], &mut rng);
        let full = grid_attention(&m, &ps, &x).unwrap();
        let win = WindowMhsa { mhsa: m, window: 4 }.forward(&ps, &x).unwrap();
        for (a, b) in full.data().iter().zip(win.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
