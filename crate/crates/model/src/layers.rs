use musefm_autodiff::{Init, ParamStore, Tensor, LAYER_NORM_EPS};
use rand::Rng;

use crate::error::Result;

/// `x W + b` with `W` stored as `[in, out]`.
#[derive(Debug, Clone)]
pub(crate) struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    /// Uniform `+-scale / sqrt(fan_in)` initialization for weight and bias.
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, scale: f64, rng: &mut impl Rng) -> Result<Self> {
        let init = Init::Uniform(scale / (fan_in as f64).sqrt());
        Ok(Self {
            w: store.add(&format!("{name}.w"), &[fan_in, fan_out], init, rng)?,
            b: store.add(&format!("{name}.b"), &[fan_out], init, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(&self.w)?.add(&self.b)?)
    }
}

/// Pre-LN transformer block with bidirectional multi-head attention:
/// `x + Att(LN(x))`, then `x + MLP(LN(x))`.
#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub qkv: Linear,
    pub proj: Linear,
    pub fc: Linear,
    pub out: Linear,
    heads: usize,
}

impl Block {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, heads: usize, mlp_ratio: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            qkv: Linear::new(store, &format!("{name}.attn.qkv"), d, 3 * d, 1.0, rng)?,
            proj: Linear::new(store, &format!("{name}.attn.proj"), d, d, 1.0, rng)?,
            fc: Linear::new(store, &format!("{name}.mlp.fc"), d, mlp_ratio * d, 1.0, rng)?,
            out: Linear::new(store, &format!("{name}.mlp.out"), mlp_ratio * d, d, 1.0, rng)?,
            heads,
        })
    }

    fn attention(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (h, dh) = (self.heads, d / self.heads);
        let qkv = self.qkv.forward(x)?;
        let head = |i: usize| -> Result<Tensor> {
            Ok(qkv.slice(2, i * d, (i + 1) * d)?.reshape(&[b, t, h, dh])?.permute(&[0, 2, 1, 3])?)
        };
        let (q, k, v) = (head(0)?, head(1)?, head(2)?);
        let att = q.matmul(&k.transpose(2, 3)?)?.scale(1.0 / (dh as f64).sqrt())?.softmax()?;
        let o = att.matmul(&v)?.permute(&[0, 2, 1, 3])?.reshape(&[b, t, d])?;
        self.proj.forward(&o)
    }

    /// `x` is `[batch, tokens, d]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x = x.add(&self.attention(&x.layer_norm(LAYER_NORM_EPS)?)?)?;
        let m = self.out.forward(&self.fc.forward(&x.layer_norm(LAYER_NORM_EPS)?)?.gelu()?)?;
        Ok(x.add(&m)?)
    }
}
