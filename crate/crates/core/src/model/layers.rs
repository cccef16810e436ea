use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::Rng as StreamRng;
use crate::tensor::{Float, Parameter, Tensor};

pub(crate) const INIT_STD: f64 = 0.02;
pub(crate) const LN_EPS: Float = 1e-5;
const MASK_VALUE: Float = -1e9;

pub(crate) fn normal_param(name: String, shape: &[usize], rng: &mut impl Rng) -> Result<Parameter> {
    let dist = Normal::new(0.0, INIT_STD).expect("valid normal");
    let n = shape.iter().product();
    let data = (0..n).map(|_| dist.sample(rng) as Float).collect();
    Parameter::new(name, data, shape)
}

pub(crate) fn const_param(name: String, shape: &[usize], value: Float) -> Result<Parameter> {
    Parameter::new(name, vec![value; shape.iter().product()], shape)
}

/// Inverted dropout; identity when `rng` is `None` or `p == 0`.
pub(crate) fn dropout(x: &Tensor, p: f64, rng: Option<&mut StreamRng>) -> Result<Tensor> {
    let Some(rng) = rng else { return Ok(x.clone()) };
    if p <= 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<Float> = (0..x.numel())
        .map(|_| {
            if rng.random::<f64>() < p {
                0.0
            } else {
                keep as Float
            }
        })
        .collect();
    x.mul(&Tensor::new(mask, x.shape())?)
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Linear {
    pub(crate) fn new(prefix: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Linear {
            weight: normal_param(format!("{prefix}.weight"), &[d_in, d_out], rng)?,
            bias: const_param(format!("{prefix}.bias"), &[d_out], 0.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.linear(&self.weight.tensor, &self.bias.tensor)
    }

    fn params(&self) -> [&Parameter; 2] {
        [&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: Parameter,
    pub bias: Parameter,
}

impl LayerNorm {
    pub(crate) fn new(prefix: &str, d: usize) -> Result<Self> {
        Ok(LayerNorm {
            gain: const_param(format!("{prefix}.gain"), &[d], 1.0)?,
            bias: const_param(format!("{prefix}.bias"), &[d], 0.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.layer_norm(&self.gain.tensor, &self.bias.tensor, LN_EPS)
    }
}

/// Additive key mask `[l, h, L, L]`: 0 on real keys, −1e9 on pad keys.
fn key_mask(pad_mask: &[bool], batch: usize, heads: usize, len: usize) -> Result<Tensor> {
    let mut m = Vec::with_capacity(batch * heads * len * len);
    for b in 0..batch {
        let keys = &pad_mask[b * len..(b + 1) * len];
        for _ in 0..heads * len {
            m.extend(keys.iter().map(|&real| if real { 0.0 } else { MASK_VALUE }));
        }
    }
    Tensor::new(m, &[batch, heads, len, len])
}

/// Multi-head scaled dot-product self-attention.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub n_heads: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

impl MultiHeadAttention {
    pub(crate) fn new(
        prefix: &str,
        d_model: usize,
        n_heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(MultiHeadAttention {
            n_heads,
            query: Linear::new(&format!("{prefix}.query"), d_model, d_model, rng)?,
            key: Linear::new(&format!("{prefix}.key"), d_model, d_model, rng)?,
            value: Linear::new(&format!("{prefix}.value"), d_model, d_model, rng)?,
            output: Linear::new(&format!("{prefix}.output"), d_model, d_model, rng)?,
        })
    }

    /// Output projection of the concatenated heads, before any residual,
    /// plus the attention probabilities `[l, h, L, L]`.
    pub fn forward(&self, x: &Tensor, pad_mask: &[bool]) -> Result<(Tensor, Tensor)> {
        let &[batch, len, d_model] = x.shape() else {
            return Err(Error::dim("attention input", x.shape(), &[0, 0, 0]));
        };
        if pad_mask.len() != batch * len {
            return Err(Error::dim(
                "attention mask",
                &[batch, len],
                &[pad_mask.len()],
            ));
        }
        let h = self.n_heads;
        let dk = d_model / h;
        let split = |t: Tensor| t.reshape(&[batch, len, h, dk]);
        let q = split(self.query.forward(x)?)?.permute(&[0, 2, 1, 3])?;
        let k_t = split(self.key.forward(x)?)?.permute(&[0, 2, 3, 1])?;
        let v = split(self.value.forward(x)?)?.permute(&[0, 2, 1, 3])?;

        let scores = q.matmul(&k_t)?.scale(1.0 / (dk as Float).sqrt());
        let probs = scores
            .add(&key_mask(pad_mask, batch, h, len)?)?
            .softmax(3)?;
        let context = probs
            .matmul(&v)?
            .permute(&[0, 2, 1, 3])?
            .reshape(&[batch, len, d_model])?;
        Ok((self.output.forward(&context)?, probs))
    }

    fn params(&self) -> Vec<&Parameter> {
        [&self.query, &self.key, &self.value, &self.output]
            .into_iter()
            .flat_map(Linear::params)
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        [
            &mut self.query,
            &mut self.key,
            &mut self.value,
            &mut self.output,
        ]
        .into_iter()
        .flat_map(Linear::params_mut)
        .collect()
    }
}

/// A pure transform applied to the attention sublayer output.
pub type MhaHook<'a> = &'a dyn Fn(&Tensor) -> Result<Tensor>;

/// Post-norm encoder block:
/// `h = LN(x + Dropout(hook(MHA(x))))`, `out = LN(h + Dropout(FFN(h)))`.
#[derive(Clone, Debug)]
pub struct EncoderBlock {
    pub attention: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub norm2: LayerNorm,
    pub dropout: f64,
}

impl EncoderBlock {
    pub(crate) fn new(
        prefix: &str,
        d_model: usize,
        n_heads: usize,
        d_ff: usize,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(EncoderBlock {
            attention: MultiHeadAttention::new(
                &format!("{prefix}.attention"),
                d_model,
                n_heads,
                rng,
            )?,
            norm1: LayerNorm::new(&format!("{prefix}.norm1"), d_model)?,
            ffn_in: Linear::new(&format!("{prefix}.ffn_in"), d_model, d_ff, rng)?,
            ffn_out: Linear::new(&format!("{prefix}.ffn_out"), d_ff, d_model, rng)?,
            norm2: LayerNorm::new(&format!("{prefix}.norm2"), d_model)?,
            dropout,
        })
    }

    /// Returns the block output and the attention probabilities.
    pub fn forward(
        &self,
        x: &Tensor,
        pad_mask: &[bool],
        mixer: Option<MhaHook<'_>>,
        mut rng: Option<&mut StreamRng>,
    ) -> Result<(Tensor, Tensor)> {
        let (attn, probs) = self.attention.forward(x, pad_mask)?;
        let attn = match mixer {
            Some(mix) => mix(&attn)?,
            None => attn,
        };
        let attn = dropout(&attn, self.dropout, rng.as_deref_mut())?;
        let h = self.norm1.forward(&x.add(&attn)?)?;
        let f = self.ffn_out.forward(&self.ffn_in.forward(&h)?.gelu())?;
        let f = dropout(&f, self.dropout, rng.as_deref_mut())?;
        Ok((self.norm2.forward(&h.add(&f)?)?, probs))
    }

    pub(crate) fn params(&self) -> Vec<&Parameter> {
        let mut p = self.attention.params();
        p.extend([&self.norm1.gain, &self.norm1.bias]);
        p.extend(self.ffn_in.params());
        p.extend(self.ffn_out.params());
        p.extend([&self.norm2.gain, &self.norm2.bias]);
        p
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut p = self.attention.params_mut();
        p.extend([&mut self.norm1.gain, &mut self.norm1.bias]);
        p.extend(self.ffn_in.params_mut());
        p.extend(self.ffn_out.params_mut());
        p.extend([&mut self.norm2.gain, &mut self.norm2.bias]);
        p
    }
}
