//! Transformer-encoder classifier with mixup hook sites.
//!
//! Hook sites, in forward order:
//!
//! * `Embedding`: token + position embedding output
//! * `MhaOutput(i)`: attention output of block `i`, before the residual add
//! * `BlockOutput(i)`: output of block `i`
//! * `Pooled`: class-token representation fed to the classifier

mod dump;
mod layers;

use std::fmt;

use rand::Rng;

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::mixup::{build_mixer, MixPlan, SiteMixer};
use crate::rng::Rng as StreamRng;
use crate::tensor::{Parameter, Tensor};

pub use dump::write_attention_dump;
pub use layers::{EncoderBlock, LayerNorm, Linear, MhaHook, MultiHeadAttention};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub max_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub n_layers: usize,
    pub n_classes: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 0,
            max_len: 256,
            d_model: 32,
            n_heads: 2,
            d_ff: 64,
            n_layers: 2,
            n_classes: 2,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.vocab_size < 3 {
            return fail(format!(
                "model.vocab_size {} cannot hold the reserved tokens",
                self.vocab_size
            ));
        }
        if self.max_len == 0 {
            return fail("model.max_len must be positive".into());
        }
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return fail(format!(
                "model.d_model {} must be a positive multiple of model.n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.d_ff == 0 {
            return fail("model.d_ff must be positive".into());
        }
        if self.n_layers == 0 {
            return fail("model.n_layers must be at least 1".into());
        }
        if self.n_classes < 2 {
            return fail("model.n_classes must be at least 2".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("model.dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

/// Where a mixer intercepts the forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HookSite {
    Embedding,
    MhaOutput(usize),
    BlockOutput(usize),
    Pooled,
}

impl HookSite {
    pub fn layer_index(&self) -> Option<usize> {
        match *self {
            HookSite::MhaOutput(i) | HookSite::BlockOutput(i) => Some(i),
            HookSite::Embedding | HookSite::Pooled => None,
        }
    }

    pub fn validate(&self, n_layers: usize) -> Result<()> {
        match self.layer_index() {
            Some(i) if i >= n_layers => Err(Error::Config(format!(
                "hook site {self} out of range for a {n_layers}-layer model"
            ))),
            _ => Ok(()),
        }
    }
}

impl SiteMixer {
    fn record(&self) -> HookRecord {
        HookRecord {
            site: self.site,
            lambda: self.lambda,
            index_r: self.index_r.to_vec(),
        }
    }
}

impl fmt::Display for HookSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HookSite::Embedding => f.write_str("embedding"),
            HookSite::MhaOutput(i) => write!(f, "mha_output[{i}]"),
            HookSite::BlockOutput(i) => write!(f, "block_output[{i}]"),
            HookSite::Pooled => f.write_str("pooled"),
        }
    }
}

/// A mix that was actually applied during a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct HookRecord {
    pub site: HookSite,
    pub lambda: f64,
    pub index_r: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct ForwardTrace {
    /// One `[l, heads, L, L]` tensor per layer (detached).
    pub attention_maps: Vec<Tensor>,
    pub hook_log: Vec<HookRecord>,
}

pub struct ForwardOutput {
    pub logits: Tensor,
    pub trace: Option<ForwardTrace>,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub token_embedding: Parameter,
    pub position_embedding: Parameter,
    pub blocks: Vec<EncoderBlock>,
    pub classifier: Linear,
}

impl Model {
    /// Randomly initialized model: N(0, 0.02) weights and embeddings, zero
    /// biases, unit layer-norm gains.
    pub fn new(config: ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let token_embedding =
            layers::normal_param("embedding.token".into(), &[config.vocab_size, d], rng)?;
        let position_embedding =
            layers::normal_param("embedding.position".into(), &[config.max_len, d], rng)?;
        let blocks = (0..config.n_layers)
            .map(|i| {
                EncoderBlock::new(
                    &format!("blocks.{i}"),
                    d,
                    config.n_heads,
                    config.d_ff,
                    config.dropout,
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let classifier = Linear::new("classifier", d, config.n_classes, rng)?;
        Ok(Model {
            config,
            token_embedding,
            position_embedding,
            blocks,
            classifier,
        })
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut p = vec![&self.token_embedding, &self.position_embedding];
        for b in &self.blocks {
            p.extend(b.params());
        }
        p.extend([&self.classifier.weight, &self.classifier.bias]);
        p
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut p = vec![&mut self.token_embedding, &mut self.position_embedding];
        for b in &mut self.blocks {
            p.extend(b.params_mut());
        }
        p.extend([&mut self.classifier.weight, &mut self.classifier.bias]);
        p
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.tensor.numel()).sum()
    }

    /// Token plus learned position embedding, `[l, L, d_model]`.
    pub fn embed(&self, batch: &Batch) -> Result<Tensor> {
        let (l, len, d) = (batch.size, batch.seq_len, self.config.d_model);
        if len > self.config.max_len {
            return Err(Error::Index {
                what: "sequence position",
                index: len - 1,
                bound: self.config.max_len,
            });
        }
        let tokens = self
            .token_embedding
            .tensor
            .index_select(0, &batch.token_ids)?;
        let positions: Vec<usize> = (0..l).flat_map(|_| 0..len).collect();
        let pos = self.position_embedding.tensor.index_select(0, &positions)?;
        tokens.add(&pos)?.reshape(&[l, len, d])
    }

    /// Logits `[l, n_classes]`.
    ///
    /// With a plan, every site the strategy names is mixed using the plan's
    /// single permutation and weight. Dropout is active only when
    /// `dropout_rng` is given.
    pub fn forward(
        &self,
        batch: &Batch,
        plan: Option<&MixPlan>,
        mut dropout_rng: Option<&mut StreamRng>,
        trace: bool,
    ) -> Result<ForwardOutput> {
        let mixers: Vec<SiteMixer> = match plan {
            Some(p) => {
                if p.index_r.len() != batch.size {
                    return Err(Error::Config(format!(
                        "plan permutes {} rows but the batch has {}",
                        p.index_r.len(),
                        batch.size
                    )));
                }
                build_mixer(p, self.config.n_layers)?
            }
            None => Vec::new(),
        };
        let mixer_at = |site: HookSite| mixers.iter().find(|m| m.site == site);
        let mut log = Vec::new();
        let apply = |site: HookSite, x: Tensor, log: &mut Vec<HookRecord>| -> Result<Tensor> {
            match mixer_at(site) {
                Some(m) => {
                    log.push(m.record());
                    m.apply(&x)
                }
                None => Ok(x),
            }
        };

        let mut x = apply(HookSite::Embedding, self.embed(batch)?, &mut log)?;
        let mut attention_maps = Vec::new();
        for (i, block) in self.blocks.iter().enumerate() {
            let mha_mixer = mixer_at(HookSite::MhaOutput(i));
            let hook = |h: &Tensor| match mha_mixer {
                Some(m) => m.apply(h),
                None => Ok(h.clone()),
            };
            let hook_ref: Option<MhaHook<'_>> = mha_mixer.map(|_| &hook as MhaHook<'_>);
            let (out, probs) =
                block.forward(&x, &batch.pad_mask, hook_ref, dropout_rng.as_deref_mut())?;
            if let Some(m) = mha_mixer {
                log.push(m.record());
            }
            if trace {
                attention_maps.push(probs.detach());
            }
            x = apply(HookSite::BlockOutput(i), out, &mut log)?;
        }

        let pooled = x
            .index_select(1, &[0])?
            .reshape(&[batch.size, self.config.d_model])?;
        let pooled = apply(HookSite::Pooled, pooled, &mut log)?;
        let logits = self.classifier.forward(&pooled)?;
        Ok(ForwardOutput {
            logits,
            trace: trace.then_some(ForwardTrace {
                attention_maps,
                hook_log: log,
            }),
        })
    }

    /// Arg-max class per row, evaluation mode, no mixing.
    pub fn predict(&self, batch: &Batch) -> Result<Vec<usize>> {
        let logits = self.forward(batch, None, None, false)?.logits;
        Ok(argmax_rows(logits.data(), self.config.n_classes))
    }
}

pub fn argmax_rows(data: &[crate::tensor::Float], n: usize) -> Vec<usize> {
    data.chunks(n)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(
                    (0, row[0]),
                    |best, (i, &v)| if v > best.1 { (i, v) } else { best },
                )
                .0
        })
        .collect()
}
