//! Mixing mathematics: plans, feature interpolation, strategies, losses.
//!
//! A [`MixPlan`] is sampled once per training step. It fixes the batch
//! permutation and the interpolation weight, and every hook site mixed in
//! that step uses the same pair. [`build_mixer`] turns a plan into the set
//! of site transforms the model applies during its forward pass.

mod sampling;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::model::HookSite;
use crate::tensor::{Float, Tensor};

pub use sampling::{
    baseline_lambda, fold_lambda, make_permutation, sample_beta, sample_lambda_max, WeightSample,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    NoMixup,
    Amplify,
    EmbedMix,
    SentenceMix,
    TMix,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::NoMixup,
        StrategyKind::Amplify,
        StrategyKind::EmbedMix,
        StrategyKind::SentenceMix,
        StrategyKind::TMix,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::NoMixup => "none",
            StrategyKind::Amplify => "amplify",
            StrategyKind::EmbedMix => "embedmix",
            StrategyKind::SentenceMix => "sentencemix",
            StrategyKind::TMix => "tmix",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match norm.as_str() {
            "none" | "nomixup" => Ok(StrategyKind::NoMixup),
            "amplify" => Ok(StrategyKind::Amplify),
            "embedmix" => Ok(StrategyKind::EmbedMix),
            "sentencemix" | "sentencemixup" | "senmixup" => Ok(StrategyKind::SentenceMix),
            "tmix" => Ok(StrategyKind::TMix),
            _ => Err(Error::Config(format!(
                "unknown strategy {s:?} (none|amplify|embedmix|sentencemix|tmix)"
            ))),
        }
    }
}

/// Which mixup variant runs, and its knobs.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Shape of the symmetric Beta distribution.
    pub alpha: f64,
    /// Draws per step whose maximum becomes the weight (Amplify only).
    pub n_samples: usize,
    /// Blocks TMix may pick from; empty for every other kind.
    pub tmix_layers: Vec<usize>,
    /// Attention layers Amplify mixes; `None` means all of them.
    pub amplify_layers: Option<Vec<usize>>,
}

impl StrategyConfig {
    pub fn no_mixup() -> Self {
        StrategyConfig {
            kind: StrategyKind::NoMixup,
            alpha: 0.2,
            n_samples: 1,
            tmix_layers: Vec::new(),
            amplify_layers: None,
        }
    }

    pub fn amplify() -> Self {
        StrategyConfig {
            kind: StrategyKind::Amplify,
            alpha: 0.1,
            n_samples: 5,
            ..Self::no_mixup()
        }
    }

    pub fn embed_mix() -> Self {
        StrategyConfig {
            kind: StrategyKind::EmbedMix,
            ..Self::no_mixup()
        }
    }

    pub fn sentence_mix() -> Self {
        StrategyConfig {
            kind: StrategyKind::SentenceMix,
            ..Self::no_mixup()
        }
    }

    pub fn tmix(n_layers: usize) -> Self {
        StrategyConfig {
            kind: StrategyKind::TMix,
            tmix_layers: default_tmix_layers(n_layers),
            ..Self::no_mixup()
        }
    }

    /// Defaults for `kind` on a model with `n_layers` blocks.
    pub fn for_kind(kind: StrategyKind, n_layers: usize) -> Self {
        match kind {
            StrategyKind::NoMixup => Self::no_mixup(),
            StrategyKind::Amplify => Self::amplify(),
            StrategyKind::EmbedMix => Self::embed_mix(),
            StrategyKind::SentenceMix => Self::sentence_mix(),
            StrategyKind::TMix => Self::tmix(n_layers),
        }
    }

    /// Whether a plan is sampled at all. Amplify restricted to no layers
    /// degenerates to plain training.
    pub fn is_active(&self) -> bool {
        match self.kind {
            StrategyKind::NoMixup => false,
            StrategyKind::Amplify => self.amplify_layers.as_ref().is_none_or(|l| !l.is_empty()),
            _ => true,
        }
    }

    /// Short label for tables and file names.
    pub fn label(&self) -> String {
        match (&self.kind, &self.amplify_layers) {
            (StrategyKind::Amplify, Some(layers)) if layers.is_empty() => "amplify@none".into(),
            (StrategyKind::Amplify, Some(layers)) => format!(
                "amplify@{}",
                layers
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join("+")
            ),
            (kind, _) => kind.to_string(),
        }
    }

    pub fn validate(&self, n_layers: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "strategy.alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.n_samples == 0 {
            return Err(Error::Config(
                "strategy.n_samples must be at least 1".into(),
            ));
        }
        let is_tmix = self.kind == StrategyKind::TMix;
        if is_tmix == self.tmix_layers.is_empty() {
            return Err(Error::Config(
                "strategy.tmix_layers must be non-empty exactly when the strategy is tmix".into(),
            ));
        }
        let all = self
            .tmix_layers
            .iter()
            .chain(self.amplify_layers.iter().flatten());
        if let Some(&bad) = all.clone().find(|&&l| l >= n_layers) {
            return Err(Error::Config(format!(
                "layer index {bad} out of range for a {n_layers}-layer model"
            )));
        }
        if self.amplify_layers.is_some() && self.kind != StrategyKind::Amplify {
            return Err(Error::Config(
                "strategy.amplify_layers only applies to amplify".into(),
            ));
        }
        Ok(())
    }
}

/// TMix's 7th/9th/12th-of-12 block choice scaled to `depth` blocks (0-based).
pub fn default_tmix_layers(depth: usize) -> Vec<usize> {
    if depth == 0 {
        return Vec::new();
    }
    let mut layers: Vec<usize> = [7, 9, 12]
        .iter()
        .map(|&k| (k * depth).div_ceil(12) - 1)
        .collect();
    layers.dedup();
    layers
}

/// One step's shared permutation and weight.
#[derive(Clone, Debug, PartialEq)]
pub struct MixPlan {
    pub index_r: Arc<[usize]>,
    pub lambda_max: f64,
    pub strategy: StrategyConfig,
    /// Block TMix mixes this step.
    pub tmix_layer: Option<usize>,
}

impl MixPlan {
    /// Draw the step's plan: permutation, then weight, then (TMix) layer.
    /// Returns `None` for inactive strategies.
    pub fn sample<R: Rng + ?Sized>(
        strategy: &StrategyConfig,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Option<MixPlan>> {
        if !strategy.is_active() {
            return Ok(None);
        }
        let index_r: Arc<[usize]> = make_permutation(batch_size, rng).into();
        let lambda_max = match strategy.kind {
            StrategyKind::Amplify => {
                sample_lambda_max(strategy.alpha, strategy.n_samples, rng)?.lambda_max
            }
            _ => baseline_lambda(strategy.alpha, rng)?,
        };
        let tmix_layer = match strategy.kind {
            StrategyKind::TMix => {
                if strategy.tmix_layers.is_empty() {
                    return Err(Error::Config(
                        "tmix needs at least one eligible layer".into(),
                    ));
                }
                Some(strategy.tmix_layers[rng.random_range(0..strategy.tmix_layers.len())])
            }
            _ => None,
        };
        Ok(Some(MixPlan {
            index_r,
            lambda_max,
            strategy: strategy.clone(),
            tmix_layer,
        }))
    }

    /// Labels in permuted order (the second ground truth of the mixed loss).
    pub fn permuted_labels(&self, labels: &[usize]) -> Result<Vec<usize>> {
        labels.reorder(&self.index_r)
    }
}

/// Row reordering along the leading dimension.
pub trait Reorder {
    type Output;

    /// Row `i` of the output is row `index[i]` of `self`.
    fn reorder(&self, index: &[usize]) -> Result<Self::Output>;
}

fn check_permutation(index: &[usize], rows: usize, op: &'static str) -> Result<()> {
    if index.len() != rows {
        return Err(Error::dim(op, &[rows], &[index.len()]));
    }
    let mut seen = vec![false; rows];
    for &i in index {
        if i >= rows || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Contract(format!(
                "{op}: {index:?} is not a permutation of 0..{rows}"
            )));
        }
    }
    Ok(())
}

impl Reorder for Tensor {
    type Output = Tensor;

    fn reorder(&self, index: &[usize]) -> Result<Tensor> {
        let rows = self.shape().first().copied().unwrap_or(0);
        check_permutation(index, rows, "reorder")?;
        self.index_select(0, index)
    }
}

impl Reorder for [usize] {
    type Output = Vec<usize>;

    fn reorder(&self, index: &[usize]) -> Result<Vec<usize>> {
        check_permutation(index, self.len(), "reorder labels")?;
        Ok(index.iter().map(|&i| self[i]).collect())
    }
}

impl Reorder for Batch {
    type Output = Batch;

    fn reorder(&self, index: &[usize]) -> Result<Batch> {
        check_permutation(index, self.size, "reorder batch")?;
        let l = self.seq_len;
        let mut out = self.clone();
        for (dst, &src) in index.iter().enumerate() {
            out.token_ids[dst * l..(dst + 1) * l].copy_from_slice(self.row(src));
            out.pad_mask[dst * l..(dst + 1) * l].copy_from_slice(self.mask_row(src));
        }
        out.labels = self.labels.reorder(index)?;
        Ok(out)
    }
}

/// `λ·h_o + (1−λ)·h_s` elementwise, exact at λ ∈ {0, 1} and when the
/// operands coincide.
pub fn mix_features(h_o: &Tensor, h_s: &Tensor, lambda: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Parameter(format!(
            "mixing weight {lambda} outside [0, 1]"
        )));
    }
    h_o.lerp(h_s, lambda as Float)
}

/// A transform bound to one hook site.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteMixer {
    pub site: HookSite,
    pub index_r: Arc<[usize]>,
    pub lambda: f64,
}

impl SiteMixer {
    /// Mix `h` with its own rows reordered by the plan's permutation.
    pub fn apply(&self, h: &Tensor) -> Result<Tensor> {
        let shuffled = h.reorder(&self.index_r)?;
        mix_features(h, &shuffled, self.lambda)
    }
}

/// Site transforms dictated by `plan` on a model with `n_layers` blocks.
pub fn build_mixer(plan: &MixPlan, n_layers: usize) -> Result<Vec<SiteMixer>> {
    let s = &plan.strategy;
    s.validate(n_layers)?;
    let sites: Vec<HookSite> = match s.kind {
        StrategyKind::NoMixup => Vec::new(),
        StrategyKind::Amplify => match &s.amplify_layers {
            None => (0..n_layers).map(HookSite::MhaOutput).collect(),
            Some(layers) => {
                let mut layers = layers.clone();
                layers.sort_unstable();
                layers.dedup();
                layers.into_iter().map(HookSite::MhaOutput).collect()
            }
        },
        StrategyKind::EmbedMix => vec![HookSite::Embedding],
        StrategyKind::SentenceMix => vec![HookSite::Pooled],
        StrategyKind::TMix => {
            let layer = plan
                .tmix_layer
                .ok_or_else(|| Error::Config("tmix plan without a chosen layer".into()))?;
            if !s.tmix_layers.contains(&layer) {
                return Err(Error::Config(format!(
                    "tmix layer {layer} not in {:?}",
                    s.tmix_layers
                )));
            }
            vec![HookSite::BlockOutput(layer)]
        }
    };
    if plan.tmix_layer.is_some() && s.kind != StrategyKind::TMix {
        return Err(Error::Config("only tmix plans carry a block choice".into()));
    }
    for site in &sites {
        site.validate(n_layers)?;
    }
    Ok(sites
        .into_iter()
        .map(|site| SiteMixer {
            site,
            index_r: plan.index_r.clone(),
            lambda: plan.lambda_max,
        })
        .collect())
}

/// `λ·CE(logits, gt_o) + (1−λ)·CE(logits, gt_s)`.
pub fn mixed_loss(logits: &Tensor, gt_o: &[usize], gt_s: &[usize], lambda: f64) -> Result<Tensor> {
    if gt_o.len() != gt_s.len() {
        return Err(Error::dim(
            "mixed_loss labels",
            &[gt_o.len()],
            &[gt_s.len()],
        ));
    }
    let ce_o = logits.cross_entropy(gt_o)?;
    if lambda == 1.0 || gt_o == gt_s {
        return Ok(ce_o);
    }
    let ce_s = logits.cross_entropy(gt_s)?;
    ce_o.scale(lambda as Float)
        .add(&ce_s.scale((1.0 - lambda) as Float))
}

/// Cross entropy against soft target rows.
pub fn mixed_loss_soft(logits: &Tensor, y_mix: &[Float]) -> Result<Tensor> {
    logits.soft_cross_entropy(y_mix)
}

/// `λ·onehot(gt_o) + (1−λ)·onehot(gt_s)`, row-major `[l × n_classes]`.
pub fn mixed_targets(
    gt_o: &[usize],
    gt_s: &[usize],
    lambda: f64,
    n_classes: usize,
) -> Result<Vec<Float>> {
    if gt_o.len() != gt_s.len() {
        return Err(Error::dim("mixed_targets", &[gt_o.len()], &[gt_s.len()]));
    }
    let mut y = vec![0.0; gt_o.len() * n_classes];
    for (r, (&o, &s)) in gt_o.iter().zip(gt_s).enumerate() {
        for (label, w) in [(o, lambda), (s, 1.0 - lambda)] {
            if label >= n_classes {
                return Err(Error::Index {
                    what: "mixed_targets label",
                    index: label,
                    bound: n_classes,
                });
            }
            y[r * n_classes + label] += w as Float;
        }
    }
    Ok(y)
}
