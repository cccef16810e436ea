use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mixup::{StrategyConfig, StrategyKind};
use crate::model::ModelConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    Cosine,
    Constant,
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cosine" => Ok(Schedule::Cosine),
            "constant" => Ok(Schedule::Constant),
            other => Err(Error::Config(format!("unknown schedule {other:?}"))),
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schedule::Cosine => "cosine",
            Schedule::Constant => "constant",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub strategy: StrategyConfig,
    pub lr: f64,
    pub warmup_fraction: f64,
    pub schedule: Schedule,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub weight_decay: f64,
    pub adam_eps: f64,
    pub seeds: Vec<u64>,
    /// Share of the training split held out for validation when no
    /// validation corpus is given.
    pub eval_split_fraction: f64,
    pub trace_attention: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            strategy: StrategyConfig::amplify(),
            lr: 1e-3,
            warmup_fraction: 0.1,
            schedule: Schedule::Cosine,
            batch_size: 32,
            max_epochs: 20,
            early_stop_patience: 5,
            weight_decay: 0.01,
            adam_eps: 1e-8,
            seeds: vec![1, 2, 3],
            eval_split_fraction: 0.1,
            trace_attention: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let value = value.trim().trim_start_matches('[').trim_end_matches(']');
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v)).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected a boolean, got {value:?}"
        ))),
    }
}

// Keys that change other fields' defaults are applied first.
fn priority(key: &str) -> u8 {
    match key {
        "model.n_layers" => 0,
        "strategy.kind" => 1,
        _ => 2,
    }
}

impl TrainConfig {
    /// Set one field by its dotted name.
    ///
    /// Setting `strategy.kind` resets the strategy to that kind's defaults.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let m = &mut self.model;
        let s = &mut self.strategy;
        match key {
            "model.vocab_size" => m.vocab_size = parse(key, value)?,
            "model.max_len" => m.max_len = parse(key, value)?,
            "model.d_model" => m.d_model = parse(key, value)?,
            "model.n_heads" => m.n_heads = parse(key, value)?,
            "model.d_ff" => m.d_ff = parse(key, value)?,
            "model.n_layers" => {
                m.n_layers = parse(key, value)?;
                if s.kind == StrategyKind::TMix {
                    *s = StrategyConfig::tmix(m.n_layers);
                }
            }
            "model.n_classes" => m.n_classes = parse(key, value)?,
            "model.dropout" => m.dropout = parse(key, value)?,
            "strategy.kind" => {
                let kind: StrategyKind = value.trim().parse()?;
                *s = StrategyConfig::for_kind(kind, m.n_layers);
            }
            "strategy.alpha" => s.alpha = parse(key, value)?,
            "strategy.n_samples" => s.n_samples = parse(key, value)?,
            "strategy.tmix_layers" => s.tmix_layers = parse_list(key, value)?,
            "strategy.amplify_layers" => {
                s.amplify_layers = match value.trim() {
                    "all" => None,
                    v => Some(parse_list(key, v)?),
                }
            }
            "lr" => self.lr = parse(key, value)?,
            "warmup_fraction" => self.warmup_fraction = parse(key, value)?,
            "schedule" => self.schedule = value.parse()?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "early_stop_patience" => self.early_stop_patience = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "adam_eps" => self.adam_eps = parse(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "eval_split_fraction" => self.eval_split_fraction = parse(key, value)?,
            "trace_attention" => self.trace_attention = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Apply `(key, value)` pairs, layer count and strategy kind first.
    pub fn apply<K: AsRef<str>, V: AsRef<str>>(&mut self, pairs: &[(K, V)]) -> Result<()> {
        let mut sorted: Vec<(&str, &str)> = pairs
            .iter()
            .map(|(k, v)| (k.as_ref().trim(), v.as_ref()))
            .collect();
        sorted.sort_by_key(|(k, _)| priority(k));
        for (k, v) in sorted {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Parse `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse_pairs(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: format!("expected `key = value`, got {line:?}"),
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(pairs)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let pairs = Self::parse_pairs(&text, path).map_err(|e| match e {
            Error::Parse { path, line, msg } => {
                Error::Config(format!("{}:{line}: {msg}", path.display()))
            }
            other => other,
        })?;
        let mut cfg = TrainConfig::default();
        cfg.apply(&pairs)?;
        Ok(cfg)
    }

    /// All fields as `key = value` lines, readable by [`TrainConfig::from_file`].
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let join = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let m = &self.model;
        let s = &self.strategy;
        vec![
            ("model.vocab_size".into(), m.vocab_size.to_string()),
            ("model.max_len".into(), m.max_len.to_string()),
            ("model.d_model".into(), m.d_model.to_string()),
            ("model.n_heads".into(), m.n_heads.to_string()),
            ("model.d_ff".into(), m.d_ff.to_string()),
            ("model.n_layers".into(), m.n_layers.to_string()),
            ("model.n_classes".into(), m.n_classes.to_string()),
            ("model.dropout".into(), m.dropout.to_string()),
            ("strategy.kind".into(), s.kind.to_string()),
            ("strategy.alpha".into(), s.alpha.to_string()),
            ("strategy.n_samples".into(), s.n_samples.to_string()),
            ("strategy.tmix_layers".into(), join(&s.tmix_layers)),
            (
                "strategy.amplify_layers".into(),
                s.amplify_layers.as_deref().map_or("all".into(), join),
            ),
            ("lr".into(), self.lr.to_string()),
            ("warmup_fraction".into(), self.warmup_fraction.to_string()),
            ("schedule".into(), self.schedule.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("max_epochs".into(), self.max_epochs.to_string()),
            (
                "early_stop_patience".into(),
                self.early_stop_patience.to_string(),
            ),
            ("weight_decay".into(), self.weight_decay.to_string()),
            ("adam_eps".into(), self.adam_eps.to_string()),
            (
                "seeds".into(),
                self.seeds
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            (
                "eval_split_fraction".into(),
                self.eval_split_fraction.to_string(),
            ),
            ("trace_attention".into(), self.trace_attention.to_string()),
        ]
    }

    /// Checks everything except `model.vocab_size`, which is taken from
    /// the training vocabulary at run time.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return fail(format!(
                "warmup_fraction {} outside [0, 1)",
                self.warmup_fraction
            ));
        }
        if self.batch_size < 2 {
            return fail(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            ));
        }
        if self.seeds.is_empty() {
            return fail("seeds must not be empty".into());
        }
        if !(self.eval_split_fraction > 0.0 && self.eval_split_fraction < 1.0) {
            return fail(format!(
                "eval_split_fraction {} outside (0, 1)",
                self.eval_split_fraction
            ));
        }
        if self.weight_decay < 0.0 || self.adam_eps <= 0.0 {
            return fail("weight_decay must be ≥ 0 and adam_eps > 0".into());
        }
        ModelConfig {
            vocab_size: self.model.vocab_size.max(3),
            ..self.model.clone()
        }
        .validate()?;
        self.strategy.validate(self.model.n_layers)
    }
}
