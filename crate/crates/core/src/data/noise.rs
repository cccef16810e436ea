//! Token-level delete/swap perturbation of training examples.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;

use super::Example;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    Delete,
    Swap,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::Delete => "delete",
            NoiseKind::Swap => "swap",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "delete" => Ok(NoiseKind::Delete),
            "swap" => Ok(NoiseKind::Swap),
            _ => Err(Error::Config(format!(
                "unknown noise kind {s:?} (delete|swap)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub proportion: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub const PROPORTIONS: [f64; 5] = [0.0, 0.05, 0.10, 0.15, 0.20];

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.proportion) {
            return Err(Error::Parameter(format!(
                "noise proportion {} outside [0, 1)",
                self.proportion
            )));
        }
        Ok(())
    }
}

// ⌊p·n⌋ with slack for products such as 0.29·100 = 28.999…
fn floor_count(p: f64, n: usize) -> usize {
    (p * n as f64 + 1e-9).floor() as usize
}

/// Per example: Delete removes ⌊p·len⌋ uniformly chosen positions; Swap
/// exchanges the tokens of ⌊p·len/2⌋ disjoint uniformly chosen position
/// pairs. Labels are untouched.
pub fn perturb(examples: &[Example], spec: &NoiseSpec) -> Result<Vec<Example>> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, Stream::Noise);
    let out = examples
        .iter()
        .map(|ex| {
            let len = ex.tokens.len();
            let mut tokens = ex.tokens.clone();
            match spec.kind {
                NoiseKind::Delete => {
                    let k = floor_count(spec.proportion, len);
                    if k > 0 {
                        let mut drop = vec![false; len];
                        for i in index::sample(&mut rng, len, k) {
                            drop[i] = true;
                        }
                        tokens = ex
                            .tokens
                            .iter()
                            .zip(&drop)
                            .filter(|(_, &d)| !d)
                            .map(|(t, _)| t.clone())
                            .collect();
                    }
                }
                NoiseKind::Swap => {
                    let pairs = floor_count(spec.proportion / 2.0, len);
                    if pairs > 0 {
                        let picked = index::sample(&mut rng, len, 2 * pairs).into_vec();
                        for pair in picked.chunks_exact(2) {
                            tokens.swap(pair[0], pair[1]);
                        }
                    }
                }
            }
            Example {
                tokens,
                label: ex.label,
            }
        })
        .collect();
    Ok(out)
}
