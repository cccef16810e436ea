//! Synthetic keyword-classification corpora.
//!
//! Word types are `w0 .. w{vocab_size-1}`. Class `c` owns the signal words
//! `w{c·s} .. w{c·s+s-1}` (s = `signal_tokens_per_class`); every other word
//! is filler. An example of class `c` is filler text with at least one of
//! its class's signal words planted at random positions.

use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{save_corpus, Example};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub vocab_size: usize,
    /// Inclusive token-length range.
    pub seq_len_range: (usize, usize),
    pub n_train: usize,
    pub n_test: usize,
    pub signal_tokens_per_class: usize,
    /// Fraction of each class whose label is flipped to the next class.
    pub noise_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_classes: 2,
            vocab_size: 200,
            seq_len_range: (8, 24),
            n_train: 2000,
            n_test: 500,
            signal_tokens_per_class: 5,
            noise_rate: 0.05,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        let signal = self.n_classes * self.signal_tokens_per_class;
        if self.n_classes < 2 {
            return Err(Error::Parameter("need at least two classes".into()));
        }
        if self.signal_tokens_per_class == 0 {
            return Err(Error::Parameter(
                "signal_tokens_per_class must be positive".into(),
            ));
        }
        if signal >= self.vocab_size {
            return Err(Error::Parameter(format!(
                "vocab_size {} leaves no filler after {} disjoint signal words",
                self.vocab_size, signal
            )));
        }
        let (lo, hi) = self.seq_len_range;
        if lo == 0 || lo > hi {
            return Err(Error::Parameter(format!("bad seq_len_range {lo}..={hi}")));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::Parameter(format!(
                "noise_rate {} outside [0, 1)",
                self.noise_rate
            )));
        }
        Ok(())
    }

    /// Signal word ids of `class`.
    pub fn signal_words(&self, class: usize) -> std::ops::Range<usize> {
        let s = self.signal_tokens_per_class;
        class * s..(class + 1) * s
    }

    /// Class whose signal word `token` is, if any.
    pub fn signal_class(&self, token: &str) -> Option<usize> {
        let id: usize = token.strip_prefix('w')?.parse().ok()?;
        let class = id / self.signal_tokens_per_class;
        (class < self.n_classes).then_some(class)
    }

    fn split(&self, n: usize, rng: &mut rng::Rng) -> Vec<Example> {
        let filler = self.n_classes * self.signal_tokens_per_class..self.vocab_size;
        let (lo, hi) = self.seq_len_range;
        let mut labels: Vec<usize> = (0..n).map(|i| i % self.n_classes).collect();
        labels.shuffle(rng);
        let mut examples: Vec<Example> = labels
            .into_iter()
            .map(|label| {
                let len = rng.random_range(lo..=hi);
                let mut ids: Vec<usize> =
                    (0..len).map(|_| rng.random_range(filler.clone())).collect();
                let planted = rng.random_range(1..=(len / 6).max(1));
                for pos in index::sample(rng, len, planted) {
                    ids[pos] = rng.random_range(self.signal_words(label));
                }
                Example {
                    tokens: ids.into_iter().map(|i| format!("w{i}")).collect(),
                    label,
                }
            })
            .collect();

        // Flip the same number of labels in every class, cyclically, so the
        // label distribution stays balanced.
        let clean: Vec<usize> = examples.iter().map(|e| e.label).collect();
        let smallest = n / self.n_classes;
        let flips = (self.noise_rate * smallest as f64 + 1e-9).floor() as usize;
        for class in 0..self.n_classes {
            let members: Vec<usize> = (0..clean.len()).filter(|&i| clean[i] == class).collect();
            for k in index::sample(rng, members.len(), flips) {
                examples[members[k]].label = (class + 1) % self.n_classes;
            }
        }
        examples
    }
}

/// Deterministic (train, test) splits for `seed`.
pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<(Vec<Example>, Vec<Example>)> {
    spec.validate()?;
    let mut rng = rng::stream(seed, Stream::Synthetic);
    let train = spec.split(spec.n_train, &mut rng);
    let test = spec.split(spec.n_test, &mut rng);
    Ok((train, test))
}

#[derive(Serialize)]
struct Sidecar<'a> {
    generator: &'static str,
    seed: u64,
    spec: &'a SyntheticSpec,
}

/// Write `train.jsonl`, `test.jsonl` and `synthetic.json` (spec + seed).
pub fn write_synthetic(dir: &Path, spec: &SyntheticSpec, seed: u64) -> Result<()> {
    let (train, test) = gen_synthetic(spec, seed)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_corpus(&dir.join("train.jsonl"), &train)?;
    save_corpus(&dir.join("test.jsonl"), &test)?;
    let meta = Sidecar {
        generator: "keyword-synthetic",
        seed,
        spec,
    };
    let path = dir.join("synthetic.json");
    let text = serde_json::to_string_pretty(&meta).expect("serializing generator metadata");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_corpus;

    fn small(noise_rate: f64) -> SyntheticSpec {
        SyntheticSpec {
            n_train: 301,
            n_test: 120,
            noise_rate,
            ..Default::default()
        }
    }

    /// Majority vote over planted signal words.
    fn keyword_oracle(spec: &SyntheticSpec, ex: &Example) -> Option<usize> {
        let mut votes = vec![0usize; spec.n_classes];
        for t in &ex.tokens {
            if let Some(c) = spec.signal_class(t) {
                votes[c] += 1;
            }
        }
        let best = (0..spec.n_classes).max_by_key(|&c| votes[c])?;
        (votes[best] > 0).then_some(best)
    }

    #[test]
    fn clean_examples_carry_their_signal() {
        let spec = small(0.0);
        let (train, test) = gen_synthetic(&spec, 4).unwrap();
        assert_eq!((train.len(), test.len()), (301, 120));
        for ex in train.iter().chain(&test) {
            let (lo, hi) = spec.seq_len_range;
            assert!((lo..=hi).contains(&ex.tokens.len()));
            let classes: Vec<usize> = ex
                .tokens
                .iter()
                .filter_map(|t| spec.signal_class(t))
                .collect();
            assert!(!classes.is_empty());
            assert!(classes.iter().all(|&c| c == ex.label));
        }
    }

    #[test]
    fn deterministic_and_balanced() {
        let spec = SyntheticSpec {
            n_classes: 3,
            ..small(0.1)
        };
        let a = gen_synthetic(&spec, 8).unwrap();
        assert_eq!(a, gen_synthetic(&spec, 8).unwrap());
        assert_ne!(a, gen_synthetic(&spec, 9).unwrap());
        for split in [&a.0, &a.1] {
            let counts: Vec<usize> = (0..3)
                .map(|c| split.iter().filter(|e| e.label == c).count())
                .collect();
            let (min, max) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(max - min <= 1, "{counts:?}");
        }
    }

    #[test]
    fn keyword_oracle_bounds_accuracy() {
        for noise in [0.0, 0.05, 0.2] {
            let spec = small(noise);
            let (_, test) = gen_synthetic(&spec, 21).unwrap();
            let correct = test
                .iter()
                .filter(|e| keyword_oracle(&spec, e) == Some(e.label))
                .count();
            let acc = correct as f64 / test.len() as f64;
            assert!(acc >= 1.0 - noise, "noise {noise}: oracle accuracy {acc}");
        }
    }

    #[test]
    fn vocabulary_too_small() {
        let spec = SyntheticSpec {
            vocab_size: 10,
            ..small(0.0)
        };
        assert!(matches!(gen_synthetic(&spec, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn writer_emits_corpus_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small(0.05);
        write_synthetic(dir.path(), &spec, 5).unwrap();
        let (train, test) = gen_synthetic(&spec, 5).unwrap();
        assert_eq!(load_corpus(&dir.path().join("train.jsonl")).unwrap(), train);
        assert_eq!(load_corpus(&dir.path().join("test.jsonl")).unwrap(), test);
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("synthetic.json")).unwrap())
                .unwrap();
        assert_eq!(meta["seed"], 5);
        assert_eq!(meta["spec"]["n_train"], 301);
    }
}
