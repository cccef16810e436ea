//! Corpus ingestion, tokenization, vocabulary and batching.

mod corpus;
mod noise;
mod synthetic;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub use corpus::{load_corpus, save_corpus};
pub use noise::{perturb, NoiseKind, NoiseSpec};
pub use synthetic::{gen_synthetic, write_synthetic, SyntheticSpec};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
const RESERVED: [&str; 3] = ["[PAD]", "[UNK]", "[CLS]"];

/// One labelled text.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Example {
    pub tokens: Vec<String>,
    pub label: usize,
}

/// Lowercase, split on whitespace, and peel leading/trailing ASCII
/// punctuation off each word as single-character tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let word = word.to_lowercase();
        let chars: Vec<char> = word.chars().collect();
        let start = chars.iter().position(|c| !c.is_ascii_punctuation());
        let Some(start) = start else {
            out.extend(chars.iter().map(char::to_string));
            continue;
        };
        let end = chars
            .iter()
            .rposition(|c| !c.is_ascii_punctuation())
            .unwrap_or(start)
            + 1;
        out.extend(chars[..start].iter().map(char::to_string));
        out.push(chars[start..end].iter().collect());
        out.extend(chars[end..].iter().map(char::to_string));
    }
    out
}

/// Token ↔ id table with `[PAD]`, `[UNK]`, `[CLS]` at ids 0, 1, 2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Vocab { tokens, ids })
    }

    /// Reserved tokens followed by every token seen at least `min_count`
    /// times, ordered by descending frequency then lexicographically.
    pub fn build<'a, I, S>(corpus: I, min_count: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<[String]> + 'a + ?Sized,
    {
        if min_count == 0 {
            return Err(Error::Parameter("min_count must be at least 1".into()));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for seq in corpus {
            for tok in seq.as_ref() {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_count && !RESERVED.contains(&t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t.to_string()))
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`; unknown and reserved spellings map to UNK.
    pub fn id(&self, token: &str) -> usize {
        match self.ids.get(token) {
            Some(&i) if i >= RESERVED.len() => i,
            _ => UNK,
        }
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text: String = self.tokens.iter().map(|t| format!("{t}\n")).collect();
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < RESERVED.len() || tokens[..3] != RESERVED {
            return Err(Error::Data(format!(
                "{} is not a vocabulary file",
                path.display()
            )));
        }
        Self::from_tokens(tokens)
    }
}

pub fn build_vocab(corpus: &[Example], min_count: usize) -> Result<Vocab> {
    Vocab::build(corpus.iter().map(|e| &e.tokens), min_count)
}

/// A padded mini-batch, row-major `[size × seq_len]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub token_ids: Vec<usize>,
    pub labels: Vec<usize>,
    /// True on real (non-PAD) positions.
    pub pad_mask: Vec<bool>,
    pub size: usize,
    pub seq_len: usize,
}

impl Batch {
    pub fn row(&self, i: usize) -> &[usize] {
        &self.token_ids[i * self.seq_len..(i + 1) * self.seq_len]
    }

    pub fn mask_row(&self, i: usize) -> &[bool] {
        &self.pad_mask[i * self.seq_len..(i + 1) * self.seq_len]
    }
}

/// Truncate each example to `max_len − 1` tokens, prepend CLS, right-pad
/// with PAD to `max_len`.
pub fn pad_batch(examples: &[&Example], vocab: &Vocab, max_len: usize) -> Result<Batch> {
    if examples.is_empty() {
        return Err(Error::Data("cannot batch zero examples".into()));
    }
    if max_len == 0 {
        return Err(Error::Parameter("max_len must be at least 1".into()));
    }
    let size = examples.len();
    let mut token_ids = vec![PAD; size * max_len];
    let mut pad_mask = vec![false; size * max_len];
    for (r, ex) in examples.iter().enumerate() {
        let row = &mut token_ids[r * max_len..(r + 1) * max_len];
        row[0] = CLS;
        for (slot, tok) in row[1..].iter_mut().zip(&ex.tokens) {
            *slot = vocab.id(tok);
        }
        let real = (ex.tokens.len() + 1).min(max_len);
        pad_mask[r * max_len..r * max_len + real].fill(true);
    }
    Ok(Batch {
        token_ids,
        labels: examples.iter().map(|e| e.label).collect(),
        pad_mask,
        size,
        seq_len: max_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ex(text: &str, label: usize) -> Example {
        Example {
            tokens: tokenize(text),
            label,
        }
    }

    #[test]
    fn tokenize_cases() {
        assert_eq!(tokenize("The cat."), vec!["the", "cat", "."]);
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \t\n").is_empty());
        assert_eq!(
            tokenize("(Hello), world!"),
            vec!["(", "hello", ")", ",", "world", "!"]
        );
        assert_eq!(tokenize("don't ..."), vec!["don't", ".", ".", "."]);
    }

    proptest! {
        #[test]
        fn tokenize_idempotent_on_own_output(words in prop::collection::vec("[A-Za-z0-9]{1,6}[.,!?]{0,2}", 0..12)) {
            let text = words.join(" ");
            let once = tokenize(&text);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn mask_count_is_len_plus_cls_capped(lens in prop::collection::vec(0usize..20, 1..6), max_len in 1usize..16) {
            let examples: Vec<Example> = lens
                .iter()
                .map(|&n| Example { tokens: vec!["x".to_string(); n], label: 0 })
                .collect();
            let refs: Vec<&Example> = examples.iter().collect();
            let vocab = build_vocab(&examples, 1).unwrap();
            let b = pad_batch(&refs, &vocab, max_len).unwrap();
            for (i, &n) in lens.iter().enumerate() {
                let count = b.mask_row(i).iter().filter(|&&m| m).count();
                prop_assert_eq!(count, (n + 1).min(max_len));
                prop_assert_eq!(b.row(i)[0], CLS);
                for (id, m) in b.row(i).iter().zip(b.mask_row(i)) {
                    prop_assert_eq!(*m, *id != PAD);
                }
            }
        }
    }

    #[test]
    fn vocab_cases() {
        let empty = build_vocab(&[], 1).unwrap();
        assert_eq!(empty.len(), 3);
        assert_eq!(empty.token(CLS), Some("[CLS]"));

        let v = build_vocab(&[ex("a a b", 0)], 2).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.id("a"), 3);
        assert_eq!(v.id("b"), UNK);

        let corpus = vec![ex("z y y x x x", 0), ex("w z", 1)];
        let v1 = build_vocab(&corpus, 1).unwrap();
        let v2 = build_vocab(&corpus, 1).unwrap();
        assert_eq!(v1, v2);
        let order: Vec<&str> = (3..v1.len()).map(|i| v1.token(i).unwrap()).collect();
        assert_eq!(order, vec!["x", "y", "z", "w"]);
        assert!(build_vocab(&corpus, 0).is_err());
    }

    #[test]
    fn vocab_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = build_vocab(&[ex("b a c a", 0)], 1).unwrap();
        let path = dir.path().join("vocab.txt");
        v.save(&path).unwrap();
        assert_eq!(Vocab::load(&path).unwrap(), v);
        fs::write(&path, "nope\n").unwrap();
        assert!(Vocab::load(&path).is_err());
    }

    #[test]
    fn pad_batch_layout() {
        let e = ex("a b c", 1);
        let v = build_vocab(std::slice::from_ref(&e), 1).unwrap();
        let b = pad_batch(&[&e], &v, 8).unwrap();
        let (a, bb, c) = (v.id("a"), v.id("b"), v.id("c"));
        assert_eq!(b.token_ids, vec![CLS, a, bb, c, PAD, PAD, PAD, PAD]);
        assert_eq!(
            b.pad_mask,
            vec![true, true, true, true, false, false, false, false]
        );
        assert_eq!(b.labels, vec![1]);

        let long = ex("a b c a b c a b c", 0);
        let b = pad_batch(&[&long], &v, 4).unwrap();
        assert_eq!(b.token_ids, vec![CLS, a, bb, c]);
        assert!(b.pad_mask.iter().all(|&m| m));

        assert!(pad_batch(&[], &v, 4).is_err());
    }
}
