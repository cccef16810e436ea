//! Line-delimited JSON corpora: one `{"text": ..., "label": ...}` per line.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tokenize, Example};
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct RecordIn {
    text: String,
    label: usize,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    text: &'a str,
    label: usize,
}

/// Load records in file order. Blank lines are skipped.
pub fn load_corpus(path: &Path) -> Result<Vec<Example>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordIn = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(Example {
            tokens: tokenize(&rec.text),
            label: rec.label,
        });
    }
    Ok(out)
}

/// Write examples with tokens joined by single spaces.
pub fn save_corpus(path: &Path, examples: &[Example]) -> Result<()> {
    let mut buf = Vec::new();
    for ex in examples {
        let text = ex.tokens.join(" ");
        let rec = RecordOut {
            text: &text,
            label: ex.label,
        };
        serde_json::to_writer(&mut buf, &rec).expect("serializing a plain record");
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}
