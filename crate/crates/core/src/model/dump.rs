use std::io::Write;

use serde::Serialize;

use super::ForwardTrace;
use crate::data::{Batch, Vocab};
use crate::error::{Error, Result};

#[derive(Serialize)]
struct Record<'a> {
    batch: usize,
    example: usize,
    layer: usize,
    head: usize,
    tokens: Vec<&'a str>,
    weights: Vec<Vec<f64>>,
}

/// One JSON line per (example, layer, head): the real tokens of the example
/// and the attention matrix restricted to them.
pub fn write_attention_dump(
    out: &mut impl Write,
    batch_index: usize,
    batch: &Batch,
    vocab: &Vocab,
    trace: &ForwardTrace,
) -> Result<()> {
    let len = batch.seq_len;
    for (layer, map) in trace.attention_maps.iter().enumerate() {
        let &[b, heads, q, k] = map.shape() else {
            return Err(Error::dim(
                "attention dump",
                map.shape(),
                &[batch.size, 0, len, len],
            ));
        };
        if b != batch.size || q != len || k != len {
            return Err(Error::dim(
                "attention dump",
                map.shape(),
                &[batch.size, heads, len, len],
            ));
        }
        let data = map.data();
        for example in 0..b {
            let real: Vec<usize> = (0..len).filter(|&j| batch.mask_row(example)[j]).collect();
            let tokens: Vec<&str> = real
                .iter()
                .map(|&j| vocab.token(batch.row(example)[j]).unwrap_or("[UNK]"))
                .collect();
            for head in 0..heads {
                let base = (example * heads + head) * len * len;
                let weights = real
                    .iter()
                    .map(|&i| {
                        real.iter()
                            .map(|&j| data[base + i * len + j] as f64)
                            .collect()
                    })
                    .collect();
                let rec = Record {
                    batch: batch_index,
                    example,
                    layer,
                    head,
                    tokens: tokens.clone(),
                    weights,
                };
                let line = serde_json::to_string(&rec).expect("serializing attention record");
                writeln!(out, "{line}").map_err(|e| Error::io("attention dump", e))?;
            }
        }
    }
    Ok(())
}
