//! Directory checkpoints.
//!
//! Layout:
//!
//! ```text
//! <dir>/metadata.txt       key = value lines (model config, seed, step, ...)
//! <dir>/<param name>.bin   u64 LE rank, rank × u64 LE dims, f64 LE payload
//! ```
//!
//! `metadata.txt` also lists every parameter as `param.<name> = <d0>x<d1>...`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{Float, Parameter};
use crate::error::{Error, Result};

pub const METADATA_FILE: &str = "metadata.txt";

/// A loaded checkpoint: parameters by name plus the metadata record.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub params: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
    pub metadata: BTreeMap<String, String>,
}

fn format_shape(shape: &[usize]) -> String {
    shape
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("x")
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-')
        && !name.starts_with('.')
}

pub fn save_checkpoint<'a>(
    dir: &Path,
    params: impl IntoIterator<Item = &'a Parameter>,
    metadata: &BTreeMap<String, String>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut meta = metadata.clone();
    for p in params {
        if !valid_name(&p.name) {
            return Err(Error::Contract(format!(
                "unsafe parameter name {:?}",
                p.name
            )));
        }
        let mut bytes = Vec::with_capacity(8 * (1 + p.shape().len() + p.data().len()));
        bytes.extend((p.shape().len() as u64).to_le_bytes());
        for &d in p.shape() {
            bytes.extend((d as u64).to_le_bytes());
        }
        for &v in p.data() {
            bytes.extend((v as f64).to_le_bytes());
        }
        let path = dir.join(format!("{}.bin", p.name));
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        meta.insert(format!("param.{}", p.name), format_shape(p.shape()));
    }
    let text: String = meta.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    let path = dir.join(METADATA_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn read_u64(bytes: &[u8], at: usize, path: &Path) -> Result<u64> {
    bytes
        .get(at..at + 8)
        .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
        .ok_or_else(|| Error::Data(format!("{} is truncated", path.display())))
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let meta_path = dir.join(METADATA_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut ckpt = Checkpoint::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: meta_path.clone(),
            line: i + 1,
            msg: "expected `key = value`".into(),
        })?;
        ckpt.metadata
            .insert(k.trim().to_string(), v.trim().to_string());
    }

    let names: Vec<String> = ckpt
        .metadata
        .keys()
        .filter_map(|k| k.strip_prefix("param.").map(str::to_string))
        .collect();
    for name in names {
        let path = dir.join(format!("{name}.bin"));
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let rank = read_u64(&bytes, 0, &path)? as usize;
        let shape = (0..rank)
            .map(|i| read_u64(&bytes, 8 * (1 + i), &path).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let offset = 8 * (1 + rank);
        let n: usize = shape.iter().product();
        if bytes.len() != offset + 8 * n {
            return Err(Error::Data(format!(
                "{}: payload has {} bytes, shape {:?} needs {}",
                path.display(),
                bytes.len() - offset.min(bytes.len()),
                shape,
                8 * n
            )));
        }
        let data = bytes[offset..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        ckpt.params.insert(name, (shape, data));
    }
    Ok(ckpt)
}

impl Checkpoint {
    /// Overwrite `params` with the stored values, checking names and shapes.
    pub fn restore<'a>(&self, params: impl IntoIterator<Item = &'a mut Parameter>) -> Result<()> {
        for p in params {
            let (shape, data) = self
                .params
                .get(&p.name)
                .ok_or_else(|| Error::Data(format!("checkpoint lacks parameter {}", p.name)))?;
            if shape.as_slice() != p.shape() {
                return Err(Error::dim("restore", p.shape(), shape));
            }
            p.set_data(data.iter().map(|&v| v as Float).collect())?;
        }
        Ok(())
    }
}
