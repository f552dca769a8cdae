//! Named-array checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset 0   8 bytes   magic "MFCKPT01"
//! offset 8   u64       header length H in bytes
//! offset 16  H bytes   UTF-8 header, one entry per '\n'-terminated line:
//!                        precision = f32|f64
//!                        meta <key> = <value>
//!                        array <name> <d0>x<d1>x...
//! then       payload   for each `array` line in header order, the row-major
//!                      scalars as raw little-endian IEEE-754 values of the
//!                      declared precision
//! ```
//!
//! Names and metadata keys contain no whitespace; metadata values run to the
//! end of the line.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DenseArray, Precision, Scalar};

use super::{BlockKind, ModelConfig, ParamSet};

pub const MAGIC: &[u8; 8] = b"MFCKPT01";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub meta: BTreeMap<String, String>,
    pub params: ParamSet<T>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(params: ParamSet<T>) -> Self {
        Self {
            meta: BTreeMap::new(),
            params,
        }
    }

    pub fn with_model(mut self, config: &ModelConfig) -> Self {
        let block = match config.block {
            BlockKind::MlpOnly => "mlp-only",
            BlockKind::SingleAttentionPlusMlp => "single-attention-plus-mlp",
        };
        for (k, v) in [
            ("model.vocab_size", config.vocab_size.to_string()),
            ("model.embed_dim", config.embed_dim.to_string()),
            ("model.context_window", config.context_window.to_string()),
            ("model.hidden_dim", config.hidden_dim.to_string()),
            ("model.block", block.to_string()),
        ] {
            self.meta.insert(k.to_string(), v);
        }
        self
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    /// Model configuration recorded by [`Checkpoint::with_model`].
    pub fn model_config(&self) -> Result<ModelConfig> {
        let num = |key: &str| -> Result<usize> {
            self.meta
                .get(key)
                .ok_or_else(|| Error::Checkpoint(format!("missing metadata `{key}`")))?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("metadata `{key}` is not an integer")))
        };
        let block = match self.meta.get("model.block").map(String::as_str) {
            Some("mlp-only") => BlockKind::MlpOnly,
            Some("single-attention-plus-mlp") => BlockKind::SingleAttentionPlusMlp,
            other => {
                return Err(Error::Checkpoint(format!(
                    "unknown or missing model.block {other:?}"
                )))
            }
        };
        Ok(ModelConfig {
            vocab_size: num("model.vocab_size")?,
            embed_dim: num("model.embed_dim")?,
            context_window: num("model.context_window")?,
            hidden_dim: num("model.hidden_dim")?,
            block,
        })
    }
}

pub fn write_checkpoint<T: Scalar>(ckpt: &Checkpoint<T>) -> Result<Vec<u8>> {
    let mut header = format!("precision = {}\n", T::PRECISION.as_str());
    for (k, v) in &ckpt.meta {
        if k.is_empty() || k.contains(char::is_whitespace) || v.contains('\n') {
            return Err(Error::Checkpoint(format!("unencodable metadata `{k}`")));
        }
        header.push_str(&format!("meta {k} = {v}\n"));
    }
    for (name, array) in ckpt.params.iter() {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::Checkpoint(format!(
                "unencodable array name `{name}`"
            )));
        }
        let dims: Vec<String> = array.shape().iter().map(usize::to_string).collect();
        let dims = if dims.is_empty() {
            "scalar".to_string()
        } else {
            dims.join("x")
        };
        header.push_str(&format!("array {name} {dims}\n"));
    }

    let width = T::PRECISION.byte_width();
    let mut out = Vec::with_capacity(16 + header.len() + ckpt.params.num_scalars() * width);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for (_, array) in ckpt.params.iter() {
        for &v in array.data() {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

pub fn read_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let header = std::str::from_utf8(&bytes[16..header_end])
        .map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;

    let mut precision = None;
    let mut meta = BTreeMap::new();
    let mut manifest: Vec<(String, Vec<usize>)> = Vec::new();
    for (lineno, line) in header.lines().enumerate() {
        let bad = || Error::Checkpoint(format!("header line {}: `{line}`", lineno + 1));
        if let Some(rest) = line.strip_prefix("precision = ") {
            precision = Some(Precision::parse(rest.trim()).ok_or_else(bad)?);
        } else if let Some(rest) = line.strip_prefix("meta ") {
            let (k, v) = rest.split_once(" = ").ok_or_else(bad)?;
            meta.insert(k.to_string(), v.to_string());
        } else if let Some(rest) = line.strip_prefix("array ") {
            let (name, dims) = rest.split_once(' ').ok_or_else(bad)?;
            let shape = if dims == "scalar" {
                Vec::new()
            } else {
                dims.split('x')
                    .map(|d| d.parse::<usize>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>>>()?
            };
            manifest.push((name.to_string(), shape));
        } else if !line.is_empty() {
            return Err(bad());
        }
    }

    let precision = precision.ok_or_else(|| Error::Checkpoint("missing precision".into()))?;
    if precision != T::PRECISION {
        return Err(Error::Checkpoint(format!(
            "checkpoint stores {} values, expected {}",
            precision.as_str(),
            T::PRECISION.as_str()
        )));
    }

    let width = precision.byte_width();
    let mut offset = header_end;
    let mut params = ParamSet::new();
    for (name, shape) in manifest {
        let n: usize = shape.iter().product();
        let end = offset + n * width;
        if end > bytes.len() {
            return Err(Error::Checkpoint(format!("payload of `{name}` truncated")));
        }
        let data = bytes[offset..end]
            .chunks_exact(width)
            .map(T::read_le)
            .collect();
        params.push(&name, DenseArray::new(shape, data)?);
        offset = end;
    }
    if offset != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after payload",
            bytes.len() - offset
        )));
    }
    Ok(Checkpoint { meta, params })
}

pub fn save_checkpoint<T: Scalar>(ckpt: &Checkpoint<T>, path: &Path) -> Result<()> {
    fs::write(path, write_checkpoint(ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    read_checkpoint(&fs::read(path)?)
}
