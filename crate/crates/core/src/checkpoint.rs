//! Checkpoint directories: `meta.json` (model config, training counters,
//! vocabulary fingerprint), `vocab.txt`, `params.bin` and optionally
//! `optimizer.bin`.
//!
//! Tensor files start with [`MAGIC`], then a little-endian `u64` header
//! length, a JSON header listing each tensor's name, group and shape, and the
//! tensors' values as little-endian `f64` in row-major order.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autograd::{ParamGroup, ParamStore};
use crate::encoder::Vocab;
use crate::error::{Error, Result};
use crate::model::{CorefModel, ModelConfig};
use crate::train::Adam;

pub const MAGIC: &[u8; 8] = b"SPLKTNS1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    /// Training stage that produced the checkpoint.
    pub stage: String,
    pub step: u64,
    pub epoch: usize,
    pub vocab_fingerprint: String,
    pub model: ModelConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    group: ParamGroup,
    rows: usize,
    cols: usize,
}

fn write_tensors(path: &Path, tensors: &[(String, ParamGroup, &Array2<f64>)]) -> Result<()> {
    let header: Vec<TensorHeader> = tensors
        .iter()
        .map(|(name, group, a)| TensorHeader {
            name: name.clone(),
            group: *group,
            rows: a.nrows(),
            cols: a.ncols(),
        })
        .collect();
    let json = serde_json::to_vec(&header).map_err(|e| Error::Serialize(e.to_string()))?;
    let mut buf = Vec::with_capacity(16 + json.len() + tensors.iter().map(|t| 8 * t.2.len()).sum::<usize>());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, _, a) in tensors {
        for v in a.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

fn read_tensors(path: &Path) -> Result<Vec<(String, ParamGroup, Array2<f64>)>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |what: &str| Error::Checkpoint(format!("{}: {what}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a tensor file"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let json = bytes.get(16..16 + len).ok_or_else(|| bad("truncated header"))?;
    let header: Vec<TensorHeader> = serde_json::from_slice(json).map_err(|e| bad(&e.to_string()))?;
    let mut pos = 16 + len;
    let mut out = Vec::with_capacity(header.len());
    for h in header {
        let n = h.rows * h.cols;
        let data = bytes.get(pos..pos + 8 * n).ok_or_else(|| bad("truncated data"))?;
        pos += 8 * n;
        let values = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let a = Array2::from_shape_vec((h.rows, h.cols), values).map_err(|e| bad(&e.to_string()))?;
        out.push((h.name, h.group, a));
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(out)
}

/// Writes the model, and the optimizer state when given.
pub fn save_checkpoint(
    dir: impl AsRef<Path>,
    model: &CorefModel,
    optimizer: Option<&Adam>,
    stage: &str,
    epoch: usize,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = CheckpointMeta {
        format_version: FORMAT_VERSION,
        stage: stage.to_string(),
        step: optimizer.map_or(0, |o| o.step),
        epoch,
        vocab_fingerprint: model.vocab.fingerprint(),
        model: model.config.clone(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Serialize(e.to_string()))?;
    let meta_path = dir.join("meta.json");
    std::fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))?;
    model.vocab.save(dir.join("vocab.txt"))?;
    let params: Vec<_> = model
        .params
        .entries()
        .iter()
        .map(|e| (e.name.clone(), e.group, &e.value))
        .collect();
    write_tensors(&dir.join("params.bin"), &params)?;
    let opt_path = dir.join("optimizer.bin");
    match optimizer {
        Some(adam) => {
            let mut tensors = Vec::with_capacity(2 * params.len());
            for (k, e) in model.params.entries().iter().enumerate() {
                tensors.push((format!("m/{}", e.name), e.group, &adam.m[k]));
                tensors.push((format!("v/{}", e.name), e.group, &adam.v[k]));
            }
            write_tensors(&opt_path, &tensors)?;
        }
        None if opt_path.exists() => std::fs::remove_file(&opt_path).map_err(|e| Error::io(&opt_path, e))?,
        None => {}
    }
    Ok(())
}

pub fn load_meta(dir: impl AsRef<Path>) -> Result<CheckpointMeta> {
    let path = dir.as_ref().join("meta.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {} (expected {FORMAT_VERSION})",
            meta.format_version
        )));
    }
    Ok(meta)
}

/// Loads a model; the optimizer state is returned when present.
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(CorefModel, Option<Adam>, CheckpointMeta)> {
    let dir = dir.as_ref();
    let meta = load_meta(dir)?;
    let vocab = Vocab::load(dir.join("vocab.txt"))?;
    if vocab.fingerprint() != meta.vocab_fingerprint {
        return Err(Error::VocabMismatch(format!(
            "{} does not match the fingerprint recorded in meta.json",
            dir.join("vocab.txt").display()
        )));
    }
    let mut params = ParamStore::new();
    for (name, group, value) in read_tensors(&dir.join("params.bin"))? {
        params.add(name, group, value);
    }
    let model = CorefModel::bind(meta.model.clone(), vocab, params)?;
    let opt_path = dir.join("optimizer.bin");
    let optimizer = if opt_path.exists() {
        let tensors = read_tensors(&opt_path)?;
        let mut adam = Adam::new(&model.params);
        adam.step = meta.step;
        for (name, _, value) in tensors {
            let (kind, pname) = name
                .split_once('/')
                .ok_or_else(|| Error::Checkpoint(format!("optimizer tensor {name}")))?;
            let id = model
                .params
                .id(pname)
                .ok_or_else(|| Error::Checkpoint(format!("optimizer state for unknown parameter {pname}")))?;
            let slot = match kind {
                "m" => &mut adam.m[id.index()],
                "v" => &mut adam.v[id.index()],
                _ => return Err(Error::Checkpoint(format!("optimizer tensor {name}"))),
            };
            if slot.dim() != value.dim() {
                return Err(Error::Checkpoint(format!("optimizer tensor {name} has wrong shape")));
            }
            *slot = value;
        }
        Some(adam)
    } else {
        None
    };
    Ok((model, optimizer, meta))
}

/// Fails with a vocabulary mismatch when `vocab` differs from the model's.
pub fn check_vocab(model: &CorefModel, vocab: &Vocab) -> Result<()> {
    if model.vocab.fingerprint() == vocab.fingerprint() {
        Ok(())
    } else {
        Err(Error::VocabMismatch(format!(
            "checkpoint vocabulary {} differs from {}",
            &model.vocab.fingerprint()[..12],
            &vocab.fingerprint()[..12]
        )))
    }
}
