//! Checkpoint directory layout:
//!
//! * `manifest.txt`: `key=value` lines with the format version, dtype,
//!   config and vocabulary hashes, and one `param.<name>=<shape>@<offset>`
//!   line per tensor (shape as comma-separated dims, offset in bytes).
//! * `params.bin`: little-endian parameter data in manifest order.
//! * `config.toml`, `vocab.txt`: the model config and vocabulary.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numcore::{ParamStore, Tensor};

use super::config::ModelConfig;
use super::model::TransducerModel;
use super::vocab::Vocabulary;

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "msa-transducer-checkpoint";
const MANIFEST: &str = "manifest.txt";
const BLOB: &str = "params.bin";
const CONFIG: &str = "config.toml";
const VOCAB: &str = "vocab.txt";

/// Storage precision of the parameter blob.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    /// Lossless; used where training resumes from a checkpoint.
    F64,
}

impl Dtype {
    fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Dtype::F32),
            "f64" => Ok(Dtype::F64),
            other => Err(Error::Checkpoint(format!("unknown dtype {other:?}"))),
        }
    }
}

fn sha_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn save_checkpoint(model: &TransducerModel, dir: &Path) -> Result<()> {
    save_checkpoint_as(model, dir, Dtype::F32)
}

pub fn save_checkpoint_as(model: &TransducerModel, dir: &Path, dtype: Dtype) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config = model.config.to_toml();
    let vocab = model.vocab.to_text();
    let mut manifest = format!(
        "format={FORMAT}\nversion={CHECKPOINT_VERSION}\ndtype={}\nconfig_hash={}\nvocab_hash={}\n",
        dtype.name(),
        sha_hex(&config),
        sha_hex(&vocab)
    );
    let mut blob = Vec::with_capacity(model.params.num_elements() * dtype.width());
    for (name, t) in model.params.iter() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        manifest.push_str(&format!("param.{name}={}@{}\n", dims.join(","), blob.len()));
        for &v in t.data() {
            match dtype {
                Dtype::F32 => blob.extend_from_slice(&(v as f32).to_le_bytes()),
                Dtype::F64 => blob.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    write(&dir.join(CONFIG), config.as_bytes())?;
    write(&dir.join(VOCAB), vocab.as_bytes())?;
    write(&dir.join(BLOB), &blob)?;
    write(&dir.join(MANIFEST), manifest.as_bytes())
}

struct Contents {
    config: ModelConfig,
    vocab: Vocabulary,
    params: ParamStore,
}

fn parse_shape(s: &str) -> Option<Vec<usize>> {
    if s.is_empty() {
        return Some(vec![]);
    }
    s.split(',').map(|d| d.parse().ok()).collect()
}

fn read(dir: &Path) -> Result<Contents> {
    let manifest = read_text(&dir.join(MANIFEST))?;
    let mut keys = BTreeMap::new();
    let mut entries = Vec::new();
    for (i, line) in manifest.lines().enumerate() {
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Checkpoint(format!("manifest line {}: expected key=value", i + 1)));
        };
        match k.strip_prefix("param.") {
            Some(name) => entries.push((name.to_string(), v.to_string())),
            None => {
                keys.insert(k.to_string(), v.to_string());
            }
        }
    }
    let key = |k: &str| keys.get(k).ok_or_else(|| Error::Checkpoint(format!("manifest lacks {k}")));
    if key("format")? != FORMAT {
        return Err(Error::Checkpoint("not a checkpoint manifest".into()));
    }
    let version = key("version")?;
    if version != &CHECKPOINT_VERSION.to_string() {
        return Err(Error::Checkpoint(format!("version {version} is not supported (expected {CHECKPOINT_VERSION})")));
    }
    let dtype = Dtype::parse(key("dtype")?)?;

    let config_text = read_text(&dir.join(CONFIG))?;
    if &sha_hex(&config_text) != key("config_hash")? {
        return Err(Error::Checkpoint("config.toml does not match the manifest hash".into()));
    }
    let config = ModelConfig::from_toml(&config_text)?;
    let vocab_text = read_text(&dir.join(VOCAB))?;
    if &sha_hex(&vocab_text) != key("vocab_hash")? {
        return Err(Error::Checkpoint("vocab.txt does not match the manifest hash".into()));
    }
    let vocab = Vocabulary::from_text(&vocab_text)?;

    let blob_path = dir.join(BLOB);
    let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    let mut params = ParamStore::new();
    let mut expected_offset = 0;
    for (name, spec) in entries {
        let bad = || Error::Checkpoint(format!("malformed entry for {name}: {spec:?}"));
        let (shape, offset) = spec.split_once('@').ok_or_else(bad)?;
        let shape = parse_shape(shape).ok_or_else(bad)?;
        let offset: usize = offset.parse().map_err(|_| bad())?;
        let count: usize = shape.iter().product();
        let end = offset + count * dtype.width();
        if offset != expected_offset || end > blob.len() {
            return Err(Error::Checkpoint(format!("{name}: data range {offset}..{end} does not fit the blob")));
        }
        let bytes = &blob[offset..end];
        let data: Vec<f64> = match dtype {
            Dtype::F32 => bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect(),
            Dtype::F64 => bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect(),
        };
        params.insert(name, Tensor::new(shape, data)?);
        expected_offset = end;
    }
    if expected_offset != blob.len() {
        return Err(Error::Checkpoint(format!("blob has {} trailing bytes", blob.len() - expected_offset)));
    }
    Ok(Contents { config, vocab, params })
}

pub fn load_checkpoint(dir: &Path) -> Result<TransducerModel> {
    let c = read(dir)?;
    TransducerModel::from_parts(c.config, c.vocab, c.params)
}

/// Overwrites every parameter of `model` whose name starts with `prefix`
/// from the checkpoint, leaving the rest untouched. Returns the restored
/// names.
pub fn load_partial(model: &mut TransducerModel, dir: &Path, prefix: &str) -> Result<Vec<String>> {
    let c = read(dir)?;
    if c.vocab != model.vocab {
        return Err(Error::Config("checkpoint vocabulary differs from the model's".into()));
    }
    let wanted = model.params.subset(prefix);
    let mut restored = Vec::new();
    for (name, t) in wanted.iter() {
        let src = c
            .params
            .get(name)
            .map_err(|_| Error::Checkpoint(format!("checkpoint lacks {name}")))?;
        if src.shape() != t.shape() {
            return Err(Error::Checkpoint(format!("{name}: shape {:?} vs {:?}", src.shape(), t.shape())));
        }
        restored.push(name.clone());
    }
    for name in &restored {
        *model.params.get_mut(name).expect("name from subset") = c.params.get(name)?.clone();
    }
    Ok(restored)
}
