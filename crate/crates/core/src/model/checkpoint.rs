//! Checkpoint directories: `manifest.json`, `vocab.txt` and one
//! little-endian float32 file per tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, ModelParameters};
use super::tensor::Tensor;
use super::vocab::Vocabulary;
use super::ModelError;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const VOCAB_FILE: &str = "vocab.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: ModelConfig,
    pub vocab_hash: String,
    pub tensors: Vec<TensorEntry>,
    /// Adam first and second moments, when saved alongside the weights.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub optimizer: Vec<TensorEntry>,
}

/// Adam moment estimates aligned with the parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub first: ModelParameters,
    pub second: ModelParameters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ModelParameters,
    pub moments: Option<Moments>,
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> ModelError + '_ {
    move |e| ModelError::Io {
        path: path.display().to_string(),
        source: e,
    }
}

fn write_tensor(path: &Path, t: &Tensor) -> Result<(), ModelError> {
    let mut bytes = Vec::with_capacity(t.len() * 4);
    for &v in &t.data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(io(path))
}

fn read_tensor(path: &Path, shape: &[usize]) -> Result<Tensor, ModelError> {
    let bytes = fs::read(path).map_err(io(path))?;
    let n: usize = shape.iter().product();
    if bytes.len() != n * 4 {
        return Err(ModelError::Checkpoint(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            n * 4
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(Tensor::from_vec(shape, data))
}

fn write_store(dir: &Path, sub: &str, params: &ModelParameters) -> Result<Vec<TensorEntry>, ModelError> {
    let sub_dir = dir.join(sub);
    fs::create_dir_all(&sub_dir).map_err(io(&sub_dir))?;
    params
        .tensors()
        .into_iter()
        .map(|(name, t)| {
            let file = format!("{sub}/{name}.bin");
            write_tensor(&dir.join(&file), t)?;
            Ok(TensorEntry {
                name,
                shape: t.shape.clone(),
                dtype: "f32".into(),
                file,
            })
        })
        .collect()
}

fn read_store(dir: &Path, template: &ModelParameters, entries: &[TensorEntry]) -> Result<ModelParameters, ModelError> {
    let mut out = template.clone();
    let names = out.names();
    if entries.len() != names.len() {
        return Err(ModelError::Checkpoint(format!(
            "manifest lists {} tensors, config implies {}",
            entries.len(),
            names.len()
        )));
    }
    for ((slot, name), entry) in out.tensors_mut().into_iter().zip(&names).zip(entries) {
        if &entry.name != name || entry.shape != slot.shape || entry.dtype != "f32" {
            return Err(ModelError::Checkpoint(format!(
                "tensor `{}` {:?} does not match expected `{name}` {:?}",
                entry.name, entry.shape, slot.shape
            )));
        }
        *slot = read_tensor(&dir.join(&entry.file), &entry.shape)?;
    }
    Ok(out)
}

pub fn save_checkpoint(
    dir: impl AsRef<Path>,
    config: &ModelConfig,
    vocab: &Vocabulary,
    params: &ModelParameters,
    moments: Option<&Moments>,
) -> Result<(), ModelError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io(dir))?;
    let tensors = write_store(dir, "tensors", params)?;
    let mut optimizer = Vec::new();
    if let Some(m) = moments {
        optimizer.extend(write_store(dir, "adam_m", &m.first)?);
        optimizer.extend(write_store(dir, "adam_v", &m.second)?);
    }
    let vocab_path = dir.join(VOCAB_FILE);
    vocab.save(&vocab_path).map_err(io(&vocab_path))?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: config.clone(),
        vocab_hash: vocab.hash(),
        tensors,
        optimizer,
    };
    let path = dir.join(MANIFEST);
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, body + "\n").map_err(io(&path))
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest, ModelError> {
    let path = dir.as_ref().join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Checkpoint, ModelError> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    let vocab_path = dir.join(VOCAB_FILE);
    let vocab = Vocabulary::load(&vocab_path).map_err(io(&vocab_path))?;
    if vocab.hash() != manifest.vocab_hash {
        return Err(ModelError::VocabMismatch {
            expected: manifest.vocab_hash,
            found: vocab.hash(),
        });
    }
    let template = ModelParameters::init(&manifest.config, 0)?;
    let params = read_store(dir, &template, &manifest.tensors)?;
    let moments = if manifest.optimizer.is_empty() {
        None
    } else {
        let n = manifest.tensors.len();
        if manifest.optimizer.len() != 2 * n {
            return Err(ModelError::Checkpoint("optimizer state is incomplete".into()));
        }
        Some(Moments {
            first: read_store(dir, &template, &manifest.optimizer[..n])?,
            second: read_store(dir, &template, &manifest.optimizer[n..])?,
        })
    };
    Ok(Checkpoint {
        config: manifest.config,
        vocab,
        params,
        moments,
    })
}
