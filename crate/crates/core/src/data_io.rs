//! Dataset ingestion and artefact persistence.
//!
//! Datasets are JSON lines `{id, text, label, embedding}` plus a JSON
//! manifest carrying the label list, the row count, the embedding dimension
//! and the SHA-256 of the data file. Model files are a single canonical JSON
//! line holding a format version, a checksum and the model body.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gp_train::GpModel;
use crate::seed;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Norm deviation below which a vector counts as already normalised and is
/// left untouched, so re-ingesting normalised data is bit-exact.
const NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedExample {
    pub id: u64,
    pub text: String,
    pub label: usize,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub label_list: Vec<String>,
    pub count: usize,
    pub embed_dim: usize,
    /// Hex SHA-256 of the data file.
    pub checksum: String,
    /// Phrase filling the target slot of the ICL prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub examples: Vec<EmbeddedExample>,
}

/// Scales `v` to unit length. Returns `None` for a zero or non-finite norm.
pub fn normalize(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    if (norm - 1.0).abs() <= NORM_TOLERANCE {
        return Some(v.to_vec());
    }
    Some(v.iter().map(|x| x / norm).collect())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: invalid manifest: {e}", path.display())))?;
    if manifest.label_list.len() < 2 {
        return Err(Error::Schema(format!(
            "{}: label_list needs at least two labels",
            path.display()
        )));
    }
    if manifest.embed_dim == 0 {
        return Err(Error::Schema(format!("{}: embed_dim must be positive", path.display())));
    }
    Ok(manifest)
}

/// Loads and validates a dataset, normalising every embedding.
pub fn load_dataset(data_path: &Path, manifest_path: &Path) -> Result<Dataset> {
    let manifest = read_manifest(manifest_path)?;
    let checksum = sha256_file(data_path)?;
    if checksum != manifest.checksum {
        return Err(Error::Checksum(format!(
            "{} (manifest {}, file {checksum})",
            data_path.display(),
            manifest.checksum
        )));
    }
    let file = File::open(data_path).map_err(|e| Error::io(data_path, e))?;
    let mut examples = Vec::with_capacity(manifest.count);
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(data_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = |message: String| Error::Record {
            path: data_path.to_path_buf(),
            line: line_no,
            message,
        };
        let mut ex: EmbeddedExample = serde_json::from_str(&line).map_err(|e| record(e.to_string()))?;
        if ex.embedding.len() != manifest.embed_dim {
            return Err(Error::Schema(format!(
                "{}:{line_no}: embedding has dimension {} but the manifest declares {}",
                data_path.display(),
                ex.embedding.len(),
                manifest.embed_dim
            )));
        }
        if ex.label >= manifest.label_list.len() {
            return Err(Error::Schema(format!(
                "{}:{line_no}: label {} outside label_list of length {}",
                data_path.display(),
                ex.label,
                manifest.label_list.len()
            )));
        }
        if !seen.insert(ex.id) {
            return Err(record(format!("duplicate id {}", ex.id)));
        }
        ex.embedding = normalize(&ex.embedding).ok_or(Error::ZeroEmbedding { id: ex.id })?;
        examples.push(ex);
    }
    if examples.len() != manifest.count {
        return Err(Error::Schema(format!(
            "manifest declares {} records but {} holds {}",
            manifest.count,
            data_path.display(),
            examples.len()
        )));
    }
    Ok(Dataset { manifest, examples })
}

/// Writes the examples as JSON lines and a manifest matching them.
pub fn save_dataset(
    name: &str,
    label_list: &[String],
    examples: &[EmbeddedExample],
    data_path: &Path,
    manifest_path: &Path,
) -> Result<DatasetManifest> {
    let embed_dim = examples.first().map_or(0, |e| e.embedding.len());
    {
        let file = File::create(data_path).map_err(|e| Error::io(data_path, e))?;
        let mut out = BufWriter::new(file);
        for ex in examples {
            serde_json::to_writer(&mut out, ex)?;
            out.write_all(b"\n").map_err(|e| Error::io(data_path, e))?;
        }
        out.flush().map_err(|e| Error::io(data_path, e))?;
    }
    let manifest = DatasetManifest {
        name: name.to_string(),
        label_list: label_list.to_vec(),
        count: examples.len(),
        embed_dim,
        checksum: sha256_file(data_path)?,
        target: None,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(manifest_path, text + "\n").map_err(|e| Error::io(manifest_path, e))?;
    Ok(manifest)
}

/// Uniform sample of `n` examples without replacement, in draw order.
pub fn sample_annotated_pool(dataset: &[EmbeddedExample], n: usize, seed: u64) -> Result<Vec<EmbeddedExample>> {
    if n > dataset.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot sample {n} examples from {}",
            dataset.len()
        )));
    }
    let mut rng = seed::rng(seed);
    Ok(index::sample(&mut rng, dataset.len(), n)
        .into_iter()
        .map(|i| dataset[i].clone())
        .collect())
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    checksum: String,
    model: GpModel,
}

fn model_checksum(model: &GpModel) -> Result<String> {
    let body = serde_json::to_vec(model)?;
    Ok(hex::encode(Sha256::digest(&body)))
}

/// Canonical single-line encoding of a model file.
pub fn model_to_string(model: &GpModel) -> Result<String> {
    model.validate()?;
    let file = ModelFile {
        version: MODEL_FORMAT_VERSION,
        checksum: model_checksum(model)?,
        model: model.clone(),
    };
    Ok(serde_json::to_string(&file)? + "\n")
}

pub fn model_from_str(text: &str) -> Result<GpModel> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(value)?;
    if model_checksum(&file.model)? != file.checksum {
        return Err(Error::Checksum("model body does not match its checksum".into()));
    }
    file.model.validate()?;
    Ok(file.model)
}

pub fn save_model(model: &GpModel, path: &Path) -> Result<()> {
    let text = model_to_string(model)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<GpModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text).map_err(|e| match e {
        Error::Checksum(msg) => Error::Checksum(format!("{}: {msg}", path.display())),
        other => other,
    })
}
