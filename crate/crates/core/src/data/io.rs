//! On-disk dataset layout.
//!
//! A JSON manifest names the label and concept sets and points at a
//! JSON-lines sample file. Each sample record either inlines its embedding
//! (`"z"`) or references a row of a compact binary embedding file
//! (`"z_idx"`): magic `FCBM`, then `u32` version, row count and width, then
//! row-major little-endian `f32` values.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{assign_splits, ConceptEmbedding, Dataset, Normalization, Sample, Split};
use crate::{Error, Result, TOOL_VERSION};

pub const MANIFEST_VERSION: u32 = 1;
const EMB_MAGIC: &[u8; 4] = b"FCBM";
const EMB_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingStorage {
    Inline,
    /// `f32` binary file; embeddings lose precision beyond single floats.
    Binary,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitPlan {
    seed: u64,
    fractions: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct Files {
    samples: String,
    /// Path of the binary embedding file, or `"inline"`.
    #[serde(default = "inline")]
    embeddings: String,
}

fn inline() -> String {
    "inline".into()
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tool_version: Option<String>,
    d: usize,
    #[serde(default)]
    text_only: bool,
    label_names: Vec<String>,
    concept_names: Vec<String>,
    normalization: Option<Normalization>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    splits: Option<SplitPlan>,
    files: Files,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    y: usize,
    c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    z: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    z_idx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
}

fn ingest_err(path: &Path, line: Option<usize>, message: impl Into<String>) -> Error {
    Error::Ingestion {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn sibling(manifest: &Path, name: &str) -> PathBuf {
    manifest.parent().unwrap_or_else(|| Path::new(".")).join(name)
}

pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| ingest_err(manifest_path, Some(e.line()), format!("manifest: {e}")))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(ingest_err(
            manifest_path,
            None,
            format!("unsupported manifest version {}", manifest.version),
        ));
    }
    let width = if manifest.text_only { manifest.d } else { 2 * manifest.d };
    let k = manifest.concept_names.len();

    let table = if manifest.files.embeddings == "inline" {
        None
    } else {
        let p = sibling(manifest_path, &manifest.files.embeddings);
        let (w, rows) = read_binary_embeddings(&p)?;
        if w != width {
            return Err(ingest_err(
                &p,
                None,
                format!("embedding width {w}, manifest implies {width}"),
            ));
        }
        Some((p, rows))
    };

    let samples_path = sibling(manifest_path, &manifest.files.samples);
    let file = std::fs::File::open(&samples_path).map_err(|e| Error::io(&samples_path, e))?;
    let mut samples = Vec::new();
    let mut missing_split = false;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(&samples_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| ingest_err(&samples_path, Some(lineno), format!("malformed record: {e}")))?;
        let bad = |msg: String| ingest_err(&samples_path, Some(lineno), format!("sample {:?}: {msg}", rec.id));
        if rec.c.len() != k {
            return Err(bad(format!("c has {} values, expected k = {k}", rec.c.len())));
        }
        if rec.y >= manifest.label_names.len() {
            return Err(bad(format!(
                "unknown label {} ({} labels)",
                rec.y,
                manifest.label_names.len()
            )));
        }
        let z = match (&rec.z, rec.z_idx, &table) {
            (Some(z), None, _) => z.clone(),
            (None, Some(idx), Some((p, rows))) => rows
                .get(idx)
                .cloned()
                .ok_or_else(|| bad(format!("z_idx {idx} beyond {} rows of {}", rows.len(), p.display())))?,
            (None, Some(_), None) => return Err(bad("z_idx given but embeddings are inline".into())),
            (Some(_), Some(_), _) => return Err(bad("both z and z_idx given".into())),
            (None, None, _) => return Err(bad("no embedding (z or z_idx)".into())),
        };
        if z.len() != width {
            return Err(bad(format!("z has {} values, expected {width}", z.len())));
        }
        if z.iter().chain(&rec.c).any(|v| !v.is_finite()) {
            return Err(bad("non-finite value".into()));
        }
        missing_split |= rec.split.is_none();
        samples.push(Sample {
            id: rec.id,
            z,
            c: rec.c,
            y: rec.y,
            split: rec.split.unwrap_or(Split::Train),
        });
    }

    if missing_split {
        let plan = manifest.splits.as_ref().ok_or_else(|| {
            ingest_err(
                manifest_path,
                None,
                "records without \"split\" need a manifest \"splits\" plan",
            )
        })?;
        let splits = assign_splits(samples.len(), plan.seed, plan.fractions)?;
        for (s, split) in samples.iter_mut().zip(splits) {
            s.split = split;
        }
    }

    let ds = Dataset {
        concept_names: manifest.concept_names,
        label_names: manifest.label_names,
        d: manifest.d,
        text_only: manifest.text_only,
        samples,
        normalization: manifest.normalization,
    };
    ds.validate()
        .map_err(|e| ingest_err(manifest_path, None, e.to_string()))?;
    Ok(ds)
}

/// Writes `manifest_path` plus `samples.jsonl` (and `embeddings.bin` for
/// binary storage) next to it.
pub fn save_dataset(dataset: &Dataset, manifest_path: &Path, storage: EmbeddingStorage) -> Result<()> {
    dataset.validate()?;
    if let Some(dir) = manifest_path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset");
    let samples_name = format!("{stem}.samples.jsonl");
    let emb_name = format!("{stem}.embeddings.bin");

    let embeddings = match storage {
        EmbeddingStorage::Inline => "inline".to_string(),
        EmbeddingStorage::Binary => {
            let rows: Vec<&[f64]> = dataset.samples.iter().map(|s| &s.z[..]).collect();
            write_binary_embeddings(&sibling(manifest_path, &emb_name), dataset.z_width(), &rows)?;
            emb_name
        }
    };

    let samples_path = sibling(manifest_path, &samples_name);
    let mut out = Vec::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        let rec = Record {
            id: s.id.clone(),
            y: s.y,
            c: s.c.clone(),
            z: (storage == EmbeddingStorage::Inline).then(|| s.z.clone()),
            z_idx: (storage == EmbeddingStorage::Binary).then_some(i),
            split: Some(s.split),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.push(b'\n');
    }
    std::fs::write(&samples_path, out).map_err(|e| Error::io(&samples_path, e))?;

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        tool_version: Some(TOOL_VERSION.to_string()),
        d: dataset.d,
        text_only: dataset.text_only,
        label_names: dataset.label_names.clone(),
        concept_names: dataset.concept_names.clone(),
        normalization: dataset.normalization.clone(),
        splits: None,
        files: Files {
            samples: samples_name,
            embeddings,
        },
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))
}

pub fn write_binary_embeddings(path: &Path, width: usize, rows: &[&[f64]]) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + rows.len() * width * 4);
    buf.extend_from_slice(EMB_MAGIC);
    buf.extend_from_slice(&EMB_VERSION.to_le_bytes());
    buf.extend_from_slice(&(rows.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(width as u32).to_le_bytes());
    for r in rows {
        if r.len() != width {
            return Err(Error::Shape(format!("embedding row of {} values, width {width}", r.len())));
        }
        for &v in *r {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Returns `(width, rows)`.
pub fn read_binary_embeddings(path: &Path) -> Result<(usize, Vec<Vec<f64>>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..4] != EMB_MAGIC {
        return Err(ingest_err(path, None, "missing FCBM magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    if word(4) != EMB_VERSION as usize {
        return Err(ingest_err(path, None, format!("unsupported embedding version {}", word(4))));
    }
    let (n, width) = (word(8), word(12));
    let body = &bytes[16..];
    if body.len() != n * width * 4 {
        return Err(ingest_err(
            path,
            None,
            format!("expected {} bytes of data for {n}x{width}, found {}", n * width * 4, body.len()),
        ));
    }
    let mut rows = Vec::with_capacity(n);
    for (r, chunk) in body.chunks_exact(width * 4).enumerate() {
        let row: Vec<f64> = chunk
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        if row.iter().any(|v| !v.is_finite()) {
            return Err(ingest_err(path, None, format!("row {r} contains non-finite values")));
        }
        rows.push(row);
    }
    Ok((width, rows))
}

pub fn load_concept_embeddings(path: &Path) -> Result<Vec<ConceptEmbedding>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<ConceptEmbedding> = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ConceptEmbedding = serde_json::from_str(&line)
            .map_err(|e| ingest_err(path, Some(lineno + 1), format!("malformed concept: {e}")))?;
        if let Some(first) = out.first() {
            if first.e.len() != rec.e.len() {
                return Err(ingest_err(
                    path,
                    Some(lineno + 1),
                    format!("concept {:?} has width {}, expected {}", rec.name, rec.e.len(), first.e.len()),
                ));
            }
        }
        out.push(rec);
    }
    Ok(out)
}
