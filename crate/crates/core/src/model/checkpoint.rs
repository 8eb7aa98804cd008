//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `FCBMCKPT`, a little-endian `u32` header length,
//! a UTF-8 JSON header, then every array listed in the header as
//! little-endian `f64` values in header order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BottleneckLayer, CbmModel, Head, HeadKind, KanGrid, KanHead, LinearHead};
use crate::numerics::Matrix;
use crate::{Error, Result, TOOL_VERSION};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"FCBMCKPT";

#[derive(Debug, Serialize, Deserialize)]
struct ArraySpec {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    tool_version: String,
    concept_names: Vec<String>,
    label_names: Vec<String>,
    input_width: usize,
    head_kind: HeadKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    kan_grid: Option<KanGrid>,
    seed: u64,
    config_fingerprint: String,
    arrays: Vec<ArraySpec>,
}

fn arrays_of(model: &CbmModel) -> Vec<(&'static str, Vec<usize>, Vec<f64>)> {
    let bn = &model.bottleneck;
    let (k, w) = bn.weight.shape();
    let mut out = vec![
        ("bottleneck.weight", vec![k, w], bn.weight.as_slice().to_vec()),
        ("bottleneck.bias", vec![k], bn.bias.clone()),
    ];
    match &model.head {
        Head::Kan(h) => {
            out.push((
                "kan.coeffs",
                vec![h.n_inputs(), h.n_outputs(), h.grid().knots],
                h.coeffs().to_vec(),
            ));
            out.push(("kan.scale", vec![h.n_outputs()], h.scale().to_vec()));
        }
        Head::Linear(h) => {
            let (o, i) = h.weight.shape();
            out.push(("linear.weight", vec![o, i], h.weight.as_slice().to_vec()));
            out.push(("linear.bias", vec![o], h.bias.clone()));
        }
    }
    out
}

pub fn encode_checkpoint(model: &CbmModel) -> Result<Vec<u8>> {
    let arrays = arrays_of(model);
    let header = Header {
        format_version: CHECKPOINT_FORMAT_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        concept_names: model.concept_names.clone(),
        label_names: model.label_names.clone(),
        input_width: model.input_width(),
        head_kind: model.head.kind(),
        kan_grid: match &model.head {
            Head::Kan(h) => Some(*h.grid()),
            Head::Linear(_) => None,
        },
        seed: model.seed,
        config_fingerprint: model.config_fingerprint.clone(),
        arrays: arrays
            .iter()
            .map(|(name, shape, _)| ArraySpec {
                name: name.to_string(),
                shape: shape.clone(),
            })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(12 + header_bytes.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_bytes);
    for (_, _, data) in &arrays {
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn save_checkpoint(model: &CbmModel, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<CbmModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

fn corrupt(msg: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("corrupt checkpoint: {msg}"))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<CbmModel> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(corrupt("missing FCBMCKPT magic"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[12..];
    if body.len() < hlen {
        return Err(corrupt(format!("header declares {hlen} bytes, file has {}", body.len())));
    }
    let header: Header =
        serde_json::from_slice(&body[..hlen]).map_err(|e| corrupt(format!("header: {e}")))?;
    if header.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint format version {} (this build reads {})",
            header.format_version, CHECKPOINT_FORMAT_VERSION
        )));
    }

    let mut data = &body[hlen..];
    let mut arrays = std::collections::HashMap::new();
    for spec in &header.arrays {
        let len: usize = spec.shape.iter().product();
        if data.len() < len * 8 {
            return Err(corrupt(format!("array {} truncated", spec.name)));
        }
        let values: Vec<f64> = data[..len * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        data = &data[len * 8..];
        arrays.insert(spec.name.as_str(), (spec.shape.clone(), values));
    }
    if !data.is_empty() {
        return Err(corrupt(format!("{} trailing bytes", data.len())));
    }

    let k = header.concept_names.len();
    let n_out = header.label_names.len();
    let mut take = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
        let (s, v) = arrays
            .remove(name)
            .ok_or_else(|| corrupt(format!("missing array {name}")))?;
        if s != shape {
            return Err(Error::Checkpoint(format!(
                "array {name} has shape {s:?}, header names imply {shape:?}"
            )));
        }
        Ok(v)
    };
    let w = header.input_width;
    let bottleneck = BottleneckLayer::new(
        Matrix::from_vec(k, w, take("bottleneck.weight", &[k, w])?)?,
        take("bottleneck.bias", &[k])?,
    )?;
    let head = match header.head_kind {
        HeadKind::Kan => {
            let grid = header
                .kan_grid
                .ok_or_else(|| corrupt("KAN checkpoint without grid"))?;
            Head::Kan(KanHead::new(
                k,
                n_out,
                grid,
                take("kan.coeffs", &[k, n_out, grid.knots])?,
                take("kan.scale", &[n_out])?,
            )?)
        }
        HeadKind::Linear => Head::Linear(LinearHead::new(
            Matrix::from_vec(n_out, k, take("linear.weight", &[n_out, k])?)?,
            take("linear.bias", &[n_out])?,
        )?),
    };
    Ok(CbmModel {
        concept_names: header.concept_names,
        label_names: header.label_names,
        bottleneck,
        head,
        seed: header.seed,
        config_fingerprint: header.config_fingerprint,
    })
}
