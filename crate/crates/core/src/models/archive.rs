//! Flat tensor archives: `<stem>.bin` holds raw little-endian tensors
//! back to back, `<stem>.json` maps each name to its shape, dtype and byte
//! range.

use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::IoContext;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// `"f32"` or `"f64"`.
    pub dtype: String,
    pub offset: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub tensors: Vec<TensorEntry>,
}

fn dtype_name(dtype: DType) -> Result<&'static str> {
    match dtype {
        DType::F32 => Ok("f32"),
        DType::F64 => Ok("f64"),
        other => Err(Error::Shape(format!("cannot archive {other:?} tensors"))),
    }
}

/// Writes `tensors` as `<dir>/<stem>.bin` plus `<dir>/<stem>.json`.
pub fn write_archive(dir: &Path, stem: &str, tensors: &[(String, Tensor)]) -> Result<()> {
    std::fs::create_dir_all(dir).at(dir)?;
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    for (name, t) in tensors {
        let dtype = dtype_name(t.dtype())?;
        let offset = blob.len() as u64;
        let flat = t.flatten_all()?;
        match t.dtype() {
            DType::F32 => flat.to_vec1::<f32>()?.iter().for_each(|v| blob.extend(v.to_le_bytes())),
            _ => flat.to_vec1::<f64>()?.iter().for_each(|v| blob.extend(v.to_le_bytes())),
        }
        entries.push(TensorEntry {
            name: name.clone(),
            shape: t.dims().to_vec(),
            dtype: dtype.to_string(),
            offset,
            bytes: blob.len() as u64 - offset,
        });
    }
    let bin = dir.join(format!("{stem}.bin"));
    std::fs::write(&bin, &blob).at(&bin)?;
    let json = dir.join(format!("{stem}.json"));
    let mut text = serde_json::to_string_pretty(&ArchiveManifest { tensors: entries })?;
    text.push('\n');
    std::fs::write(&json, text).at(&json)
}

/// Reads an archive written by [`write_archive`], in manifest order.
pub fn read_archive(dir: &Path, stem: &str) -> Result<Vec<(String, Tensor)>> {
    let corrupt = |reason: String| Error::Checkpoint {
        path: dir.join(format!("{stem}.json")),
        reason,
    };
    let json = dir.join(format!("{stem}.json"));
    let text = std::fs::read_to_string(&json).at(&json)?;
    let manifest: ArchiveManifest =
        serde_json::from_str(&text).map_err(|e| corrupt(format!("unreadable manifest: {e}")))?;
    let bin = dir.join(format!("{stem}.bin"));
    let blob = std::fs::read(&bin).at(&bin)?;
    let mut out = Vec::with_capacity(manifest.tensors.len());
    for e in manifest.tensors {
        let n: usize = e.shape.iter().product();
        let width = match e.dtype.as_str() {
            "f32" => 4,
            "f64" => 8,
            other => return Err(corrupt(format!("{}: unknown dtype {other}", e.name))),
        };
        let (start, len) = (e.offset as usize, e.bytes as usize);
        if len != n * width || start + len > blob.len() {
            return Err(corrupt(format!(
                "{}: byte range {start}+{len} does not fit shape {:?} in a {}-byte blob",
                e.name,
                e.shape,
                blob.len()
            )));
        }
        let bytes = &blob[start..start + len];
        let t = if width == 4 {
            let v: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            Tensor::from_vec(v, e.shape.as_slice(), &Device::Cpu)?
        } else {
            let v: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            Tensor::from_vec(v, e.shape.as_slice(), &Device::Cpu)?
        };
        out.push((e.name, t));
    }
    Ok(out)
}

/// Copies archived tensors into `vars`, failing with a name/shape diff if the
/// archive does not match the network layout exactly.
pub(crate) fn assign(vars: &super::NamedVars, tensors: Vec<(String, Tensor)>, path: &Path) -> Result<()> {
    let mut by_name: BTreeMap<String, Tensor> = tensors.into_iter().collect();
    let mut problems = Vec::new();
    for (name, var) in vars {
        match by_name.remove(name) {
            None => problems.push(format!("missing {name} {:?}", var.dims())),
            Some(t) if t.dims() != var.dims() => {
                problems.push(format!("shape {name}: expected {:?}, found {:?}", var.dims(), t.dims()))
            }
            Some(_) => {}
        }
    }
    problems.extend(by_name.keys().map(|k| format!("unexpected {k}")));
    if !problems.is_empty() {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            reason: format!("parameter manifest mismatch: {}", problems.join("; ")),
        });
    }
    Ok(())
}

pub(crate) fn load_into(vars: &super::NamedVars, dir: &Path, stem: &str) -> Result<()> {
    let tensors = read_archive(dir, stem)?;
    assign(vars, tensors.clone(), dir)?;
    let map: BTreeMap<String, Tensor> = tensors.into_iter().collect();
    for (name, var) in vars {
        var.set(&map[name].to_dtype(var.dtype())?)?;
    }
    Ok(())
}
