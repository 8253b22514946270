//! Versioned binary checkpoint container.
//!
//! Layout:
//!
//! ```text
//! magic  "ICKP"                      4 bytes
//! version u32 LE                     currently 1
//! meta length u32 LE + meta JSON     descriptor, epoch, extra payload
//! tensor count u32 LE
//! per tensor:
//!   name length u16 LE + UTF-8 name
//!   ndim u8 + dims (u32 LE each)
//!   values, little-endian f32
//! ```
//!
//! Parameters are held in memory as f64 and stored as f32; loading restores
//! the f32 values exactly. Optimizer moments ride along under `adam.m.*` /
//! `adam.v.*` names so interrupted runs can resume.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{AdamState, ArchDescriptor, ClusterModel, Dense, ModelGrads};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ICKP";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    descriptor: ArchDescriptor,
    epoch: usize,
    adam_t: Option<u64>,
    #[serde(default)]
    extra: serde_json::Value,
}

/// A model snapshot plus training bookkeeping.
pub struct Checkpoint {
    pub model: ClusterModel,
    pub epoch: usize,
    pub optimizer: Option<AdamState>,
    /// Free-form payload (the trainer stores its dataset config here).
    pub extra: serde_json::Value,
}

fn write_tensor<W: Write>(w: &mut W, name: &str, dims: &[u32], data: &[f64]) -> Result<()> {
    let name_bytes = name.as_bytes();
    w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
    w.write_all(name_bytes)?;
    w.write_all(&[dims.len() as u8])?;
    for d in dims {
        w.write_all(&d.to_le_bytes())?;
    }
    for &v in data {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

fn layer_tensors(name: &str, layer: &Dense) -> Vec<(String, Vec<u32>, Vec<f64>)> {
    vec![
        (
            format!("{name}.weight"),
            vec![layer.w.nrows() as u32, layer.w.ncols() as u32],
            layer.w.iter().copied().collect(),
        ),
        (
            format!("{name}.bias"),
            vec![layer.b.len() as u32],
            layer.b.iter().copied().collect(),
        ),
    ]
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut tensors: Vec<(String, Vec<u32>, Vec<f64>)> = Vec::new();
    for (layer, name) in ckpt.model.layers() {
        tensors.extend(layer_tensors(&name, layer));
    }
    if let Some(state) = &ckpt.optimizer {
        for (grads, prefix) in [(&state.m, "adam.m"), (&state.v, "adam.v")] {
            for (i, l) in grads.convs.iter().enumerate() {
                tensors.extend(layer_tensors(&format!("{prefix}.conv{i}"), l));
            }
            if let Some(l) = &grads.fc {
                tensors.extend(layer_tensors(&format!("{prefix}.fc"), l));
            }
            for (i, l) in grads.heads.iter().enumerate() {
                tensors.extend(layer_tensors(&format!("{prefix}.head{i}"), l));
            }
        }
    }

    let meta = Meta {
        descriptor: ckpt.model.descriptor().clone(),
        epoch: ckpt.epoch,
        adam_t: ckpt.optimizer.as_ref().map(|s| s.t),
        extra: ckpt.extra.clone(),
    };
    let meta_bytes = serde_json::to_vec(&meta)?;

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(meta_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&meta_bytes)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, dims, data) in &tensors {
        write_tensor(&mut w, name, dims, data)?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let b = read_exact(r, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

struct RawTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn read_tensors<R: Read>(r: &mut R, count: usize) -> Result<Vec<(String, RawTensor)>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let nb = read_exact(r, 2)?;
        let name_len = u16::from_le_bytes([nb[0], nb[1]]) as usize;
        let name = String::from_utf8(read_exact(r, name_len)?)
            .map_err(|e| Error::Checkpoint(format!("bad tensor name: {e}")))?;
        let ndim = read_exact(r, 1)?[0] as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(read_u32(r)? as usize);
        }
        let len: usize = dims.iter().product();
        let bytes = read_exact(r, len * 4)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        out.push((name, RawTensor { dims, data }));
    }
    Ok(out)
}

fn take_layer(
    tensors: &mut Vec<(String, RawTensor)>,
    name: &str,
) -> Result<Dense> {
    let find = |tensors: &mut Vec<(String, RawTensor)>, key: String| -> Result<RawTensor> {
        let pos = tensors
            .iter()
            .position(|(n, _)| *n == key)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor '{key}'")))?;
        Ok(tensors.remove(pos).1)
    };
    let w = find(tensors, format!("{name}.weight"))?;
    let b = find(tensors, format!("{name}.bias"))?;
    if w.dims.len() != 2 || b.dims.len() != 1 {
        return Err(Error::Checkpoint(format!("tensor '{name}' has wrong rank")));
    }
    Ok(Dense {
        w: Array2::from_shape_vec((w.dims[0], w.dims[1]), w.data)
            .map_err(|e| Error::Checkpoint(e.to_string()))?,
        b: Array1::from_vec(b.data),
    })
}

fn take_grads(
    tensors: &mut Vec<(String, RawTensor)>,
    prefix: &str,
    desc: &ArchDescriptor,
) -> Result<ModelGrads> {
    let mut convs = Vec::new();
    for i in 0..desc.conv_channels.len() {
        convs.push(take_layer(tensors, &format!("{prefix}.conv{i}"))?);
    }
    let fc = if desc.fc_hidden.is_some() {
        Some(take_layer(tensors, &format!("{prefix}.fc"))?)
    } else {
        None
    };
    let mut heads = Vec::new();
    for i in 0..desc.heads.len() {
        heads.push(take_layer(tensors, &format!("{prefix}.head{i}"))?);
    }
    Ok(ModelGrads { convs, fc, heads })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_exact(&mut r, 4)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {magic:02x?}, expected {MAGIC:02x?}"
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let meta_len = read_u32(&mut r)? as usize;
    let meta: Meta = serde_json::from_slice(&read_exact(&mut r, meta_len)?)?;
    meta.descriptor.validate().map_err(|e| {
        Error::Checkpoint(format!("descriptor in checkpoint is invalid: {e}"))
    })?;
    let count = read_u32(&mut r)? as usize;
    let mut tensors = read_tensors(&mut r, count)?;

    let desc = meta.descriptor.clone();
    let mut convs = Vec::new();
    for i in 0..desc.conv_channels.len() {
        convs.push(take_layer(&mut tensors, &format!("conv{i}"))?);
    }
    let fc = if desc.fc_hidden.is_some() {
        Some(take_layer(&mut tensors, "fc")?)
    } else {
        None
    };
    let mut heads = Vec::new();
    for i in 0..desc.heads.len() {
        heads.push(take_layer(&mut tensors, &format!("head{i}"))?);
    }
    let model = ClusterModel {
        desc,
        convs,
        fc,
        heads,
    };

    let optimizer = match meta.adam_t {
        Some(t) => Some(AdamState {
            m: take_grads(&mut tensors, "adam.m", model.descriptor())?,
            v: take_grads(&mut tensors, "adam.v", model.descriptor())?,
            t,
        }),
        None => None,
    };

    Ok(Checkpoint {
        model,
        epoch: meta.epoch,
        optimizer,
        extra: meta.extra,
    })
}
