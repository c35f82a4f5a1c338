//! Versioned model checkpoints: a JSON manifest (shapes, config echo,
//! iteration) followed by one little-endian f32 blob per named parameter.

use crate::autodiff::Tensor;
use crate::{Error, Result};
use byteorder::{ByteOrder, LittleEndian, ReadBytesExt};
use std::io::Read;
use std::path::Path;

const MAGIC: &[u8; 8] = b"HVHCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub version: u32,
    pub iteration: u64,
    /// Config echo (trainer + model + scene identifiers), opaque JSON.
    pub config: serde_json::Value,
    /// Named parameters, order preserved.
    pub params: Vec<(String, Tensor)>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Manifest {
    version: u32,
    iteration: u64,
    config: serde_json::Value,
    params: Vec<ParamEntry>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the blob section.
    offset: u64,
    /// Element count.
    len: u64,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut entries = Vec::with_capacity(ckpt.params.len());
    let mut offset = 0u64;
    for (name, t) in &ckpt.params {
        entries.push(ParamEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset,
            len: t.len() as u64,
        });
        offset += t.len() as u64 * 4;
    }
    let manifest = Manifest {
        version: ckpt.version,
        iteration: ckpt.iteration,
        config: ckpt.config.clone(),
        params: entries,
    };
    let mjson =
        serde_json::to_vec(&manifest).map_err(|e| Error::Json { path: path.into(), source: e })?;
    let mut bytes = Vec::with_capacity(16 + mjson.len() + offset as usize);
    bytes.extend_from_slice(MAGIC);
    let mut len8 = [0u8; 8];
    LittleEndian::write_u64(&mut len8, mjson.len() as u64);
    bytes.extend_from_slice(&len8);
    bytes.extend_from_slice(&mjson);
    let mut f32buf = [0u8; 4];
    for (_, t) in &ckpt.params {
        for &v in t.data() {
            LittleEndian::write_f32(&mut f32buf, v as f32);
            bytes.extend_from_slice(&f32buf);
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let fmt = |msg: String| Error::format("checkpoint", path, msg);
    let mut r = std::io::Cursor::new(&bytes);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| fmt("truncated magic".into()))?;
    if &magic != MAGIC {
        return Err(fmt("bad magic".into()));
    }
    let mlen = r.read_u64::<LittleEndian>().map_err(|_| fmt("truncated manifest length".into()))?;
    let mut mjson = vec![0u8; mlen as usize];
    r.read_exact(&mut mjson).map_err(|_| fmt("truncated manifest".into()))?;
    let manifest: Manifest =
        serde_json::from_slice(&mjson).map_err(|e| Error::Json { path: path.into(), source: e })?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(fmt(format!("unsupported version {}", manifest.version)));
    }
    let blob_start = r.position() as usize;
    let blobs = &bytes[blob_start..];
    let mut params = Vec::with_capacity(manifest.params.len());
    for e in &manifest.params {
        let want: usize = e.shape.iter().product();
        if want as u64 != e.len {
            return Err(fmt(format!("param {}: shape/len mismatch", e.name)));
        }
        let start = e.offset as usize;
        let end = start + e.len as usize * 4;
        if end > blobs.len() {
            return Err(fmt(format!("param {}: blob out of range", e.name)));
        }
        let mut f = vec![0.0f32; e.len as usize];
        LittleEndian::read_f32_into(&blobs[start..end], &mut f);
        let data: Vec<f64> = f.into_iter().map(|v| v as f64).collect();
        params.push((e.name.clone(), Tensor::from_vec(&e.shape, data)?));
    }
    Ok(Checkpoint {
        version: manifest.version,
        iteration: manifest.iteration,
        config: manifest.config,
        params,
    })
}
