//! `RETF` model container.
//!
//! ```text
//! version 1: "RETF" | u32 version | u32 json_len | config JSON | f64 × N
//! version 2: "RETF" | u32 version | u8 elem tag | u32 json_len | config JSON
//!            | per tensor: f64 scale, i8 × len
//! ```
//!
//! All integers and floats are little-endian; tensors follow the canonical order.

use std::io::{Read, Write};

use crate::compression::{QuantizedModel, QuantizedTensor};
use crate::error::{Error, Result};
use crate::model::{tensor_specs, ModelConfig, ParamSet};
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 4] = b"RETF";
pub const VERSION_F64: u32 = 1;
pub const VERSION_INT8: u32 = 2;
/// Element-type tag of version-2 payloads.
pub const ELEM_INT8: u8 = 1;

/// Either payload kind, as found on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelFile {
    Float {
        config: ModelConfig,
        params: ParamSet<f64>,
    },
    Quantized(QuantizedModel),
}

impl ModelFile {
    pub fn version(&self) -> u32 {
        match self {
            ModelFile::Float { .. } => VERSION_F64,
            ModelFile::Quantized(_) => VERSION_INT8,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            ModelFile::Float { config, .. } => config,
            ModelFile::Quantized(q) => &q.config,
        }
    }
}

fn write_header<W: Write>(w: &mut W, version: u32, tag: Option<u8>, cfg: &ModelConfig) -> Result<()> {
    let json = serde_json::to_vec(cfg)?;
    let len = u32::try_from(json.len()).map_err(|_| Error::Format("config too long".into()))?;
    w.write_all(MAGIC)?;
    w.write_all(&version.to_le_bytes())?;
    if let Some(t) = tag {
        w.write_all(&[t])?;
    }
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

pub fn write_model<W: Write>(w: &mut W, cfg: &ModelConfig, p: &ParamSet<f64>) -> Result<()> {
    write_header(w, VERSION_F64, None, cfg)?;
    for (_, m) in p.tensors() {
        let mut buf = Vec::with_capacity(m.len() * 8);
        for x in m.as_slice() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn write_quantized<W: Write>(w: &mut W, q: &QuantizedModel) -> Result<()> {
    write_header(w, VERSION_INT8, Some(ELEM_INT8), &q.config)?;
    for t in &q.tensors {
        w.write_all(&t.scale.to_le_bytes())?;
        let bytes: Vec<u8> = t.values.iter().map(|&v| v as u8).collect();
        w.write_all(&bytes)?;
    }
    Ok(())
}

pub fn write_file<W: Write>(w: &mut W, file: &ModelFile) -> Result<()> {
    match file {
        ModelFile::Float { config, params } => write_model(w, config, params),
        ModelFile::Quantized(q) => write_quantized(w, q),
    }
}

fn read_exact<R: Read>(r: &mut R, n: usize, what: &str) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated while reading {what}")),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let b = read_exact(r, 4, what)?;
    Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
}

fn read_f64<R: Read>(r: &mut R, what: &str) -> Result<f64> {
    let b = read_exact(r, 8, what)?;
    Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
}

pub fn read_file<R: Read>(r: &mut R) -> Result<ModelFile> {
    let magic = read_exact(r, 4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected \"RETF\"")));
    }
    let version = read_u32(r, "version")?;
    let tag = match version {
        VERSION_F64 => None,
        VERSION_INT8 => Some(read_exact(r, 1, "element tag")?[0]),
        v => return Err(Error::Format(format!("unsupported version {v}"))),
    };
    if let Some(t) = tag {
        if t != ELEM_INT8 {
            return Err(Error::Format(format!("unknown element tag {t}")));
        }
    }
    let len = read_u32(r, "config length")? as usize;
    let json = read_exact(r, len, "config")?;
    let config: ModelConfig = serde_json::from_slice(&json)?;
    config.validate()?;

    let specs = tensor_specs(&config);
    let file = if version == VERSION_F64 {
        let mut tensors = Vec::with_capacity(specs.len());
        for s in &specs {
            let raw = read_exact(r, s.len() * 8, &s.name)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push(Matrix::from_vec(s.rows, s.cols, data)?);
        }
        let params = ParamSet::from_tensors(&config, tensors)?;
        ModelFile::Float { config, params }
    } else {
        let mut tensors = Vec::with_capacity(specs.len());
        for s in &specs {
            let scale = read_f64(r, &s.name)?;
            let raw = read_exact(r, s.len(), &s.name)?;
            let values = raw.into_iter().map(|b| b as i8).collect();
            tensors.push(QuantizedTensor::from_parts(s.rows, s.cols, values, scale)?);
        }
        ModelFile::Quantized(QuantizedModel { config, tensors })
    };
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    Ok(file)
}

pub fn save(path: &std::path::Path, file: &ModelFile) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_file(&mut w, file)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &std::path::Path) -> Result<ModelFile> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    read_file(&mut r)
}

/// Size in bytes of the header preceding the payload.
pub fn header_len(file: &ModelFile) -> Result<usize> {
    let json = serde_json::to_vec(file.config())?;
    let tag = usize::from(file.version() == VERSION_INT8);
    Ok(4 + 4 + tag + 4 + json.len())
}
