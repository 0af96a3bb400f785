//! Versioned binary checkpoint container.
//!
//! Layout: an 8-byte magic, a JSON header (kind + config + schedule +
//! training counters), then named f32 tensors as little-endian bytes.
//! Weight round-trips are bit-exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SBCKPT01";

/// Header metadata stored ahead of the weight tensors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContainerHeader<C> {
    /// "score-net" or "victim".
    pub kind: String,
    pub config: C,
    pub train_steps: u64,
    /// Mean loss over the final recorded window, if any.
    pub final_loss: Option<f64>,
}

pub struct Container<C> {
    pub header: ContainerHeader<C>,
    pub tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

impl<C: Serialize + DeserializeOwned> Container<C> {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(MAGIC)?;
        let header = serde_json::to_vec(&self.header)?;
        out.write_all(&(header.len() as u32).to_le_bytes())?;
        out.write_all(&header)?;
        out.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, (shape, data)) in &self.tensors {
            let name_bytes = name.as_bytes();
            out.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
            out.write_all(name_bytes)?;
            out.write_all(&(shape.len() as u8).to_le_bytes())?;
            for &d in shape {
                out.write_all(&(d as u32).to_le_bytes())?;
            }
            out.write_all(&(data.len() as u64).to_le_bytes())?;
            for &v in data {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut input = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "bad magic in {}",
                path.display()
            )));
        }
        let header_len = read_u32(&mut input)? as usize;
        let mut header_bytes = vec![0u8; header_len];
        input.read_exact(&mut header_bytes)?;
        let header: ContainerHeader<C> = serde_json::from_slice(&header_bytes)?;
        let count = read_u32(&mut input)? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = read_u16(&mut input)? as usize;
            let mut name_bytes = vec![0u8; name_len];
            input.read_exact(&mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|e| Error::Checkpoint(format!("bad tensor name: {e}")))?;
            let ndim = read_u8(&mut input)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u32(&mut input)? as usize);
            }
            let len = read_u64(&mut input)? as usize;
            let expected: usize = shape.iter().product();
            if len != expected {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` length {len} does not match shape {shape:?}"
                )));
            }
            let mut bytes = vec![0u8; len * 4];
            input.read_exact(&mut bytes)?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.insert(name, (shape, data));
        }
        Ok(Self { header, tensors })
    }

    /// Peek at the header without reading weights.
    pub fn load_header(path: &Path) -> Result<ContainerHeader<C>> {
        let mut input = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "bad magic in {}",
                path.display()
            )));
        }
        let header_len = read_u32(&mut input)? as usize;
        let mut header_bytes = vec![0u8; header_len];
        input.read_exact(&mut header_bytes)?;
        Ok(serde_json::from_slice(&header_bytes)?)
    }
}

fn read_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
