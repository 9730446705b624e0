//! Binary checkpoints: magic, version, string metadata, named tensors.
//!
//! Layout (all integers little-endian):
//! `"IBCMPS1"` · `u32` version · `u32` #metadata · (`str` key, `str` value)* ·
//! `u32` #tensors · (`str` name, `u32` rank, `str` label × rank, `u64` dim × rank,
//! `f64` re, `f64` im per element)*, where `str` is a `u32` byte length plus
//! UTF-8 bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ibc_core::{DenseTensor, C64};

use crate::CliError;

pub const MAGIC: &[u8; 7] = b"IBCMPS1";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub metadata: BTreeMap<String, String>,
    pub tensors: Vec<(String, DenseTensor)>,
}

impl Checkpoint {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.metadata.insert(key.to_string(), value.to_string());
    }

    pub fn push(&mut self, name: &str, t: DenseTensor) {
        self.tensors.push((name.to_string(), t));
    }

    pub fn meta(&self, key: &str) -> Result<&str, CliError> {
        self.metadata
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CliError::Checkpoint(format!("missing metadata '{key}'")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.meta(key)?
            .parse()
            .map_err(|_| CliError::Checkpoint(format!("malformed metadata '{key}'")))
    }

    pub fn tensor(&self, name: &str) -> Result<&DenseTensor, CliError> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| CliError::Checkpoint(format!("missing tensor '{name}'")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            out.extend_from_slice(&(t.labels().len() as u32).to_le_bytes());
            for l in t.labels() {
                put_str(&mut out, l);
            }
            for d in t.dims() {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for z in t.data() {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CliError> {
        let mut r = bytes;
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(CliError::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = get_u32(&mut r)?;
        if version != VERSION {
            return Err(CliError::Checkpoint(format!("unsupported version {version}")));
        }
        let mut cp = Checkpoint::default();
        for _ in 0..get_u32(&mut r)? {
            let k = get_str(&mut r)?;
            let v = get_str(&mut r)?;
            cp.metadata.insert(k, v);
        }
        for _ in 0..get_u32(&mut r)? {
            let name = get_str(&mut r)?;
            let rank = get_u32(&mut r)? as usize;
            let labels = (0..rank).map(|_| get_str(&mut r)).collect::<Result<Vec<_>, _>>()?;
            let dims = (0..rank)
                .map(|_| get_u64(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let n: usize = dims.iter().product();
            if r.len() < n * 16 {
                return Err(truncated(()));
            }
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let re = get_f64(&mut r)?;
                let im = get_f64(&mut r)?;
                data.push(C64::new(re, im));
            }
            let t = DenseTensor::from_parts(labels, dims, data)
                .map_err(|e| CliError::Checkpoint(format!("tensor '{name}': {e}")))?;
            cp.tensors.push((name, t));
        }
        if !r.is_empty() {
            return Err(CliError::Checkpoint("trailing bytes".into()));
        }
        Ok(cp)
    }

    /// Write via a temporary file in the same directory and rename.
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::MissingCheckpoint(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn truncated<E>(_: E) -> CliError {
    CliError::Checkpoint("truncated file".into())
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn get_u32(r: &mut &[u8]) -> Result<u32, CliError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64(r: &mut &[u8]) -> Result<u64, CliError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64(r: &mut &[u8]) -> Result<f64, CliError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(f64::from_le_bytes(b))
}

fn get_str(r: &mut &[u8]) -> Result<String, CliError> {
    let n = get_u32(r)? as usize;
    if r.len() < n {
        return Err(truncated(()));
    }
    let (s, rest) = r.split_at(n);
    *r = rest;
    String::from_utf8(s.to_vec()).map_err(|_| CliError::Checkpoint("invalid UTF-8".into()))
}

/// Real vector stored as a rank-1 tensor.
pub fn vector_tensor(label: &str, v: &[f64]) -> DenseTensor {
    DenseTensor::new(&[label], &[v.len()], v.iter().map(|x| C64::new(*x, 0.0)).collect())
        .expect("rank-1 tensor")
}

pub fn tensor_vector(t: &DenseTensor) -> Vec<f64> {
    t.data().iter().map(|z| z.re).collect()
}
