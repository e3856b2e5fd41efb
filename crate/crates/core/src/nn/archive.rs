//! `AXTF` named-tensor archive.
//!
//! Layout (little-endian): magic `AXTF`, u32 version (1), u32 tensor count,
//! then per tensor: u16 name length, UTF-8 name, dtype byte (0x01 = binary32),
//! rank byte, u32 extent per axis, row-major binary32 data.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{checked_numel, Tensor};

pub const MAGIC: [u8; 4] = *b"AXTF";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0x01;

const KIND: &str = "AXTF archive";

/// Ordered collection of uniquely named tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorArchive {
    entries: Vec<(String, Tensor)>,
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor; names must be unique and fit a u16 length prefix.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if name.len() > u16::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "tensor name too long ({} bytes)",
                name.len()
            )));
        }
        if tensor.rank() > u8::MAX as usize || tensor.dims().iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::InvalidConfig(format!("tensor `{name}` dims not encodable")));
        }
        if self.get(&name).is_some() {
            return Err(Error::InvalidConfig(format!("duplicate tensor name `{name}`")));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::format(KIND, format!("missing tensor `{name}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn into_entries(self) -> Vec<(String, Tensor)> {
        self.entries
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload: usize = self
            .entries
            .iter()
            .map(|(n, t)| 2 + n.len() + 2 + 4 * t.rank() + 4 * t.len())
            .sum();
        let mut out = Vec::with_capacity(12 + payload);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(DTYPE_F32);
            out.push(t.rank() as u8);
            for &d in t.dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::format(KIND, "bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(KIND, format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut archive = TensorArchive::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::format(KIND, "tensor name is not UTF-8"))?
                .to_owned();
            let dtype = r.u8()?;
            if dtype != DTYPE_F32 {
                return Err(Error::format(
                    KIND,
                    format!("tensor `{name}`: unknown dtype {dtype:#04x}"),
                ));
            }
            let rank = r.u8()? as usize;
            let dims = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel =
                checked_numel(&dims).map_err(|_| Error::format(KIND, format!("tensor `{name}`: extents overflow")))?;
            let byte_len = numel
                .checked_mul(4)
                .ok_or_else(|| Error::format(KIND, format!("tensor `{name}`: extents overflow")))?;
            let raw = r.take(byte_len)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if archive.get(&name).is_some() {
                return Err(Error::format(KIND, format!("duplicate tensor `{name}`")));
            }
            archive.entries.push((name, Tensor::new(dims, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::format(KIND, format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(archive)
    }

    /// Writes atomically: a sibling temp file is renamed over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(KIND, format!("truncated at byte {} (wanted {n} more)", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
