//! Binary checkpoint container: config key/value pairs plus named tensors
//! with shape headers, round-tripping bit-exactly.
//!
//! Layout (all integers little-endian):
//! `steerage-checkpoint v1\n`, u32 config count, then per entry
//! (u16 key len, key bytes, u32 value len, value bytes); u32 tensor count,
//! then per tensor (u16 name len, name bytes, u8 rank, u32 per dim,
//! f64 per element).

use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8] = b"steerage-checkpoint v1\n";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub config: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_config(&mut self, key: impl Into<String>, value: impl ToString) {
        self.config.push((key.into(), value.to_string()));
    }

    pub fn add_tensor(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Config value parsed to `T`; missing key or parse failure → header
    /// error so a stale file never silently falls back to a default.
    pub fn parse_config<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.config_value(key).ok_or_else(|| Error::Header {
            path: "<checkpoint>".into(),
            msg: format!("missing config key `{key}`"),
        })?;
        raw.parse().map_err(|_| Error::Header {
            path: "<checkpoint>".into(),
            msg: format!("config key `{key}`: cannot parse `{raw}`"),
        })
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::from(MAGIC);
        out.extend_from_slice(&(self.config.len() as u32).to_le_bytes());
        for (k, v) in &self.config {
            out.extend_from_slice(&(k.len() as u16).to_le_bytes());
            out.extend_from_slice(k.as_bytes());
            out.extend_from_slice(&(v.len() as u32).to_le_bytes());
            out.extend_from_slice(v.as_bytes());
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = Reader {
            bytes,
            pos: 0,
            origin,
        };
        let magic = r.take(MAGIC.len())?;
        if magic != MAGIC {
            return Err(r.err("not a checkpoint file (bad magic)"));
        }
        let n_config = r.u32()? as usize;
        let mut config = Vec::with_capacity(n_config);
        for _ in 0..n_config {
            let klen = r.u16()? as usize;
            let key = r.string(klen)?;
            let vlen = r.u32()? as usize;
            let value = r.string(vlen)?;
            config.push((key, value));
        }
        let n_tensors = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let nlen = r.u16()? as usize;
            let name = r.string(nlen)?;
            let rank = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let len: usize = shape.iter().product();
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                data.push(r.f64()?);
            }
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(r.err("trailing bytes after the last tensor"));
        }
        Ok(Self { config, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl Reader<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Header {
            path: self.origin.to_path_buf(),
            msg: format!("offset {}: {}", self.pos, msg.into()),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err(format!(
                "truncated: wanted {n} bytes, {} remain",
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self, n: usize) -> Result<String> {
        let bytes = self.take(n)?.to_vec();
        String::from_utf8(bytes).map_err(|_| self.err("string is not UTF-8"))
    }
}
