//! Self-describing binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  "DGADCKPT"
//! version   u32      currently 1
//! seed      u64
//! n_hyper   u32      then n_hyper × (key: str, value: str)
//! n_tensor  u32      then n_tensor × tensor
//!
//! str       u32 byte length, UTF-8 bytes
//! tensor    name: str, kind: u8 (0 = parameter, 1 = buffer), dtype: u8 (1 = f64),
//!           ndim: u32, dims: ndim × u64, payload: f64 × prod(dims)
//!           parameters continue with step: u64, m payload, v payload
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::params::{Param, ParamStore};
use crate::nn::tensor::Matrix;

pub const MAGIC: &[u8; 8] = b"DGADCKPT";
pub const FORMAT_VERSION: u32 = 1;

const KIND_PARAM: u8 = 0;
const KIND_BUFFER: u8 = 1;
const DTYPE_F64: u8 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub seed: u64,
    pub hyper: BTreeMap<String, String>,
    pub params: ParamStore,
    /// Non-trainable tensors (standardisation statistics, conditioning
    /// vectors, histories).
    pub buffers: BTreeMap<String, Matrix>,
}

impl Checkpoint {
    pub fn new(params: ParamStore) -> Self {
        Checkpoint {
            seed: params.seed(),
            hyper: BTreeMap::new(),
            params,
            buffers: BTreeMap::new(),
        }
    }

    pub fn set_hyper(&mut self, key: &str, value: impl ToString) {
        self.hyper.insert(key.to_string(), value.to_string());
    }

    pub fn hyper<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .hyper
            .get(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing hyperparameter `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::Checkpoint(format!("bad value `{raw}` for `{key}`")))
    }

    pub fn buffer(&self, name: &str) -> Result<&Matrix> {
        self.buffers
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing buffer `{name}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());

        out.extend_from_slice(&(self.hyper.len() as u32).to_le_bytes());
        for (k, v) in &self.hyper {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }

        let n_tensors = self.params.len() + self.buffers.len();
        out.extend_from_slice(&(n_tensors as u32).to_le_bytes());
        for (name, p) in self.params.iter() {
            put_tensor_header(&mut out, name, KIND_PARAM, &p.value);
            put_payload(&mut out, &p.value);
            out.extend_from_slice(&p.step.to_le_bytes());
            put_payload(&mut out, &p.m);
            put_payload(&mut out, &p.v);
        }
        for (name, m) in &self.buffers {
            put_tensor_header(&mut out, name, KIND_BUFFER, m);
            put_payload(&mut out, m);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let seed = r.u64()?;

        let mut hyper = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            hyper.insert(k, v);
        }

        let mut params = ParamStore::new(seed);
        let mut buffers = BTreeMap::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let kind = r.u8()?;
            let dtype = r.u8()?;
            if dtype != DTYPE_F64 {
                return Err(Error::Checkpoint(format!("`{name}`: unsupported dtype {dtype}")));
            }
            let ndim = r.u32()?;
            if ndim != 2 {
                return Err(Error::Checkpoint(format!("`{name}`: expected 2 dims, got {ndim}")));
            }
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let value = r.payload(rows, cols)?;
            match kind {
                KIND_PARAM => {
                    let step = r.u64()?;
                    let m = r.payload(rows, cols)?;
                    let v = r.payload(rows, cols)?;
                    params.insert_param(name, Param { value, m, v, step });
                }
                KIND_BUFFER => {
                    buffers.insert(name, value);
                }
                other => {
                    return Err(Error::Checkpoint(format!("`{name}`: unknown kind {other}")))
                }
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            seed,
            hyper,
            params,
            buffers,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_tensor_header(out: &mut Vec<u8>, name: &str, kind: u8, m: &Matrix) {
    put_str(out, name);
    out.push(kind);
    out.push(DTYPE_F64);
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
}

fn put_payload(out: &mut Vec<u8>, m: &Matrix) {
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
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
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid utf-8".into()))
    }

    fn payload(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint("tensor too large".into()))?;
        let raw = self.take(count.checked_mul(8).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Matrix::from_vec(rows, cols, data)
    }
}
