//! The `QEN1` parameter file.
//!
//! ```text
//! "QEN1"  u32 version  u32 count
//! count x { u32 name_len, name (utf-8), u8 dtype, u32 ndim, ndim x u64 dim, raw LE scalars }
//! u64 FNV-1a of every preceding byte
//! ```
//! All integers are little-endian.

use std::fs;
use std::hash::Hasher;
use std::io;
use std::path::Path;

use fnv::FnvHasher;
use quadenhance_core::models::Parameterized;
use quadenhance_core::{DType, Scalar, Tensor};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"QEN1";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a QEN1 file (magic {0:02x?})")]
    Magic(Vec<u8>),

    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x} (file corrupt or truncated)")]
    Checksum { stored: u64, computed: u64 },

    #[error("unsupported format version {0} (this build reads {VERSION})")]
    Version(u32),

    #[error("malformed record: {0}")]
    Malformed(String),

    #[error("{name}: stored as {found}, model expects {expected}")]
    DType {
        name: String,
        expected: DType,
        found: DType,
    },

    #[error("{name}: stored shape {found:?}, model expects {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("{0}: missing from checkpoint")]
    Missing(String),

    #[error("{0}: not a parameter of the model")]
    Unexpected(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Zero-fill enhancer coefficients absent from the file, so a plain
    /// network's checkpoint loads into its enhanced counterpart.
    pub allow_missing_lambda: bool,
}

fn checksum(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

pub fn encode<T: Scalar>(params: &[(String, &Tensor<T>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(T::DTYPE.tag());
        out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for &dim in t.shape() {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    let sum = checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                CheckpointError::Malformed(format!("{what} runs past the end of the records"))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Checks magic, checksum and version, then splits the records.
pub fn decode(bytes: &[u8]) -> Result<Vec<Record>, CheckpointError> {
    if bytes.len() >= 4 && &bytes[..4] != MAGIC {
        return Err(CheckpointError::Magic(bytes[..4].to_vec()));
    }
    if bytes.len() < 4 + 4 + 4 + 8 {
        return Err(CheckpointError::Checksum {
            stored: 0,
            computed: checksum(bytes),
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    let computed = checksum(body);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }
    let mut cur = Cursor {
        bytes: body,
        pos: 4,
    };
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let count = cur.u32("record count")?;
    let mut records = Vec::new();
    for i in 0..count {
        let len = cur.u32("name length")? as usize;
        let name = String::from_utf8(cur.take(len, "name")?.to_vec())
            .map_err(|_| CheckpointError::Malformed(format!("record {i}: name is not utf-8")))?;
        let tag = cur.take(1, "dtype")?[0];
        let dtype = DType::from_tag(tag).ok_or_else(|| {
            CheckpointError::Malformed(format!("{name}: unknown dtype tag {tag}"))
        })?;
        let ndim = cur.u32("ndim")? as usize;
        let shape = (0..ndim)
            .map(|_| cur.u64("dim").map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(dtype.size()))
            .ok_or_else(|| {
                CheckpointError::Malformed(format!("{name}: shape {shape:?} overflows"))
            })?;
        let bytes = cur.take(count, "tensor data")?.to_vec();
        records.push(Record {
            name,
            dtype,
            shape,
            bytes,
        });
    }
    if cur.pos != body.len() {
        return Err(CheckpointError::Malformed(format!(
            "{} trailing bytes after the last record",
            body.len() - cur.pos
        )));
    }
    Ok(records)
}

/// Writes via a temporary sibling and a rename, so readers never see a
/// partial file.
pub fn save_checkpoint<T: Scalar, M: Parameterized<T>>(
    path: &Path,
    model: &M,
) -> Result<(), CheckpointError> {
    let bytes = encode(&model.parameters());
    let tmp = path.with_extension("qen.tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn is_lambda(name: &str) -> bool {
    name.rsplit('.')
        .next()
        .is_some_and(|last| last.starts_with("lambda"))
}

/// Copies every record into the model parameter of the same name. Names,
/// shapes and dtypes must match exactly, except as relaxed by `options`.
pub fn load_records<T: Scalar, M: Parameterized<T>>(
    records: Vec<Record>,
    model: &mut M,
    options: LoadOptions,
) -> Result<(), CheckpointError> {
    let mut records: Vec<Option<Record>> = records.into_iter().map(Some).collect();
    let mut staged = Vec::new();
    for (name, param) in model.parameters() {
        let found = records
            .iter_mut()
            .find(|r| r.as_ref().is_some_and(|r| r.name == name));
        let Some(record) = found.and_then(Option::take) else {
            if options.allow_missing_lambda && is_lambda(&name) {
                staged.push(Tensor::zeros(param.shape()));
                continue;
            }
            return Err(CheckpointError::Missing(name));
        };
        if record.dtype != T::DTYPE {
            return Err(CheckpointError::DType {
                name,
                expected: T::DTYPE,
                found: record.dtype,
            });
        }
        if record.shape != param.shape() {
            return Err(CheckpointError::Shape {
                name,
                expected: param.shape().to_vec(),
                found: record.shape,
            });
        }
        let data = record
            .bytes
            .chunks(T::DTYPE.size())
            .map(T::read_le)
            .collect();
        let tensor = Tensor::new(record.shape, data)
            .map_err(|e| CheckpointError::Malformed(format!("{name}: {e}")))?;
        staged.push(tensor);
    }
    if let Some(extra) = records.into_iter().flatten().next() {
        return Err(CheckpointError::Unexpected(extra.name));
    }
    for ((_, param), value) in model.parameters_mut().into_iter().zip(staged) {
        *param = value;
    }
    Ok(())
}

pub fn load_checkpoint<T: Scalar, M: Parameterized<T>>(
    path: &Path,
    model: &mut M,
    options: LoadOptions,
) -> Result<(), CheckpointError> {
    let bytes = fs::read(path)?;
    load_records(decode(&bytes)?, model, options)
}
