use std::path::Path;

use num_traits::NumCast;

use crate::error::{Error, Result};
use crate::scalar::{DType, Real};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"RFK1";

/// One named tensor in the `RFK1` container.
///
/// Layout: magic `RFK1`, dtype code `u8`, rank `u8`, `rank × u32` extents,
/// `u16` name length, UTF-8 name, then the row-major little-endian payload.
/// Files may hold several records back to back.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorRecord {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
    payload: Vec<u8>,
}

fn format_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format { offset: offset as u64, reason: reason.into() }
}

impl TensorRecord {
    pub fn from_tensor<T: Real>(name: impl Into<String>, tensor: &Tensor<T>) -> Result<Self> {
        let name = name.into();
        if name.len() > u16::MAX as usize {
            return Err(Error::config(format!("record name of {} bytes is too long", name.len())));
        }
        if tensor.shape().len() > u8::MAX as usize || tensor.shape().iter().any(|&e| e > u32::MAX as usize) {
            return Err(Error::config(format!("shape {:?} does not fit the record header", tensor.shape())));
        }
        let mut payload = Vec::new();
        T::to_le_bytes_vec(tensor.data(), &mut payload);
        Ok(Self { name, dtype: T::DTYPE, shape: tensor.shape().to_vec(), payload })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Decodes the payload; the stored dtype must match `T`.
    pub fn to_tensor<T: Real>(&self) -> Result<Tensor<T>> {
        if self.dtype != T::DTYPE {
            return Err(format_err(4, format!("record {:?} holds {:?}, requested {:?}", self.name, self.dtype, T::DTYPE)));
        }
        let data: Vec<T> = match self.dtype {
            DType::F32 => self
                .payload
                .chunks_exact(4)
                .map(|b| <T as NumCast>::from(f32::from_le_bytes(b.try_into().unwrap())).unwrap())
                .collect(),
            DType::F64 => self
                .payload
                .chunks_exact(8)
                .map(|b| <T as NumCast>::from(f64::from_le_bytes(b.try_into().unwrap())).unwrap())
                .collect(),
        };
        Tensor::new(self.shape.clone(), data)
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.push(self.dtype.code());
        out.push(self.shape.len() as u8);
        for &e in &self.shape {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.name.len() as u16).to_le_bytes());
        out.extend_from_slice(self.name.as_bytes());
        out.extend_from_slice(&self.payload);
    }

    /// Decodes one record starting at `offset`; returns it with the offset
    /// just past its payload.
    pub fn decode(bytes: &[u8], offset: usize) -> Result<(Self, usize)> {
        let mut pos = offset;
        let mut take = |n: usize, what: &str| -> Result<&[u8]> {
            if bytes.len() - pos < n {
                return Err(format_err(pos, format!("truncated {what}: need {n} bytes, {} left", bytes.len() - pos)));
            }
            let s = &bytes[pos..pos + n];
            pos += n;
            Ok(s)
        };
        let magic = take(4, "magic")?;
        if magic != MAGIC {
            return Err(format_err(offset, format!("bad magic {magic:?}")));
        }
        let code = take(1, "dtype")?[0];
        let dtype = DType::from_code(code).ok_or_else(|| format_err(offset + 4, format!("unknown dtype code {code}")))?;
        let rank = take(1, "rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for i in 0..rank {
            let e = u32::from_le_bytes(take(4, "extent")?.try_into().unwrap()) as usize;
            if e == 0 {
                return Err(format_err(offset + 6 + 4 * i, "zero extent"));
            }
            shape.push(e);
        }
        let name_len = u16::from_le_bytes(take(2, "name length")?.try_into().unwrap()) as usize;
        let name_at = offset + 8 + 4 * rank;
        let name = std::str::from_utf8(take(name_len, "name")?)
            .map_err(|e| format_err(name_at, format!("name is not UTF-8: {e}")))?
            .to_string();
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .and_then(|n| n.checked_mul(dtype.size()))
            .ok_or_else(|| format_err(offset + 6, format!("extents {shape:?} overflow")))?;
        let payload = take(count, "payload")?.to_vec();
        Ok((Self { name, dtype, shape, payload }, pos))
    }
}

pub fn encode_records(records: &[TensorRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    records.iter().for_each(|r| r.encode(&mut out));
    out
}

pub fn decode_records(bytes: &[u8]) -> Result<Vec<TensorRecord>> {
    let mut records = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let (r, next) = TensorRecord::decode(bytes, pos)?;
        records.push(r);
        pos = next;
    }
    Ok(records)
}

pub fn write_records(path: &Path, records: &[TensorRecord]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode_records(records)).map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<TensorRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_records(&bytes)
}

pub fn save_record(path: &Path, record: &TensorRecord) -> Result<()> {
    write_records(path, std::slice::from_ref(record))
}

/// The record called `name` in the file at `path`.
pub fn load_record(path: &Path, name: &str) -> Result<TensorRecord> {
    read_records(path)?
        .into_iter()
        .find(|r| r.name == name)
        .ok_or_else(|| Error::config(format!("{}: no record named {name:?}", path.display())))
}
