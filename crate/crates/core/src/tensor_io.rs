//! Dense 3-D tensor files.
//!
//! 16-byte header: magic `RCT1`, three `u16` dims (outermost first), a `u16`
//! dtype code (0 = little-endian `f32`, 1 = `u8`) and 4 reserved zero bytes.
//! Values follow with the last dimension fastest.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const TENSOR_MAGIC: [u8; 4] = *b"RCT1";
pub const TENSOR_HEADER_BYTES: usize = 16;

#[derive(Debug, Error)]
pub enum TensorIoError {
    #[error("bad tensor magic {0:?}")]
    Magic([u8; 4]),
    #[error("unknown dtype code {0}")]
    DType(u16),
    #[error("dimension {0} does not fit in u16")]
    Dim(usize),
    #[error("expected {expected} values for dims {dims:?}, got {got}")]
    Length { dims: [usize; 3], expected: usize, got: usize },
    #[error("expected {expected:?} tensor, found {found:?}")]
    WrongDType { expected: DType, found: DType },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    U8 = 1,
}

impl DType {
    fn from_code(code: u16) -> Result<Self, TensorIoError> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::U8),
            other => Err(TensorIoError::DType(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dims: [usize; 3],
    pub data: TensorData,
}

impl TensorFile {
    pub fn f32(dims: [usize; 3], values: Vec<f32>) -> Result<Self, TensorIoError> {
        check_len(dims, values.len())?;
        Ok(Self { dims, data: TensorData::F32(values) })
    }

    pub fn u8(dims: [usize; 3], values: Vec<u8>) -> Result<Self, TensorIoError> {
        check_len(dims, values.len())?;
        Ok(Self { dims, data: TensorData::U8(values) })
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::U8(_) => DType::U8,
        }
    }

    pub fn into_f32(self) -> Result<Vec<f32>, TensorIoError> {
        match self.data {
            TensorData::F32(v) => Ok(v),
            TensorData::U8(_) => Err(TensorIoError::WrongDType { expected: DType::F32, found: DType::U8 }),
        }
    }

    pub fn into_u8(self) -> Result<Vec<u8>, TensorIoError> {
        match self.data {
            TensorData::U8(v) => Ok(v),
            TensorData::F32(_) => Err(TensorIoError::WrongDType { expected: DType::U8, found: DType::F32 }),
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), TensorIoError> {
        let mut header = [0u8; TENSOR_HEADER_BYTES];
        header[..4].copy_from_slice(&TENSOR_MAGIC);
        for (i, &d) in self.dims.iter().enumerate() {
            let d = u16::try_from(d).map_err(|_| TensorIoError::Dim(d))?;
            header[4 + 2 * i..6 + 2 * i].copy_from_slice(&d.to_le_bytes());
        }
        header[10..12].copy_from_slice(&(self.dtype() as u16).to_le_bytes());
        w.write_all(&header)?;
        match &self.data {
            TensorData::F32(v) => {
                let mut buf = Vec::with_capacity(v.len() * 4);
                for x in v {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
                w.write_all(&buf)?;
            }
            TensorData::U8(v) => w.write_all(v)?,
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, TensorIoError> {
        let mut header = [0u8; TENSOR_HEADER_BYTES];
        r.read_exact(&mut header)?;
        let magic: [u8; 4] = header[..4].try_into().unwrap();
        if magic != TENSOR_MAGIC {
            return Err(TensorIoError::Magic(magic));
        }
        let dim = |i: usize| u16::from_le_bytes([header[4 + 2 * i], header[5 + 2 * i]]) as usize;
        let dims = [dim(0), dim(1), dim(2)];
        let dtype = DType::from_code(u16::from_le_bytes([header[10], header[11]]))?;
        let n = dims.iter().product::<usize>();
        let data = match dtype {
            DType::F32 => {
                let mut buf = vec![0u8; n * 4];
                r.read_exact(&mut buf)?;
                TensorData::F32(buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
            }
            DType::U8 => {
                let mut buf = vec![0u8; n];
                r.read_exact(&mut buf)?;
                TensorData::U8(buf)
            }
        };
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(TensorIoError::Length { dims, expected: n, got: n + 1 });
        }
        Ok(Self { dims, data })
    }
}

fn check_len(dims: [usize; 3], got: usize) -> Result<(), TensorIoError> {
    let expected = dims.iter().product();
    if got != expected {
        return Err(TensorIoError::Length { dims, expected, got });
    }
    Ok(())
}
