//! Portable tensor files (`.ptf`).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SPCL" | version: u32 = 1 | dtype: u32 | ndim: u32 | ndim x u32 extents | payload
//! ```
//!
//! The payload is the row-major (last index fastest) element buffer. Dtype
//! code 0 is `f32`, code 1 is `u16`. Label maps use `u16` with `0xFFFF` as
//! the ignore sentinel.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SPCL";
pub const VERSION: u32 = 1;

/// Element type code stored in the header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    U16 = 1,
}

impl DType {
    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::U16),
            other => Err(Error::UnknownDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::U16 => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub enum PtfData {
    F32(Vec<f32>),
    U16(Vec<u16>),
}

impl PtfData {
    pub fn len(&self) -> usize {
        match self {
            PtfData::F32(v) => v.len(),
            PtfData::U16(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            PtfData::F32(_) => DType::F32,
            PtfData::U16(_) => DType::U16,
        }
    }
}

/// A dense tensor with its extents. Equality is bit-exact on the payload.
#[derive(Debug, Clone)]
pub struct PtfTensor {
    dims: Vec<usize>,
    data: PtfData,
}

impl PartialEq for PtfTensor {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && match (&self.data, &other.data) {
                (PtfData::F32(a), PtfData::F32(b)) => {
                    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
                }
                (PtfData::U16(a), PtfData::U16(b)) => a == b,
                _ => false,
            }
    }
}

impl PtfTensor {
    pub fn new(dims: Vec<usize>, data: PtfData) -> Result<Self> {
        let count = element_count(&dims)?;
        if count != data.len() {
            return Err(Error::shape(format!(
                "dims {:?} describe {} elements but buffer holds {}",
                dims,
                count,
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_f32(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::new(dims, PtfData::F32(data))
    }

    pub fn from_u16(dims: Vec<usize>, data: Vec<u16>) -> Result<Self> {
        Self::new(dims, PtfData::U16(data))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &PtfData {
        &self.data
    }

    pub fn from_array_f32<D: ndarray::Dimension>(arr: &ndarray::Array<f32, D>) -> Self {
        let dims = arr.shape().to_vec();
        let data = arr.iter().copied().collect();
        Self {
            dims,
            data: PtfData::F32(data),
        }
    }

    pub fn from_array_u16<D: ndarray::Dimension>(arr: &ndarray::Array<u16, D>) -> Self {
        let dims = arr.shape().to_vec();
        let data = arr.iter().copied().collect();
        Self {
            dims,
            data: PtfData::U16(data),
        }
    }

    pub fn into_array_f32(self) -> Result<ArrayD<f32>> {
        match self.data {
            PtfData::F32(v) => ArrayD::from_shape_vec(IxDyn(&self.dims), v)
                .map_err(|e| Error::shape(e.to_string())),
            PtfData::U16(_) => Err(Error::invalid("expected an f32 tensor, found u16")),
        }
    }

    pub fn into_array_u16(self) -> Result<ArrayD<u16>> {
        match self.data {
            PtfData::U16(v) => ArrayD::from_shape_vec(IxDyn(&self.dims), v)
                .map_err(|e| Error::shape(e.to_string())),
            PtfData::F32(_) => Err(Error::invalid("expected a u16 tensor, found f32")),
        }
    }
}

fn element_count(dims: &[usize]) -> Result<usize> {
    dims.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d)
            .ok_or_else(|| Error::shape(format!("element count of {dims:?} overflows")))
    })
}

/// Serializes `tensor` to `sink`. Output bytes depend only on the tensor.
pub fn write_ptf<W: Write>(tensor: &PtfTensor, mut sink: W) -> Result<()> {
    let mut header = Vec::with_capacity(16 + 4 * tensor.dims.len());
    header.extend_from_slice(&MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.extend_from_slice(&tensor.dtype().code().to_le_bytes());
    let ndim = u32::try_from(tensor.dims.len()).map_err(|_| Error::ExtentOverflow(tensor.dims.len()))?;
    header.extend_from_slice(&ndim.to_le_bytes());
    for &d in &tensor.dims {
        let d32 = u32::try_from(d).map_err(|_| Error::ExtentOverflow(d))?;
        header.extend_from_slice(&d32.to_le_bytes());
    }
    sink.write_all(&header)?;

    let mut payload = Vec::with_capacity(tensor.data.len() * tensor.dtype().size());
    match &tensor.data {
        PtfData::F32(v) => v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes())),
        PtfData::U16(v) => v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes())),
    }
    sink.write_all(&payload)?;
    sink.flush()?;
    Ok(())
}

fn read_u32<R: Read>(source: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    source.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Parses one tensor from `source`. Bytes after the payload are left unread.
pub fn read_ptf<R: Read>(mut source: R) -> Result<PtfTensor> {
    let mut magic = [0u8; 4];
    source.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = read_u32(&mut source)?;
    if version != VERSION {
        return Err(Error::UnknownVersion(version));
    }
    let dtype = DType::from_code(read_u32(&mut source)?)?;
    let ndim = read_u32(&mut source)? as usize;
    let dims = (0..ndim)
        .map(|_| read_u32(&mut source).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;

    let count = element_count(&dims)?;
    let expected = count
        .checked_mul(dtype.size())
        .ok_or_else(|| Error::shape("payload size overflows"))?;
    let mut payload = Vec::with_capacity(expected.min(1 << 28));
    source.by_ref().take(expected as u64).read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }

    let data = match dtype {
        DType::F32 => PtfData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ),
        DType::U16 => PtfData::U16(
            payload
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect(),
        ),
    };
    Ok(PtfTensor { dims, data })
}

pub fn write_ptf_file(path: impl AsRef<Path>, tensor: &PtfTensor) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    write_ptf(tensor, BufWriter::new(file))
}

pub fn read_ptf_file(path: impl AsRef<Path>) -> Result<PtfTensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_ptf(BufReader::new(file))
}
