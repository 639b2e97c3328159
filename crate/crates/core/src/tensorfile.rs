//! Raw `f32` tensor files.
//!
//! Layout (all little-endian):
//!
//! | bytes        | content                         |
//! |--------------|---------------------------------|
//! | 0..4         | magic `PMTK`                    |
//! | 4            | version, `0x01`                 |
//! | 5            | rank, 1..=4                     |
//! | 6..6+4·rank  | dims, `u32` each                |
//! | rest         | `product(dims)` × `f32`         |

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::matrix::Matrix;

pub const MAGIC: &[u8; 4] = b"PMTK";
pub const VERSION: u8 = 0x01;
pub const MAX_RANK: usize = 4;
const HEADER_LEN: usize = 6;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("not a tensor file")]
    NotATensorFile,

    #[error("unsupported tensor file version {0}")]
    Version(u8),

    #[error("unsupported rank {0}, expected 1..=4")]
    Rank(usize),

    #[error("length mismatch: expected {expected} bytes, found {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("non-finite value at byte offset {offset}")]
    NonFinite { offset: usize },

    #[error("dimension {0} does not fit in u32")]
    DimTooLarge(usize),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Dense `f32` array of rank 1 to 4.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, FormatError> {
        if dims.is_empty() || dims.len() > MAX_RANK {
            return Err(FormatError::Rank(dims.len()));
        }
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(FormatError::LengthMismatch {
                expected: expected * 4,
                actual: data.len() * 4,
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::NonFinite {
                offset: HEADER_LEN + 4 * dims.len() + 4 * i,
            });
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Encodes to the on-disk byte layout.
    pub fn to_bytes(&self) -> Result<Vec<u8>, FormatError> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            let d32 = u32::try_from(d).map_err(|_| FormatError::DimTooLarge(d))?;
            out.extend_from_slice(&d32.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    /// Decodes and validates the on-disk byte layout.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.len() < HEADER_LEN {
            return Err(FormatError::LengthMismatch {
                expected: HEADER_LEN,
                actual: bytes.len(),
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(FormatError::NotATensorFile);
        }
        if bytes[4] != VERSION {
            return Err(FormatError::Version(bytes[4]));
        }
        let rank = bytes[5] as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(FormatError::Rank(rank));
        }
        let dims_end = HEADER_LEN + 4 * rank;
        if bytes.len() < dims_end {
            return Err(FormatError::LengthMismatch {
                expected: dims_end,
                actual: bytes.len(),
            });
        }
        let dims: Vec<usize> = bytes[HEADER_LEN..dims_end]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect();
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|c| c.checked_mul(4))
            .and_then(|c| c.checked_add(dims_end));
        let expected = count.unwrap_or(usize::MAX);
        if bytes.len() != expected {
            return Err(FormatError::LengthMismatch {
                expected,
                actual: bytes.len(),
            });
        }
        let mut data = Vec::with_capacity((expected - dims_end) / 4);
        for (i, c) in bytes[dims_end..].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if !v.is_finite() {
                return Err(FormatError::NonFinite {
                    offset: dims_end + 4 * i,
                });
            }
            data.push(v);
        }
        Ok(Self { dims, data })
    }
}

impl From<&Matrix> for Tensor {
    fn from(m: &Matrix) -> Self {
        Self {
            dims: vec![m.rows(), m.cols()],
            data: m.as_slice().to_vec(),
        }
    }
}

impl TryFrom<Tensor> for Matrix {
    type Error = crate::Error;

    fn try_from(t: Tensor) -> Result<Self, Self::Error> {
        match *t.dims() {
            [rows, cols] => Matrix::new(rows, cols, t.into_data()),
            _ => Err(crate::Error::shape(
                "Tensor -> Matrix",
                format!("expected rank 2, got dims {:?}", t.dims()),
            )),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor, FormatError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    Tensor::from_bytes(&bytes)
}

pub fn write_tensor(tensor: &Tensor, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    write_atomic(path, &tensor.to_bytes()?).map_err(io_err(path))
}

/// Writes `bytes` to a sibling temp file, syncs, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "no file name"))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}
