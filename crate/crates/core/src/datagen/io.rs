//! Binary dataset file.
//!
//! Little-endian, no padding:
//!
//! ```text
//! "DGRN" | version u16 | system u8 | dim u8 | n_points u32 | count u64
//! per sample:
//!   split u8 | converged u8 | residual_norm f64 | family u8 | n_params u8 |
//!   params f64[n_params] | u f64[len] | F f64[len]
//! ```
//!
//! `len` is `n_points` in 1D and `n_points²` in 2D (row-major, `y` outer).
//! Family code 255 with zero parameters marks a sample without a forcing spec.

use std::fs;
use std::path::Path;

use super::dataset::{Dataset, Split};
use super::forcing::ForcingSpec;
use super::grid::Grid;
use super::newton::SamplePair;
use super::system::{SystemId, SystemSpec};
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"DGRN";
pub const DATASET_VERSION: u16 = 1;
const NO_FAMILY: u8 = 255;

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let len = ds.grid.len();
    let mut out = Vec::with_capacity(24 + ds.len() * (2 * len * 8 + 64));
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.push(ds.system.id() as u8);
    out.push(ds.grid.dim());
    out.extend_from_slice(&(ds.grid.n() as u32).to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    if ds.splits.len() != ds.samples.len() {
        return Err(Error::InvalidInput("split labels do not match sample count".into()));
    }
    for (s, split) in ds.samples.iter().zip(&ds.splits) {
        if s.u.len() != len || s.f.len() != len {
            return Err(Error::Shape(format!("sample vectors must have length {len}")));
        }
        out.push(*split as u8);
        out.push(s.converged as u8);
        out.extend_from_slice(&s.residual_norm.to_le_bytes());
        match &s.forcing {
            Some(f) => {
                let p = f.params();
                out.push(f.family_code());
                out.push(p.len() as u8);
                for v in p {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            None => {
                out.push(NO_FAMILY);
                out.push(0);
            }
        }
        for v in s.u.iter().chain(&s.f) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_dataset(ds)?;
    fs::write(path.as_ref(), bytes).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let bytes = fs::read(path.as_ref()).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes)
}

pub(crate) struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                msg: format!("truncated while reading {what} ({n} bytes needed, {} left)", self.buf.len() - self.pos),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(n * 8, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub(crate) fn bad(&self, at: u64, msg: impl Into<String>) -> Error {
        Error::Format { offset: at, msg: msg.into() }
    }

    pub(crate) fn finished(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut c = Cursor::new(bytes);
    let magic = c.take(4, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(c.bad(0, format!("bad magic {magic:?}, expected \"DGRN\"")));
    }
    let version = c.u16("version")?;
    if version != DATASET_VERSION {
        return Err(Error::Version { found: version, expected: DATASET_VERSION });
    }
    let at = c.offset();
    let sys_id = c.u8("system id")?;
    let system_id = SystemId::from_u8(sys_id).ok_or_else(|| c.bad(at, format!("unknown system id {sys_id}")))?;
    let at = c.offset();
    let dim = c.u8("dim")?;
    let n = c.u32("n_points")? as usize;
    let grid = Grid::new(dim, n).map_err(|e| c.bad(at, e.to_string()))?;
    if system_id.dim() != dim {
        return Err(c.bad(at, format!("system {system_id} is {}D but header says {dim}D", system_id.dim())));
    }
    let count = c.u64("sample count")? as usize;
    let len = grid.len();
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    let mut splits = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let at = c.offset();
        let lbl = c.u8("split label")?;
        let split = Split::from_u8(lbl).ok_or_else(|| c.bad(at, format!("unknown split label {lbl}")))?;
        let converged = c.u8("converged flag")? != 0;
        let residual_norm = c.f64("residual norm")?;
        let at = c.offset();
        let family = c.u8("forcing family")?;
        let n_params = c.u8("parameter count")? as usize;
        let params = c.f64s(n_params, "forcing parameters")?;
        let forcing = if family == NO_FAMILY {
            None
        } else {
            Some(ForcingSpec::from_code(family, &params).map_err(|e| c.bad(at, e.to_string()))?)
        };
        let u = c.f64s(len, "u")?;
        let f = c.f64s(len, "F")?;
        samples.push(SamplePair { u, f, forcing, system: system_id, converged, residual_norm });
        splits.push(split);
    }
    if !c.finished() {
        return Err(c.bad(c.offset(), "trailing bytes after last sample"));
    }
    Ok(Dataset { system: SystemSpec::from_id(system_id), grid, samples, splits })
}
