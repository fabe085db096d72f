//! Binary container for a [`FieldSet`].
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "DSLF"            magic
//! u32               version (1)
//! u32 u32 u32       width, height, stride
//! u32               keypoint-type count (19)
//! u32               tensor count (6)
//! per tensor:
//!   u8              tag (see TensorKind)
//!   u8              ndims
//!   u32 * ndims     dims, outermost first
//!   f32 * prod      data, row-major, x fastest
//! ```
//!
//! Sigma and scale tensors hold natural logarithms. Every tag appears exactly
//! once, in any order. Trailing bytes are rejected.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fields::{FieldSet, TensorKind};
use crate::types::{GridSpec, NUM_KEYPOINT_TYPES};

pub const MAGIC: [u8; 4] = *b"DSLF";
pub const VERSION: u32 = 1;

/// Serializes in tag order.
pub fn write_fieldset(fields: &FieldSet) -> Vec<u8> {
    let grid = fields.grid();
    let payload: usize = TensorKind::ALL.iter().map(|&k| fields.tensor(k).len() * 4 + 18).sum();
    let mut out = Vec::with_capacity(28 + payload);
    out.extend_from_slice(&MAGIC);
    for v in [VERSION, grid.width, grid.height, grid.stride, NUM_KEYPOINT_TYPES as u32, TensorKind::ALL.len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for kind in TensorKind::ALL {
        let dims = kind.dims(grid);
        out.push(kind.tag());
        out.push(dims.len() as u8);
        for d in dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in fields.tensor(kind) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(format!("truncated while reading {what} at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub fn read_fieldset(bytes: &[u8]) -> Result<FieldSet> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format("bad magic, not a field file"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported version {version}")));
    }
    let grid = GridSpec {
        width: r.u32("width")?,
        height: r.u32("height")?,
        stride: r.u32("stride")?,
    };
    grid.validate().map_err(|e| Error::format(format!("bad grid: {e}")))?;
    let types = r.u32("keypoint-type count")?;
    if types as usize != NUM_KEYPOINT_TYPES {
        return Err(Error::format(format!("expected {NUM_KEYPOINT_TYPES} keypoint types, found {types}")));
    }
    let count = r.u32("tensor count")?;
    if count as usize != TensorKind::ALL.len() {
        return Err(Error::format(format!("expected {} tensors, found {count}", TensorKind::ALL.len())));
    }

    let mut tensors: [Option<Vec<f32>>; 6] = Default::default();
    for _ in 0..count {
        let tag = r.u8("tensor tag")?;
        let kind = TensorKind::from_tag(tag).ok_or_else(|| Error::format(format!("unknown tensor tag {tag}")))?;
        if tensors[tag as usize].is_some() {
            return Err(Error::format(format!("duplicate tensor {kind:?}")));
        }
        let ndims = r.u8("ndims")? as usize;
        let mut dims = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            dims.push(r.u32("dims")?);
        }
        let expected = kind.dims(&grid);
        if dims != expected {
            return Err(Error::format(format!("{kind:?} has dims {dims:?}, expected {expected:?}")));
        }
        let n: usize = dims.iter().map(|&d| d as usize).product();
        if n.checked_mul(4).map_or(true, |b| b > r.remaining()) {
            return Err(Error::format(format!("truncated {kind:?} data")));
        }
        let data = r
            .take(n * 4, "tensor data")?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors[tag as usize] = Some(data);
    }
    if r.remaining() != 0 {
        return Err(Error::format(format!("{} trailing bytes", r.remaining())));
    }
    let [Some(sem), Some(off), Some(conf), Some(loc), Some(ls), Some(lb)] = tensors else {
        unreachable!("six distinct tags were read")
    };
    FieldSet::from_raw(grid, sem, off, conf, loc, ls, lb).map_err(|e| Error::format(format!("invalid contents: {e}")))
}

pub fn write_field_file(path: impl AsRef<Path>, fields: &FieldSet) -> Result<()> {
    std::fs::write(path, write_fieldset(fields))?;
    Ok(())
}

pub fn read_field_file(path: impl AsRef<Path>) -> Result<FieldSet> {
    read_fieldset(&std::fs::read(path)?)
}
