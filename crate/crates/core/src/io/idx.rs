// SPDX-License-Identifier: Apache-2.0

//! Reader and writer for unsigned-byte IDX files (the MNIST distribution format).
//!
//! Layout: two zero bytes, a type byte (`0x08` for unsigned bytes), the number
//! of dimensions, each dimension as a big-endian `u32`, then the values in
//! row-major order.

use std::path::Path;

use crate::error::{Error, Result};

const UBYTE: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    /// Number of items along the first dimension.
    pub fn items(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    /// Values per item.
    pub fn item_len(&self) -> usize {
        self.dims.iter().skip(1).product()
    }

    pub fn item(&self, i: usize) -> &[u8] {
        let n = self.item_len();
        &self.data[i * n..(i + 1) * n]
    }
}

fn parse_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        msg: msg.into(),
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(parse_err(
            bytes.len(),
            "file ends inside the 4-byte magic number",
        ));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        let at = if bytes[0] != 0 { 0 } else { 1 };
        return Err(parse_err(
            at,
            format!("bad magic byte 0x{:02x}, expected 0x00", bytes[at]),
        ));
    }
    if bytes[2] != UBYTE {
        return Err(parse_err(
            2,
            format!(
                "unsupported element type 0x{:02x}, only 0x08 (ubyte) is read",
                bytes[2]
            ),
        ));
    }
    let ndim = bytes[3] as usize;
    if ndim == 0 {
        return Err(parse_err(3, "zero dimensions"));
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(parse_err(
            bytes.len(),
            "file ends inside the dimension table",
        ));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let total = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| parse_err(4, "dimension product overflows"))?;
    let body = &bytes[header..];
    if body.len() != total {
        return Err(parse_err(
            header + body.len().min(total),
            format!(
                "expected {total} data bytes after the header, found {}",
                body.len()
            ),
        ));
    }
    Ok(IdxArray {
        dims,
        data: body.to_vec(),
    })
}

pub fn encode_idx(array: &IdxArray) -> Result<Vec<u8>> {
    if array.dims.is_empty() || array.dims.len() > 255 {
        return Err(Error::Argument(
            "IDX arrays have 1 to 255 dimensions".into(),
        ));
    }
    if array.dims.iter().product::<usize>() != array.data.len() {
        return Err(Error::Dimension(
            "IDX dims do not match the data length".into(),
        ));
    }
    let mut out = vec![0, 0, UBYTE, array.dims.len() as u8];
    for &d in &array.dims {
        let d = u32::try_from(d).map_err(|_| Error::Argument("IDX dimension too large".into()))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    Ok(out)
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    parse_idx(&bytes).map_err(|e| match e {
        Error::Parse { offset, msg } => Error::Parse {
            offset,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}
