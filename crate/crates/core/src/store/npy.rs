// SPDX-License-Identifier: MIT OR Apache-2.0

//! NPY v1.0 codec for 1-D and 2-D little-endian C-order `<f4` / `<f2` arrays.
//!
//! Layout: `\x93NUMPY`, version `01 00`, u16 LE header length, an ASCII dict
//! `{'descr': ..., 'fortran_order': False, 'shape': (...), }` padded with
//! spaces and terminated by `\n` so the payload starts on a 64-byte boundary.

use std::fs;
use std::path::Path;

use half::f16;
use serde::{Deserialize, Serialize};

use crate::error::{Error, NpyErrorKind, Result};

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE_LEN: usize = 10;
const ALIGN: usize = 64;

/// On-disk element width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F16,
}

impl DType {
    pub fn descr(self) -> &'static str {
        match self {
            DType::F32 => "<f4",
            DType::F16 => "<f2",
        }
    }

    pub fn byte_width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F16 => 2,
        }
    }

    fn from_descr(descr: &str) -> Option<DType> {
        match descr {
            "<f4" => Some(DType::F32),
            "<f2" => Some(DType::F16),
            _ => None,
        }
    }
}

/// A decoded array. Values are always held as f32; f16 payloads are widened
/// on load and narrowed again on save, which is exact for values that came
/// from an f16 file.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub data: Vec<f32>,
}

impl NpyArray {
    pub fn new(shape: Vec<usize>, dtype: DType, data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 2 {
            return Err(Error::Validation(format!(
                "only 1-D and 2-D arrays are supported, got rank {}",
                shape.len()
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Validation(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, dtype, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

fn header_text(shape: &[usize], dtype: DType) -> String {
    let shape_str = match shape {
        [n] => format!("({n},)"),
        dims => format!(
            "({})",
            dims.iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        dtype.descr(),
        shape_str
    );
    // +1 for the terminating newline
    let unpadded = PREAMBLE_LEN + dict.len() + 1;
    let padded = unpadded.div_ceil(ALIGN) * ALIGN;
    dict.extend(std::iter::repeat_n(' ', padded - unpadded));
    dict.push('\n');
    dict
}

/// Serialize to NPY bytes.
pub fn encode(array: &NpyArray) -> Vec<u8> {
    let header = header_text(&array.shape, array.dtype);
    let mut out =
        Vec::with_capacity(PREAMBLE_LEN + header.len() + array.len() * array.dtype.byte_width());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    match array.dtype {
        DType::F32 => {
            for v in &array.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        DType::F16 => {
            for v in &array.data {
                out.extend_from_slice(&f16::from_f32(*v).to_le_bytes());
            }
        }
    }
    out
}

/// Parse NPY bytes. `path` is only used in error messages.
pub fn decode(bytes: &[u8], path: &Path) -> Result<NpyArray> {
    let fail = |offset: usize, kind: NpyErrorKind| Error::NpyParse {
        path: path.to_path_buf(),
        offset,
        kind,
    };

    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(fail(0, NpyErrorKind::BadMagic));
    }
    if bytes.len() < PREAMBLE_LEN {
        return Err(fail(
            bytes.len(),
            NpyErrorKind::MalformedHeader("file ends inside the preamble".into()),
        ));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(fail(6, NpyErrorKind::UnsupportedVersion(major, minor)));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = PREAMBLE_LEN + header_len;
    if bytes.len() < data_start {
        return Err(fail(
            bytes.len(),
            NpyErrorKind::MalformedHeader(format!(
                "header declares {header_len} bytes but file has {}",
                bytes.len() - PREAMBLE_LEN
            )),
        ));
    }
    let header = std::str::from_utf8(&bytes[PREAMBLE_LEN..data_start])
        .map_err(|_| fail(PREAMBLE_LEN, NpyErrorKind::MalformedHeader("not ASCII".into())))?;
    let (dtype, shape) =
        parse_header(header).map_err(|m| fail(PREAMBLE_LEN, NpyErrorKind::MalformedHeader(m)))?;

    let count: usize = shape.iter().product();
    let expected = count * dtype.byte_width();
    let payload = &bytes[data_start..];
    if payload.len() < expected {
        return Err(fail(
            data_start,
            NpyErrorKind::Truncated {
                expected,
                found: payload.len(),
            },
        ));
    }
    if payload.len() > expected {
        return Err(fail(
            data_start + expected,
            NpyErrorKind::TrailingBytes(payload.len() - expected),
        ));
    }

    let data = match dtype {
        DType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        DType::F16 => payload
            .chunks_exact(2)
            .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
    };
    Ok(NpyArray { shape, dtype, data })
}

/// Extract descr and shape from the header dict, rejecting fortran order.
fn parse_header(header: &str) -> std::result::Result<(DType, Vec<usize>), String> {
    let body = header.trim_end_matches(['\n', ' ']);
    let body = body
        .strip_prefix('{')
        .and_then(|b| b.strip_suffix('}'))
        .ok_or_else(|| "header is not a dict literal".to_string())?;

    let descr = value_after(body, "descr")?;
    let descr = descr
        .trim()
        .trim_matches(|c| c == '\'' || c == '"')
        .to_string();
    let dtype = DType::from_descr(&descr).ok_or_else(|| format!("unsupported descr '{descr}'"))?;

    let fortran = value_after(body, "fortran_order")?;
    match fortran.trim() {
        "False" => {}
        "True" => return Err("fortran_order arrays are not supported".into()),
        other => return Err(format!("bad fortran_order value '{other}'")),
    }

    let shape_src = value_after(body, "shape")?;
    let shape_src = shape_src.trim();
    let inner = shape_src
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| format!("bad shape '{shape_src}'"))?;
    let shape = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| format!("bad dimension '{s}'")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if shape.is_empty() || shape.len() > 2 {
        return Err(format!("unsupported rank {}", shape.len()));
    }
    Ok((dtype, shape))
}

/// Raw text of the value for `key`, up to the next top-level comma.
fn value_after<'a>(body: &'a str, key: &str) -> std::result::Result<&'a str, String> {
    let quoted = [format!("'{key}'"), format!("\"{key}\"")];
    let start = quoted
        .iter()
        .find_map(|q| body.find(q.as_str()).map(|i| i + q.len()))
        .ok_or_else(|| format!("missing key '{key}'"))?;
    let rest = body[start..].trim_start();
    let rest = rest
        .strip_prefix(':')
        .ok_or_else(|| format!("missing ':' after '{key}'"))?;
    let mut depth = 0usize;
    for (i, ch) in rest.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => return Ok(&rest[..i]),
            _ => {}
        }
    }
    Ok(rest)
}

pub fn write_npy(path: &Path, array: &NpyArray) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode(array)).map_err(|e| Error::io(path, e))
}

pub fn read_npy(path: &Path) -> Result<NpyArray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Decode only the header, for cheap manifest validation.
pub fn read_header(path: &Path) -> Result<(DType, Vec<usize>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let arr = decode(&bytes, path)?;
    Ok((arr.dtype, arr.shape))
}
