//! NPY format version 1.0, two-dimensional little-endian `f4`/`f8` arrays only.
//!
//! Layout: the magic `\x93NUMPY`, version bytes `01 00`, a little-endian
//! `u16` header length, then an ASCII Python dict literal with the keys
//! `descr`, `fortran_order` and `shape`, padded with spaces and a final
//! newline so the data starts on a 64-byte boundary.

use std::path::Path;

use endorecon_core::{DepthKind, DepthMap, Raster};

use crate::error::{fsx, Error, Result};

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F4,
    F8,
}

impl Dtype {
    fn descr(self) -> &'static str {
        match self {
            Dtype::F4 => "<f4",
            Dtype::F8 => "<f8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NpyData {
    F4(Vec<f32>),
    F8(Vec<f64>),
}

/// A C-ordered `rows x cols` array.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub rows: usize,
    pub cols: usize,
    pub data: NpyData,
}

impl NpyArray {
    pub fn dtype(&self) -> Dtype {
        match self.data {
            NpyData::F4(_) => Dtype::F4,
            NpyData::F8(_) => Dtype::F8,
        }
    }

    /// Values widened to `f64`; `f32 -> f64` is exact.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            NpyData::F4(v) => v.iter().map(|&x| x as f64).collect(),
            NpyData::F8(v) => v.clone(),
        }
    }

    /// Row `v`, column `u` becomes pixel `(u, v)`.
    pub fn to_raster(&self) -> Raster<f64> {
        Raster::from_vec(self.cols, self.rows, self.to_f64()).expect("length checked on decode")
    }

    pub fn from_raster_f64(r: &Raster<f64>) -> Self {
        Self {
            rows: r.height(),
            cols: r.width(),
            data: NpyData::F8(r.as_slice().to_vec()),
        }
    }

    pub fn from_raster_f32(r: &Raster<f64>) -> Self {
        Self {
            rows: r.height(),
            cols: r.width(),
            data: NpyData::F4(r.as_slice().iter().map(|&x| x as f32).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum PyValue {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

struct HeaderParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> HeaderParser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), String> {
        match self.peek() {
            Some(x) if x == c => {
                self.pos += 1;
                Ok(())
            }
            Some(x) => Err(format!("malformed header: expected '{}' at byte {}, found '{}'", c as char, self.pos, x as char)),
            None => Err(format!("malformed header: expected '{}', found end of header", c as char)),
        }
    }

    fn string(&mut self) -> Result<String, String> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(format!("malformed header: expected a quoted string at byte {}", self.pos)),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos == self.s.len() {
            return Err("malformed header: unterminated string".into());
        }
        let out = String::from_utf8_lossy(&self.s[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(out)
    }

    fn value(&mut self) -> Result<PyValue, String> {
        match self.peek() {
            Some(b'\'' | b'"') => self.string().map(PyValue::Str),
            Some(b'(') => {
                self.pos += 1;
                let mut dims = Vec::new();
                loop {
                    match self.peek() {
                        Some(b')') => {
                            self.pos += 1;
                            return Ok(PyValue::Tuple(dims));
                        }
                        Some(c) if c.is_ascii_digit() => {
                            let start = self.pos;
                            while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                                self.pos += 1;
                            }
                            let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
                            dims.push(text.parse().map_err(|_| format!("malformed header: bad dimension {text}"))?);
                            if self.peek() == Some(b',') {
                                self.pos += 1;
                            }
                        }
                        _ => return Err("malformed header: bad shape tuple".into()),
                    }
                }
            }
            _ => {
                let rest = &self.s[self.pos..];
                for (word, v) in [(&b"True"[..], true), (&b"False"[..], false)] {
                    if rest.starts_with(word) {
                        self.pos += word.len();
                        return Ok(PyValue::Bool(v));
                    }
                }
                Err(format!("malformed header: unexpected value at byte {}", self.pos))
            }
        }
    }

    fn dict(&mut self) -> Result<Vec<(String, PyValue)>, String> {
        self.expect(b'{')?;
        let mut entries = Vec::new();
        loop {
            if self.peek() == Some(b'}') {
                self.pos += 1;
                break;
            }
            let key = self.string()?;
            self.expect(b':')?;
            let value = self.value()?;
            entries.push((key, value));
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {}
                _ => return Err("malformed header: expected ',' or '}'".into()),
            }
        }
        Ok(entries)
    }
}

/// Decodes an in-memory NPY file. Errors are plain diagnostics; the file
/// readers attach the path.
pub fn decode(bytes: &[u8]) -> Result<NpyArray, String> {
    if bytes.len() < 6 || &bytes[..6] != MAGIC {
        return Err("not an NPY file (bad magic string)".into());
    }
    if bytes.len() < 10 {
        return Err("truncated NPY preamble".into());
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(format!("unsupported NPY version {major}.{minor} (only 1.0 is read)"));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = 10 + header_len;
    if bytes.len() < data_start {
        return Err(format!("truncated header: declares {header_len} bytes, file has {}", bytes.len() - 10));
    }
    let header = &bytes[10..data_start];
    if !header.is_ascii() {
        return Err("malformed header: not ASCII".into());
    }

    let mut parser = HeaderParser { s: header, pos: 0 };
    let entries = parser.dict()?;
    let get = |key: &str| entries.iter().find(|(k, _)| k == key).map(|(_, v)| v);

    let dtype = match get("descr") {
        Some(PyValue::Str(d)) if d == "<f4" => Dtype::F4,
        Some(PyValue::Str(d)) if d == "<f8" => Dtype::F8,
        Some(PyValue::Str(d)) => return Err(format!("unsupported dtype '{d}' (expected '<f4' or '<f8')")),
        Some(_) => return Err("malformed header: 'descr' is not a string".into()),
        None => return Err("malformed header: missing key 'descr'".into()),
    };
    match get("fortran_order") {
        Some(PyValue::Bool(false)) => {}
        Some(PyValue::Bool(true)) => return Err("unsupported array order: fortran_order is True".into()),
        Some(_) => return Err("malformed header: 'fortran_order' is not a boolean".into()),
        None => return Err("malformed header: missing key 'fortran_order'".into()),
    }
    let (rows, cols) = match get("shape") {
        Some(PyValue::Tuple(dims)) if dims.len() == 2 => (dims[0], dims[1]),
        Some(PyValue::Tuple(dims)) => return Err(format!("expected a 2-D array, got rank {}", dims.len())),
        Some(_) => return Err("malformed header: 'shape' is not a tuple".into()),
        None => return Err("malformed header: missing key 'shape'".into()),
    };

    let payload = &bytes[data_start..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dtype.size()))
        .ok_or("shape overflows")?;
    if payload.len() != expected {
        return Err(format!(
            "data length mismatch: shape ({rows}, {cols}) needs {expected} bytes, found {}",
            payload.len()
        ));
    }
    let data = match dtype {
        Dtype::F4 => NpyData::F4(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Dtype::F8 => NpyData::F8(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    Ok(NpyArray { rows, cols, data })
}

pub fn encode(array: &NpyArray) -> Vec<u8> {
    let dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': ({}, {}), }}",
        array.dtype().descr(),
        array.rows,
        array.cols
    );
    // +1 for the newline terminator.
    let unpadded = 10 + dict.len() + 1;
    let padding = (ALIGN - unpadded % ALIGN) % ALIGN;
    let header_len = dict.len() + padding + 1;

    let mut out = Vec::with_capacity(10 + header_len + array.rows * array.cols * array.dtype().size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat_n(b' ', padding));
    out.push(b'\n');
    match &array.data {
        NpyData::F4(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        NpyData::F8(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    out
}

pub fn read_npy(path: &Path) -> Result<NpyArray> {
    decode(&fsx::read(path)?).map_err(|m| Error::npy(path, m))
}

pub fn write_npy(path: &Path, array: &NpyArray) -> Result<()> {
    fsx::write(path, encode(array))
}

/// Reads a 2-D array as a depth map of the given kind. The mask is all true.
pub fn read_npy_2d(path: &Path, kind: DepthKind) -> Result<DepthMap> {
    let array = read_npy(path)?;
    let values = array.to_raster();
    let mask = Raster::filled(values.width(), values.height(), true);
    Ok(DepthMap::with_mask(values, mask, kind)?)
}
