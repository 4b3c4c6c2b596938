//! Reader and writer for the subset of NPY v1.0 used for activation dumps:
//! little-endian `<f4` / `<f8` payloads in C order.
//!
//! Layout of a file:
//!
//! ```text
//! \x93NUMPY | 0x01 0x00 | u16 LE header length | header dict, space padded, '\n' | payload
//! ```
//!
//! The writer pads the header so the payload starts on a 64-byte boundary,
//! the same alignment numpy itself produces.

use std::fs;
use std::path::Path;

use crate::data::ActivationMatrix;
use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE_LEN: usize = 10;
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    fn descr(self) -> &'static str {
        match self {
            Precision::F32 => "<f4",
            Precision::F64 => "<f8",
        }
    }

    fn width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

/// An n-dimensional block of values as stored in an NPY file, widened to f64.
#[derive(Debug, Clone, PartialEq)]
pub struct RawBlock {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl RawBlock {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expected,
                values.len()
            )));
        }
        Ok(RawBlock { shape, values })
    }
}

#[derive(Debug, PartialEq)]
struct Header {
    precision: Precision,
    fortran_order: bool,
    shape: Vec<usize>,
}

pub fn decode_block(bytes: &[u8]) -> Result<RawBlock> {
    if bytes.len() < PREAMBLE_LEN || &bytes[..6] != MAGIC {
        return Err(Error::Format("missing NPY magic".into()));
    }
    if bytes[6] != 1 || bytes[7] != 0 {
        return Err(Error::Format(format!(
            "unsupported NPY version {}.{}",
            bytes[6], bytes[7]
        )));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let payload_start = PREAMBLE_LEN + header_len;
    if bytes.len() < payload_start {
        return Err(Error::Format("truncated NPY header".into()));
    }
    let text = std::str::from_utf8(&bytes[PREAMBLE_LEN..payload_start])
        .map_err(|_| Error::Format("NPY header is not ASCII".into()))?;
    let header = parse_header(text)?;
    if header.fortran_order {
        return Err(Error::Format("fortran_order arrays are not supported".into()));
    }

    let count: usize = header.shape.iter().product();
    let width = header.precision.width();
    let payload = &bytes[payload_start..];
    if payload.len() != count * width {
        return Err(Error::Format(format!(
            "payload holds {} bytes, shape {:?} needs {}",
            payload.len(),
            header.shape,
            count * width
        )));
    }

    let values = match header.precision {
        Precision::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        Precision::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    };
    Ok(RawBlock {
        shape: header.shape,
        values,
    })
}

pub fn encode_block(block: &RawBlock, precision: Precision) -> Vec<u8> {
    let shape = match block.shape.as_slice() {
        [single] => format!("({},)", single),
        dims => format!(
            "({})",
            dims.iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut header = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        precision.descr(),
        shape
    );
    let unpadded = PREAMBLE_LEN + header.len() + 1;
    let padding = (ALIGN - unpadded % ALIGN) % ALIGN;
    header.extend(std::iter::repeat_n(' ', padding));
    header.push('\n');

    let mut out = Vec::with_capacity(PREAMBLE_LEN + header.len() + block.values.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    match precision {
        Precision::F32 => {
            for &v in &block.values {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Precision::F64 => {
            for &v in &block.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn read_block(path: &Path) -> Result<RawBlock> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_block(&bytes)
}

pub fn write_block(block: &RawBlock, path: &Path, precision: Precision) -> Result<()> {
    fs::write(path, encode_block(block, precision)).map_err(|e| Error::io(path, e))
}

/// Reads a 2-D activation matrix. 32-bit payloads are widened to f64.
pub fn read_array(path: &Path) -> Result<ActivationMatrix> {
    let block = read_block(path)?;
    match block.shape.as_slice() {
        &[rows, cols] => ActivationMatrix::new(rows, cols, block.values),
        other => Err(Error::Shape(format!(
            "{}: expected a 2-D array, found shape {:?}",
            path.display(),
            other
        ))),
    }
}

pub fn write_array(matrix: &ActivationMatrix, path: &Path, precision: Precision) -> Result<()> {
    let block = RawBlock {
        shape: vec![matrix.rows(), matrix.cols()],
        values: matrix.values().to_vec(),
    };
    write_block(&block, path, precision)
}

// Minimal parser for the python-literal header dict.

fn parse_header(text: &str) -> Result<Header> {
    let body = text.trim_end_matches(['\n', ' ', '\0']).trim();
    let inner = body
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| Error::Format(format!("header is not a dict: {body:?}")))?;

    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    let mut cursor = Cursor::new(inner);
    loop {
        cursor.skip_ws();
        if cursor.at_end() {
            break;
        }
        let key = cursor.quoted()?;
        cursor.skip_ws();
        cursor.expect(':')?;
        cursor.skip_ws();
        match key.as_str() {
            "descr" => descr = Some(cursor.quoted()?),
            "fortran_order" => fortran = Some(cursor.boolean()?),
            "shape" => shape = Some(cursor.tuple()?),
            other => return Err(Error::Format(format!("unexpected header key {other:?}"))),
        }
        cursor.skip_ws();
        if !cursor.eat(',') {
            cursor.skip_ws();
            if !cursor.at_end() {
                return Err(Error::Format("malformed header dict".into()));
            }
        }
    }

    let precision = match descr.as_deref() {
        Some("<f4") => Precision::F32,
        Some("<f8") => Precision::F64,
        Some(other) => return Err(Error::Format(format!("unsupported descr {other:?}"))),
        None => return Err(Error::Format("header lacks descr".into())),
    };
    Ok(Header {
        precision,
        fortran_order: fortran.ok_or_else(|| Error::Format("header lacks fortran_order".into()))?,
        shape: shape.ok_or_else(|| Error::Format("header lacks shape".into()))?,
    })
}

struct Cursor<'a> {
    rest: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(rest: &'a str) -> Self {
        Cursor { rest }
    }

    fn at_end(&self) -> bool {
        self.rest.is_empty()
    }

    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start();
    }

    fn eat(&mut self, c: char) -> bool {
        match self.rest.strip_prefix(c) {
            Some(r) => {
                self.rest = r;
                true
            }
            None => false,
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(Error::Format(format!("expected {c:?} in header")))
        }
    }

    fn quoted(&mut self) -> Result<String> {
        let quote = self
            .rest
            .chars()
            .next()
            .filter(|c| *c == '\'' || *c == '"')
            .ok_or_else(|| Error::Format("expected quoted string in header".into()))?;
        let body = &self.rest[1..];
        let end = body
            .find(quote)
            .ok_or_else(|| Error::Format("unterminated string in header".into()))?;
        let value = body[..end].to_string();
        self.rest = &body[end + 1..];
        Ok(value)
    }

    fn boolean(&mut self) -> Result<bool> {
        if let Some(r) = self.rest.strip_prefix("True") {
            self.rest = r;
            Ok(true)
        } else if let Some(r) = self.rest.strip_prefix("False") {
            self.rest = r;
            Ok(false)
        } else {
            Err(Error::Format("expected True or False in header".into()))
        }
    }

    fn tuple(&mut self) -> Result<Vec<usize>> {
        self.expect('(')?;
        let end = self
            .rest
            .find(')')
            .ok_or_else(|| Error::Format("unterminated shape tuple".into()))?;
        let dims = self.rest[..end]
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| Error::Format(format!("bad shape dimension {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.rest = &self.rest[end + 1..];
        Ok(dims)
    }
}
