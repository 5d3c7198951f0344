//! ACTD: a small binary container for named activation and weight matrices.
//!
//! Version 1 layout, all integers little-endian:
//!
//! ```text
//! header   "ACTD" | u16 version = 1 | u16 flags = 0 | u32 record_count
//! record   u16 name_len | name (UTF-8) | u8 dtype | u8 kind | u32 rows | u32 cols
//!          | rows*cols values, row-major
//! dtype    0 = binary32, 1 = binary64
//! kind     0 = activation, 1 = weight
//! ```
//!
//! Values are always widened to `f64` on read. Writing a binary32 record
//! narrows each value once.

use std::collections::HashSet;
use std::io::{self, Read, Write};

use thiserror::Error;

use crate::metrics::LayerPair;
use crate::tensor::{Matrix, TensorError};

pub const MAGIC: [u8; 4] = *b"ACTD";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}, expected \"ACTD\"")]
    BadMagic([u8; 4]),
    #[error("unsupported ACTD version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported ACTD flags {0:#06x}")]
    UnsupportedFlags(u16),
    #[error("truncated {what}{}", record_suffix(.record))]
    Truncated {
        what: &'static str,
        record: Option<String>,
    },
    #[error("record {index}: name is not valid UTF-8")]
    InvalidName { index: usize },
    #[error("record {index}: name is empty")]
    EmptyName { index: usize },
    #[error("record {name:?}: name is longer than {max} bytes", max = u16::MAX)]
    NameTooLong { name: String },
    #[error("record {name:?}: unknown dtype {dtype}")]
    UnknownDtype { name: String, dtype: u8 },
    #[error("record {name:?}: unknown kind {kind}")]
    UnknownKind { name: String, kind: u8 },
    #[error("record {name:?}: invalid shape {rows}x{cols}")]
    BadShape { name: String, rows: u64, cols: u64 },
    #[error("record {name:?}: non-finite value at ({row}, {col})")]
    NonFinite {
        name: String,
        row: usize,
        col: usize,
    },
    #[error("duplicate record {name:?} of kind {kind}")]
    Duplicate { name: String, kind: RecordKind },
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("too many records to encode: {0}")]
    TooManyRecords(usize),
}

fn record_suffix(record: &Option<String>) -> String {
    record
        .as_ref()
        .map(|r| format!(" in record {r:?}"))
        .unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecordKind {
    Activation,
    Weight,
}

impl std::fmt::Display for RecordKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RecordKind::Activation => "activation",
            RecordKind::Weight => "weight",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub name: String,
    pub kind: RecordKind,
    pub matrix: Matrix,
    pub dtype_stored: Dtype,
}

impl LayerRecord {
    pub fn activation(name: impl Into<String>, matrix: Matrix) -> Self {
        Self {
            name: name.into(),
            kind: RecordKind::Activation,
            matrix,
            dtype_stored: Dtype::F64,
        }
    }

    pub fn weight(name: impl Into<String>, matrix: Matrix) -> Self {
        Self {
            name: name.into(),
            kind: RecordKind::Weight,
            matrix,
            dtype_stored: Dtype::F64,
        }
    }

    pub fn stored_as(mut self, dtype: Dtype) -> Self {
        self.dtype_stored = dtype;
        self
    }
}

fn check_unique<'a>(
    records: impl Iterator<Item = (&'a str, RecordKind)>,
) -> Result<(), IngestError> {
    let mut seen = HashSet::new();
    for (name, kind) in records {
        if !seen.insert((name, kind)) {
            return Err(IngestError::Duplicate {
                name: name.to_string(),
                kind,
            });
        }
    }
    Ok(())
}

/// Serializes `records` and returns the number of bytes written. Output is a
/// pure function of the records.
pub fn write_actd<W: Write>(records: &[LayerRecord], mut sink: W) -> Result<u64, IngestError> {
    let count =
        u32::try_from(records.len()).map_err(|_| IngestError::TooManyRecords(records.len()))?;
    check_unique(records.iter().map(|r| (r.name.as_str(), r.kind)))?;

    let mut buf = Vec::with_capacity(HEADER_LEN);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&0u16.to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    sink.write_all(&buf)?;
    let mut written = buf.len() as u64;

    for (index, rec) in records.iter().enumerate() {
        if rec.name.is_empty() {
            return Err(IngestError::EmptyName { index });
        }
        let name_len = u16::try_from(rec.name.len()).map_err(|_| IngestError::NameTooLong {
            name: rec.name.clone(),
        })?;
        let (rows, cols) = rec.matrix.shape();
        let bad_shape = || IngestError::BadShape {
            name: rec.name.clone(),
            rows: rows as u64,
            cols: cols as u64,
        };
        let rows32 = u32::try_from(rows).map_err(|_| bad_shape())?;
        let cols32 = u32::try_from(cols).map_err(|_| bad_shape())?;

        buf.clear();
        buf.extend_from_slice(&name_len.to_le_bytes());
        buf.extend_from_slice(rec.name.as_bytes());
        buf.push(rec.dtype_stored.code());
        buf.push(match rec.kind {
            RecordKind::Activation => 0,
            RecordKind::Weight => 1,
        });
        buf.extend_from_slice(&rows32.to_le_bytes());
        buf.extend_from_slice(&cols32.to_le_bytes());
        for (i, &v) in rec.matrix.as_slice().iter().enumerate() {
            match rec.dtype_stored {
                Dtype::F64 => buf.extend_from_slice(&v.to_le_bytes()),
                Dtype::F32 => {
                    let n = v as f32;
                    if !n.is_finite() {
                        return Err(IngestError::NonFinite {
                            name: rec.name.clone(),
                            row: i / cols,
                            col: i % cols,
                        });
                    }
                    buf.extend_from_slice(&n.to_le_bytes());
                }
            }
        }
        sink.write_all(&buf)?;
        written += buf.len() as u64;
    }
    sink.flush()?;
    Ok(written)
}

/// Byte-slice cursor that reports truncation instead of panicking.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(
        &mut self,
        n: usize,
        what: &'static str,
        record: Option<&str>,
    ) -> Result<&'a [u8], IngestError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(IngestError::Truncated {
                what,
                record: record.map(str::to_string),
            }),
        }
    }

    fn u8(&mut self, what: &'static str, record: Option<&str>) -> Result<u8, IngestError> {
        Ok(self.take(1, what, record)?[0])
    }

    fn u16(&mut self, what: &'static str, record: Option<&str>) -> Result<u16, IngestError> {
        let b = self.take(2, what, record)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &'static str, record: Option<&str>) -> Result<u32, IngestError> {
        let b = self.take(4, what, record)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Reads an entire ACTD stream.
pub fn read_actd<R: Read>(mut source: R) -> Result<Vec<LayerRecord>, IngestError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    parse_actd(&bytes)
}

/// Parses ACTD bytes. Never panics on malformed input.
pub fn parse_actd(bytes: &[u8]) -> Result<Vec<LayerRecord>, IngestError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "header", None)?;
    if magic != MAGIC {
        return Err(IngestError::BadMagic([
            magic[0], magic[1], magic[2], magic[3],
        ]));
    }
    let version = cur.u16("header", None)?;
    if version != VERSION {
        return Err(IngestError::UnsupportedVersion(version));
    }
    let flags = cur.u16("header", None)?;
    if flags != 0 {
        return Err(IngestError::UnsupportedFlags(flags));
    }
    let count = cur.u32("header", None)? as usize;

    // The count is untrusted, so the vector grows with the data actually present.
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for index in 0..count {
        let name_len = cur.u16("record header", None)? as usize;
        let name_bytes = cur.take(name_len, "record name", None)?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| IngestError::InvalidName { index })?
            .to_string();
        if name.is_empty() {
            return Err(IngestError::EmptyName { index });
        }
        let rec = Some(name.as_str());
        let dtype = match cur.u8("record header", rec)? {
            0 => Dtype::F32,
            1 => Dtype::F64,
            other => return Err(IngestError::UnknownDtype { name, dtype: other }),
        };
        let kind = match cur.u8("record header", rec)? {
            0 => RecordKind::Activation,
            1 => RecordKind::Weight,
            other => return Err(IngestError::UnknownKind { name, kind: other }),
        };
        let rows = cur.u32("record header", rec)? as usize;
        let cols = cur.u32("record header", rec)? as usize;
        let bad_shape = || IngestError::BadShape {
            name: name.clone(),
            rows: rows as u64,
            cols: cols as u64,
        };
        if rows == 0 || cols == 0 {
            return Err(bad_shape());
        }
        let n = rows.checked_mul(cols).ok_or_else(bad_shape)?;
        let nbytes = n.checked_mul(dtype.width()).ok_or_else(bad_shape)?;
        let payload = cur.take(nbytes, "payload", rec)?;
        let data: Vec<f64> = match dtype {
            Dtype::F32 => payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect(),
            Dtype::F64 => payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
        };
        let matrix = match Matrix::new(rows, cols, data) {
            Ok(m) => m,
            Err(TensorError::NonFinite { row, col, .. }) => {
                return Err(IngestError::NonFinite { name, row, col })
            }
            Err(_) => return Err(bad_shape()),
        };
        if !seen.insert((name.clone(), kind)) {
            return Err(IngestError::Duplicate { name, kind });
        }
        records.push(LayerRecord {
            name,
            kind,
            matrix,
            dtype_stored: dtype,
        });
    }
    let rest = bytes.len() - cur.pos;
    if rest != 0 {
        return Err(IngestError::TrailingBytes(rest));
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairingIssue {
    MissingWeight(String),
    MissingActivation(String),
    ShapeMismatch {
        name: String,
        activation: (usize, usize),
        weight: (usize, usize),
    },
}

impl std::fmt::Display for PairingIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PairingIssue::MissingWeight(n) => {
                write!(f, "record {n:?}: activation has no matching weight")
            }
            PairingIssue::MissingActivation(n) => {
                write!(f, "record {n:?}: weight has no matching activation")
            }
            PairingIssue::ShapeMismatch {
                name,
                activation,
                weight,
            } => write!(
                f,
                "record {name:?}: activation {}x{} does not feed weight {}x{}",
                activation.0, activation.1, weight.0, weight.1
            ),
        }
    }
}

/// Matches activation and weight records by name, in order of first appearance.
pub fn pair_records(records: Vec<LayerRecord>) -> (Vec<LayerPair>, Vec<PairingIssue>) {
    let mut order: Vec<String> = Vec::new();
    let mut acts = std::collections::HashMap::new();
    let mut wts = std::collections::HashMap::new();
    for rec in records {
        if !acts.contains_key(&rec.name) && !wts.contains_key(&rec.name) {
            order.push(rec.name.clone());
        }
        match rec.kind {
            RecordKind::Activation => acts.insert(rec.name, rec.matrix),
            RecordKind::Weight => wts.insert(rec.name, rec.matrix),
        };
    }
    let mut pairs = Vec::new();
    let mut issues = Vec::new();
    for name in order {
        match (acts.remove(&name), wts.remove(&name)) {
            (Some(a), Some(w)) if a.cols() == w.rows() => pairs.push(LayerPair {
                name,
                activation: a,
                weight: w,
            }),
            (Some(a), Some(w)) => issues.push(PairingIssue::ShapeMismatch {
                name,
                activation: a.shape(),
                weight: w.shape(),
            }),
            (Some(_), None) => issues.push(PairingIssue::MissingWeight(name)),
            (None, Some(_)) => issues.push(PairingIssue::MissingActivation(name)),
            (None, None) => unreachable!("name recorded from a record"),
        }
    }
    (pairs, issues)
}

/// Splits pairs back into records, activation first.
pub fn pairs_to_records(pairs: &[LayerPair], dtype: Dtype) -> Vec<LayerRecord> {
    pairs
        .iter()
        .flat_map(|p| {
            [
                LayerRecord::activation(p.name.clone(), p.activation.clone()).stored_as(dtype),
                LayerRecord::weight(p.name.clone(), p.weight.clone()).stored_as(dtype),
            ]
        })
        .collect()
}
