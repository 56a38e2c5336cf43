//! TEXMEX vector files.
//!
//! Each record is a little-endian `i32` dimension followed by that many
//! payload elements; the dimension must be positive and identical across
//! records. `.fvecs` stores `f32`, `.bvecs` stores `u8`, `.ivecs` stores
//! `i32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, Result};

/// Payload element type of a vector file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VecsKind {
    F32,
    U8,
    I32,
}

impl VecsKind {
    fn payload_bytes(self) -> usize {
        match self {
            VecsKind::F32 | VecsKind::I32 => 4,
            VecsKind::U8 => 1,
        }
    }
}

impl std::str::FromStr for VecsKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fvecs" => Ok(VecsKind::F32),
            "bvecs" => Ok(VecsKind::U8),
            "ivecs" => Ok(VecsKind::I32),
            other => Err(Error::invalid(format!("unknown vector file kind {other:?}"))),
        }
    }
}

/// Reads a whole vector file into memory.
pub fn read_vecs(path: &Path, kind: VecsKind) -> Result<Dataset> {
    let file = File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut values: Vec<f64> = Vec::new();
    let mut dim: Option<usize> = None;
    let mut n = 0usize;
    loop {
        let d = match reader.read_i32::<LittleEndian>() {
            Ok(d) => d,
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        };
        if d <= 0 {
            return Err(Error::format(format!("record {n} has non-positive dimension {d}")));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(expect) if expect != d => {
                return Err(Error::format(format!(
                    "record {n} has dimension {d}, expected {expect}"
                )));
            }
            Some(_) => {}
        }
        let mut payload = vec![0u8; d * kind.payload_bytes()];
        reader.read_exact(&mut payload).map_err(|e| {
            if e.kind() == ErrorKind::UnexpectedEof {
                Error::format(format!("record {n} truncated"))
            } else {
                e.into()
            }
        })?;
        match kind {
            VecsKind::F32 => {
                for chunk in payload.chunks_exact(4) {
                    values.push(f64::from(f32::from_le_bytes(chunk.try_into().unwrap())));
                }
            }
            VecsKind::U8 => values.extend(payload.iter().map(|&b| f64::from(b))),
            VecsKind::I32 => {
                for chunk in payload.chunks_exact(4) {
                    values.push(f64::from(i32::from_le_bytes(chunk.try_into().unwrap())));
                }
            }
        }
        n += 1;
    }
    let dim = dim.ok_or_else(|| Error::format("file contains no vectors"))?;
    let arr = Array2::from_shape_vec((n, dim), values).expect("shape follows from the parse");
    Dataset::from_array(arr)
}

/// Writes a dataset as a vector file of the given payload type.
///
/// For `U8` every value must be an integer in `0..=255`; for `I32` an integer
/// in the `i32` range. `F32` rounds to the nearest representable `f32`.
pub fn write_vecs(dataset: &Dataset, path: &Path, kind: VecsKind) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let dim = i32::try_from(dataset.dim())
        .map_err(|_| Error::invalid("dimension exceeds i32 range"))?;
    for i in 0..dataset.n() {
        w.write_i32::<LittleEndian>(dim)?;
        for &v in dataset.row(i) {
            match kind {
                VecsKind::F32 => w.write_f32::<LittleEndian>(v as f32)?,
                VecsKind::U8 => {
                    if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
                        return Err(Error::invalid(format!(
                            "value {v} not representable as u8"
                        )));
                    }
                    w.write_u8(v as u8)?;
                }
                VecsKind::I32 => {
                    if v.fract() != 0.0 || v < f64::from(i32::MIN) || v > f64::from(i32::MAX) {
                        return Err(Error::invalid(format!(
                            "value {v} not representable as i32"
                        )));
                    }
                    w.write_i32::<LittleEndian>(v as i32)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
