//! Encoded-corpus container, the `VQC1` format.
//!
//! Layout, little-endian: magic `VQC1`, n (u64), m (u32), k (u32), then the
//! packed code bytes (one byte per index for K ≤ 256, bit-packed above; see
//! the packing module in the core crate). No padding, no trailer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use vqann_core::quant::{pack_codes, packed_bytes_per_vector, Codes};
use vqann_core::{Error, Result};

pub fn write_codes(path: &Path, codes: &Codes, k: usize) -> Result<()> {
    let packed = pack_codes(codes, k)?;
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(b"VQC1")?;
    w.write_u64::<LittleEndian>(codes.n() as u64)?;
    w.write_u32::<LittleEndian>(codes.m() as u32)?;
    w.write_u32::<LittleEndian>(k as u32)?;
    w.write_all(&packed)?;
    w.flush()?;
    Ok(())
}

/// Reads a codes file back, returning the codes and the dictionary size they
/// were packed against (callers match it against their model).
pub fn read_codes(path: &Path) -> Result<(Codes, usize)> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("codes file shorter than its magic".into()))?;
    if &magic != b"VQC1" {
        return Err(Error::Format(format!("bad magic {magic:?}, expected VQC1")));
    }
    let n = r.read_u64::<LittleEndian>()? as usize;
    let m = r.read_u32::<LittleEndian>()? as usize;
    let k = r.read_u32::<LittleEndian>()? as usize;
    if n == 0 || m == 0 || k == 0 {
        return Err(Error::Format("codes header has a zero dimension".into()));
    }
    let expect = n
        .checked_mul(packed_bytes_per_vector(m, k))
        .ok_or_else(|| Error::Format("codes shape overflows".into()))?;
    let mut packed = Vec::new();
    r.read_to_end(&mut packed)?;
    if packed.len() != expect {
        return Err(Error::Format(format!(
            "codes payload is {} bytes, header implies {expect}",
            packed.len()
        )));
    }
    let codes = vqann_core::quant::unpack_codes(&packed, n, m, k)?;
    Ok((codes, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempPath {
        tempfile::Builder::new().suffix(".vqc1").tempfile().unwrap().into_temp_path()
    }

    #[test]
    fn roundtrip_preserves_codes_and_k() {
        let codes = Codes::from_rows(&[vec![0, 3, 15], vec![7, 1, 2], vec![15, 15, 0]]).unwrap();
        let path = tmp();
        write_codes(&path, &codes, 16).unwrap();
        let (back, k) = read_codes(&path).unwrap();
        assert_eq!(back, codes);
        assert_eq!(k, 16);
    }

    #[test]
    fn reader_rejects_corruption() {
        let codes = Codes::from_rows(&[vec![1, 2], vec![3, 0]]).unwrap();
        let path = tmp();
        write_codes(&path, &codes, 4).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        assert!(read_codes(&path).is_err());

        std::fs::write(&path, &good[..good.len() - 1]).unwrap();
        assert!(read_codes(&path).is_err());

        let mut trailing = good.clone();
        trailing.push(0);
        std::fs::write(&path, &trailing).unwrap();
        assert!(read_codes(&path).is_err());

        // An index at or past k is data corruption, not a format quirk.
        let mut bad_index = good.clone();
        let payload = bad_index.len() - 4;
        bad_index[payload] = 9;
        std::fs::write(&path, &bad_index).unwrap();
        assert!(read_codes(&path).is_err());
    }
}
