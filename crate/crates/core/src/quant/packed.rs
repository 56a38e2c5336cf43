//! Packed on-disk layout for code matrices.
//!
//! `K <= 256` stores one byte per index. Larger `K` packs each index into
//! `ceil(log2 K)` bits, little-endian within each vector's bit stream, padded
//! to a whole byte per vector so records stay byte-addressable.

use ndarray::Array2;

use super::Codes;
use crate::error::{Error, Result};

fn bits_per_index(k: usize) -> u32 {
    debug_assert!(k >= 1);
    usize::BITS - (k - 1).max(1).leading_zeros()
}

/// Bytes one packed vector occupies for dictionary size `k` and `m` indices.
pub fn packed_bytes_per_vector(m: usize, k: usize) -> usize {
    if k <= 256 {
        m
    } else {
        (m * bits_per_index(k) as usize).div_ceil(8)
    }
}

/// Serializes `codes` given the dictionary size `k` they index into.
pub fn pack_codes(codes: &Codes, k: usize) -> Result<Vec<u8>> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if codes.max_index() as usize >= k {
        return Err(Error::invalid(format!(
            "code index {} out of range for k = {k}",
            codes.max_index()
        )));
    }
    let per_vec = packed_bytes_per_vector(codes.m(), k);
    let mut out = vec![0u8; codes.n() * per_vec];
    if k <= 256 {
        for i in 0..codes.n() {
            for (j, &c) in codes.row(i).iter().enumerate() {
                out[i * per_vec + j] = c as u8;
            }
        }
    } else {
        let bits = bits_per_index(k) as usize;
        for i in 0..codes.n() {
            let base = i * per_vec * 8;
            for (j, &c) in codes.row(i).iter().enumerate() {
                for t in 0..bits {
                    if (c >> t) & 1 == 1 {
                        let pos = base + j * bits + t;
                        out[pos / 8] |= 1 << (pos % 8);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`pack_codes`]; validates the byte length and every index.
pub fn unpack_codes(bytes: &[u8], n: usize, m: usize, k: usize) -> Result<Codes> {
    if n == 0 || m == 0 || k == 0 {
        return Err(Error::invalid("n, m and k must be positive"));
    }
    let per_vec = packed_bytes_per_vector(m, k);
    if bytes.len() != n * per_vec {
        return Err(Error::corrupt(format!(
            "packed codes take {} bytes for n={n}, m={m}, k={k}, got {}",
            n * per_vec,
            bytes.len()
        )));
    }
    let mut data = Array2::<u32>::zeros((n, m));
    if k <= 256 {
        for i in 0..n {
            for j in 0..m {
                let v = u32::from(bytes[i * per_vec + j]);
                if v as usize >= k {
                    return Err(Error::corrupt(format!("index {v} out of range for k = {k}")));
                }
                data[[i, j]] = v;
            }
        }
    } else {
        let bits = bits_per_index(k) as usize;
        for i in 0..n {
            let base = i * per_vec * 8;
            for j in 0..m {
                let mut v: u32 = 0;
                for t in 0..bits {
                    let pos = base + j * bits + t;
                    if (bytes[pos / 8] >> (pos % 8)) & 1 == 1 {
                        v |= 1 << t;
                    }
                }
                if v as usize >= k {
                    return Err(Error::corrupt(format!("index {v} out of range for k = {k}")));
                }
                data[[i, j]] = v;
            }
        }
    }
    Codes::new(data)
}
