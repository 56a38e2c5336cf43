//! Trained-model container and the `VQM1` on-disk format.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic    4 bytes  "VQM1"
//! variant  u8       0 pq, 1 ckm, 2 cq, 3 ocq, 4 nocq, 5 snocq
//! m, k, d  u32 each
//! epsilon  f64
//! storage  u8       0 dense, 1 sparse
//!   dense:  m·k·d f64, row-major [m][k][d]
//!   sparse: u64 count, then count × (u32 flat index ascending, f64 value)
//! rotation u8       0 absent, 1 present, followed by d·d f64 row-major
//! ```
//!
//! The in-memory training log is a diagnostic and is not serialized.
//! Everything that is serialized round-trips bit-exactly, including negative
//! zeros in sparse storage (presence is decided on the bit pattern).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, Array3};

use crate::baselines::Rotation;
use crate::error::{Error, Result};
use crate::quant::CodebookSet;

/// Which trainer produced a model. Search treats all variants uniformly; the
/// tag drives storage choices and reporting only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Pq,
    Ckm,
    Cq,
    Ocq,
    Nocq,
    Snocq,
}

impl Variant {
    fn tag(self) -> u8 {
        match self {
            Variant::Pq => 0,
            Variant::Ckm => 1,
            Variant::Cq => 2,
            Variant::Ocq => 3,
            Variant::Nocq => 4,
            Variant::Snocq => 5,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => Variant::Pq,
            1 => Variant::Ckm,
            2 => Variant::Cq,
            3 => Variant::Ocq,
            4 => Variant::Nocq,
            5 => Variant::Snocq,
            other => return Err(Error::format(format!("unknown variant tag {other}"))),
        })
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Variant::Pq => "pq",
            Variant::Ckm => "ckm",
            Variant::Cq => "cq",
            Variant::Ocq => "ocq",
            Variant::Nocq => "nocq",
            Variant::Snocq => "snocq",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pq" => Variant::Pq,
            "ckm" => Variant::Ckm,
            "cq" => Variant::Cq,
            "ocq" => Variant::Ocq,
            "nocq" => Variant::Nocq,
            "snocq" => Variant::Snocq,
            other => return Err(Error::invalid(format!("unknown variant {other:?}"))),
        })
    }
}

/// One outer training iteration: total objective, its reconstruction part,
/// and a variant-specific constraint residual (cross-term penalty for the
/// near-orthogonality trainers, dictionary coherence for the orthogonal one,
/// zero where no constraint exists).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainRecord {
    pub objective: f64,
    pub quant_error: f64,
    pub constraint_residual: f64,
}

/// A trained quantizer: dictionaries plus the cross-term constant ε scans
/// may assume, and the rotation for models trained in a rotated space.
#[derive(Debug, Clone)]
pub struct QuantizerModel {
    pub variant: Variant,
    pub codebooks: CodebookSet,
    pub epsilon: f64,
    pub rotation: Option<Rotation>,
    pub train_log: Vec<TrainRecord>,
}

impl QuantizerModel {
    pub fn new(
        variant: Variant,
        codebooks: CodebookSet,
        epsilon: f64,
        rotation: Option<Rotation>,
        train_log: Vec<TrainRecord>,
    ) -> Result<Self> {
        if !epsilon.is_finite() {
            return Err(Error::invalid("epsilon must be finite"));
        }
        if let Some(rot) = &rotation {
            if rot.dim() != codebooks.dim() {
                return Err(Error::invalid("rotation dimension does not match codebooks"));
            }
        }
        Ok(QuantizerModel { variant, codebooks, epsilon, rotation, train_log })
    }

    pub fn m(&self) -> usize {
        self.codebooks.m()
    }

    pub fn k(&self) -> usize {
        self.codebooks.k()
    }

    pub fn dim(&self) -> usize {
        self.codebooks.dim()
    }

    /// Code length in bits: `M · ceil(log2 K)`.
    pub fn bits_per_vector(&self) -> usize {
        let k = self.k();
        let bits = usize::BITS - (k - 1).max(1).leading_zeros();
        self.m() * bits as usize
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Writes one `VQM1` block to an open stream, so models can be embedded
    /// in larger containers.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(b"VQM1")?;
        w.write_u8(self.variant.tag())?;
        w.write_u32::<LittleEndian>(self.m() as u32)?;
        w.write_u32::<LittleEndian>(self.k() as u32)?;
        w.write_u32::<LittleEndian>(self.dim() as u32)?;
        w.write_f64::<LittleEndian>(self.epsilon)?;

        let tensor = self.codebooks.tensor();
        let total = tensor.len();
        let nonzero: Vec<(u32, f64)> = tensor
            .iter()
            .enumerate()
            .filter(|(_, v)| v.to_bits() != 0)
            .map(|(i, v)| (i as u32, *v))
            .collect();
        // Sparse storage pays 12 bytes per entry against 8 per dense slot.
        let sparse = self.variant == Variant::Snocq && nonzero.len() * 12 < total * 8;
        if sparse {
            w.write_u8(1)?;
            w.write_u64::<LittleEndian>(nonzero.len() as u64)?;
            for (idx, v) in &nonzero {
                w.write_u32::<LittleEndian>(*idx)?;
                w.write_f64::<LittleEndian>(*v)?;
            }
        } else {
            w.write_u8(0)?;
            for v in tensor.iter() {
                w.write_f64::<LittleEndian>(*v)?;
            }
        }

        match &self.rotation {
            Some(rot) => {
                w.write_u8(1)?;
                for v in rot.matrix().iter() {
                    w.write_f64::<LittleEndian>(*v)?;
                }
            }
            None => w.write_u8(0)?,
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let mut r = BufReader::new(file);
        let model = Self::read_from(&mut r)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::format(format!("{} trailing bytes after model", rest.len())));
        }
        Ok(model)
    }

    /// Reads one `VQM1` block, leaving the stream at the byte past it.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::format("model file shorter than its magic"))?;
        if &magic != b"VQM1" {
            return Err(Error::format(format!("bad magic {magic:?}, expected VQM1")));
        }
        let variant = Variant::from_tag(r.read_u8()?)?;
        let m = r.read_u32::<LittleEndian>()? as usize;
        let k = r.read_u32::<LittleEndian>()? as usize;
        let d = r.read_u32::<LittleEndian>()? as usize;
        if m == 0 || k == 0 || d == 0 {
            return Err(Error::format("model header has a zero dimension"));
        }
        let epsilon = r.read_f64::<LittleEndian>()?;
        if !epsilon.is_finite() {
            return Err(Error::format("epsilon is not finite"));
        }
        let total = m
            .checked_mul(k)
            .and_then(|v| v.checked_mul(d))
            .ok_or_else(|| Error::format("model shape overflows"))?;
        let mut flat = vec![0.0f64; total];
        match r.read_u8()? {
            0 => {
                for slot in flat.iter_mut() {
                    *slot = r.read_f64::<LittleEndian>()?;
                }
            }
            1 => {
                let nnz = r.read_u64::<LittleEndian>()? as usize;
                if nnz > total {
                    return Err(Error::format(format!("{nnz} nonzeros exceed {total} slots")));
                }
                let mut prev: Option<u32> = None;
                for _ in 0..nnz {
                    let idx = r.read_u32::<LittleEndian>()?;
                    if idx as usize >= total {
                        return Err(Error::format(format!("sparse index {idx} out of range")));
                    }
                    if prev.is_some_and(|p| p >= idx) {
                        return Err(Error::format("sparse indices must strictly ascend"));
                    }
                    prev = Some(idx);
                    flat[idx as usize] = r.read_f64::<LittleEndian>()?;
                }
            }
            other => return Err(Error::format(format!("unknown storage tag {other}"))),
        }
        let tensor = Array3::from_shape_vec((m, k, d), flat)
            .map_err(|e| Error::format(e.to_string()))?;
        let codebooks = CodebookSet::new(tensor).map_err(|e| Error::format(e.to_string()))?;

        let rotation = match r.read_u8()? {
            0 => None,
            1 => {
                let mut flat = vec![0.0f64; d * d];
                for slot in flat.iter_mut() {
                    *slot = r.read_f64::<LittleEndian>()?;
                }
                let matrix = Array2::from_shape_vec((d, d), flat)
                    .map_err(|e| Error::format(e.to_string()))?;
                Some(Rotation::new(matrix).map_err(|e| Error::format(e.to_string()))?)
            }
            other => return Err(Error::format(format!("unknown rotation tag {other}"))),
        };
        QuantizerModel::new(variant, codebooks, epsilon, rotation, Vec::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::Rng;

    fn tmp() -> tempfile::TempPath {
        tempfile::Builder::new().suffix(".vqm1").tempfile().unwrap().into_temp_path()
    }

    fn random_model(variant: Variant, seed: u64) -> QuantizerModel {
        let mut rng = crate::rng::stream_rng(seed, "model-test");
        let tensor = Array3::from_shape_fn((3, 4, 5), |_| rng.random::<f64>() - 0.5);
        QuantizerModel::new(
            variant,
            CodebookSet::new(tensor).unwrap(),
            0.125,
            None,
            vec![TrainRecord { objective: 2.0, quant_error: 1.5, constraint_residual: 0.5 }],
        )
        .unwrap()
    }

    #[test]
    fn dense_roundtrip_is_bit_exact() {
        let model = random_model(Variant::Nocq, 1);
        let path = tmp();
        model.write(&path).unwrap();
        let back = QuantizerModel::read(&path).unwrap();
        assert_eq!(back.variant, Variant::Nocq);
        assert_eq!(back.epsilon.to_bits(), model.epsilon.to_bits());
        for (a, b) in back.codebooks.tensor().iter().zip(model.codebooks.tensor().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(back.rotation.is_none());
        assert!(back.train_log.is_empty(), "the log is not serialized");
    }

    #[test]
    fn sparse_roundtrip_preserves_negative_zero() {
        let mut tensor = Array3::zeros((2, 3, 4));
        tensor[[0, 1, 2]] = 1.5;
        tensor[[1, 2, 0]] = -2.5;
        tensor[[1, 0, 3]] = -0.0;
        let model = QuantizerModel::new(
            Variant::Snocq,
            CodebookSet::new(tensor).unwrap(),
            -0.25,
            None,
            Vec::new(),
        )
        .unwrap();
        let path = tmp();
        model.write(&path).unwrap();
        let back = QuantizerModel::read(&path).unwrap();
        for (a, b) in back.codebooks.tensor().iter().zip(model.codebooks.tensor().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // Sparse storage must actually have been chosen: 3 entries in 24 slots.
        assert!(std::fs::metadata(&path).unwrap().len() < (4 + 1 + 12 + 8 + 1 + 24 * 8 + 1));
    }

    #[test]
    fn rotation_roundtrips() {
        let mut model = random_model(Variant::Ckm, 2);
        model.rotation = Some(Rotation::identity(5));
        let path = tmp();
        model.write(&path).unwrap();
        let back = QuantizerModel::read(&path).unwrap();
        assert_eq!(back.rotation.unwrap().matrix(), &ndarray::Array2::eye(5));
    }

    #[test]
    fn reader_rejects_corruption() {
        let model = random_model(Variant::Pq, 3);
        let path = tmp();
        model.write(&path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        assert!(matches!(QuantizerModel::read(&path), Err(Error::Format(_))));

        let mut bad_variant = good.clone();
        bad_variant[4] = 99;
        std::fs::write(&path, &bad_variant).unwrap();
        assert!(matches!(QuantizerModel::read(&path), Err(Error::Format(_))));

        std::fs::write(&path, &good[..good.len() - 3]).unwrap();
        assert!(QuantizerModel::read(&path).is_err());

        let mut trailing = good.clone();
        trailing.extend_from_slice(&[0, 1, 2]);
        std::fs::write(&path, &trailing).unwrap();
        assert!(matches!(QuantizerModel::read(&path), Err(Error::Format(_))));
    }

    #[test]
    fn bits_per_vector_follows_code_width() {
        let model = random_model(Variant::Pq, 4);
        assert_eq!(model.bits_per_vector(), 3 * 2);
        let mut rng = crate::rng::stream_rng(5, "model-test");
        let tensor = Array3::from_shape_fn((4, 256, 2), |_| rng.random::<f64>());
        let wide = QuantizerModel::new(
            Variant::Pq,
            CodebookSet::new(tensor).unwrap(),
            0.0,
            None,
            Vec::new(),
        )
        .unwrap();
        assert_eq!(wide.bits_per_vector(), 32);
    }
}
