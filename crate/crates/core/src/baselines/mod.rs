//! Product-structured baselines the composite trainers warm-start from and
//! are measured against.

mod ckm;
mod pq;

pub use ckm::{train_ckm, train_ckm_with_init, CkmOutput, Rotation, RotationInit};
pub use pq::{train_pq, PqOutput, SubspaceLayout};

