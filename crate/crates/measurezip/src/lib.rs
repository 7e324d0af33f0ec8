//! Surface meshes as kernel measures, with subset-based compression and
//! desk-scale geodesic shape matching.
//!
//! The pipeline: a triangle mesh becomes a discrete measure (one Dirac atom
//! per triangle, as a current or a varifold); a reproducing-kernel dual
//! norm turns differences of measures into computable numbers; a small
//! control subset of atoms, chosen by leverage-score or determinantal
//! sampling, carries a projected copy of the full measure whose quality is
//! certified by a Nystrom trace bound; and the compressed measure drives
//! kernel geodesic registration at a fraction of the dense cost.

pub mod cli;
pub mod compress;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod mesh;
pub mod measures;
pub mod nystrom;
pub mod registration;
pub mod rng;

#[cfg(test)]
pub(crate) mod test_util;

pub use error::{Error, Result};
