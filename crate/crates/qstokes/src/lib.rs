//! Local analytic invariants of linear q-difference systems with integral
//! slopes.
//!
//! The library computes, for a system `sigma_q X = A X` given in block
//! upper-triangular standard form:
//!
//! - the formal unipotent gauge conjugating the graded (block-diagonal)
//!   system to the full one, and its q-Gevrey growth level;
//! - theta-weighted directional summations of that gauge, meromorphic with
//!   poles confined to a prescribed q-spiral;
//! - Stokes matrices (ambiguities between two summation directions) and
//!   their logarithms;
//! - q-alien derivations as residues of the Stokes family over the elliptic
//!   curve of directions, with level and eigenvalue-class spectral
//!   decompositions and the pure-group (torus, unipotent, character)
//!   actions;
//! - the inverse reconstruction of a system from its graded part plus alien
//!   derivation targets, level by level.
//!
//! The crate is organized bottom-up: `matrix`/`eig`/`sylvester`/`nilpotent`
//! form the dense complex kernel, `series` and `theta` the function layer,
//! `qsystem` the objects and their tannakian operations, `summation` and
//! `galois` the analytic machinery, `reconstruction` the inverse problem.
//! `spec_file`, `config`, `cli` and `check` serve the command-line front
//! end; see the `examples/` directory for runnable walkthroughs of each
//! capability.

pub mod error;
pub mod matrix;
pub mod eig;
pub mod sylvester;
pub mod nilpotent;
pub mod structure;
pub mod series;
pub mod theta;
pub mod qsystem;
pub mod summation;
pub mod galois;
pub mod reconstruction;
pub mod config;
pub mod spec_file;
pub mod corpus;
pub mod check;

pub use error::{Error, Result};
pub use matrix::{C64, CMatrix};
pub use series::{ScaledCoefficientTrack, TruncatedLaurentSeries};
pub use structure::BlockStructure;
pub use theta::ThetaContext;
