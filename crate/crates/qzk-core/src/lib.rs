//! Exact simulation of encoded QMA verifiers, Feynman–Kitaev history Hamiltonians,
//! locally simulable Steane encodings and quantum Merkle-tree commitments.
//!
//! `no_std` with `alloc`. Qubit 0 is always the most significant bit of a basis label.
#![no_std]
extern crate alloc;

pub mod linalg;
pub mod qsim;
pub mod haar;
pub mod qsat;
pub mod clockham;
pub mod steane;
pub mod merkle;
pub mod zkproto;
pub mod encver;
pub mod fixtures;

pub use num_complex::Complex64 as C64;
