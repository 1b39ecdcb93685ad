#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Finite-volume laboratory for the disordered Hubbard model in the
//! Hartree–Fock approximation.
//!
//! The crate solves the self-consistent effective-potential equation on finite
//! lattice boxes and measures localization and density-of-states quantities on
//! the resulting random Schrödinger operators.

pub mod error;
pub mod model;
pub mod spectral;
pub mod scf;
pub mod stats;
pub mod response;
pub mod ensemble;
pub mod observables;
pub mod oned;
pub mod ids;
pub mod harness;
mod special;

pub use error::{Error, Result};
