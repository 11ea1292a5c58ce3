//! Block (s-step) GMRES with classical and modified block Arnoldi,
//! polynomial Krylov bases and per-iteration numerical diagnostics.

pub mod arnoldi;
pub mod basis;
pub mod cli;
pub mod dense;
pub mod diagnostics;
pub mod error;
pub mod gmres;
pub mod orth;
pub mod rng;
pub mod sparse;

pub use error::{Error, Result};
