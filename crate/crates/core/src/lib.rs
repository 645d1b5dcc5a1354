//! Tree-tensor-network simulation of magnon scattering and false-vacuum decay
//! in the two-dimensional transverse-field Ising model, with an exact
//! diagonalization reference for small lattices.

extern crate blas_src;

pub mod ed;
pub mod env;
pub mod error;
pub mod ising;
pub mod krylov;
pub mod lattice;
pub mod measure;
pub mod observables;
pub mod operators;
pub mod runner;
pub mod snapshot;
pub mod sum;
pub mod tdvp;
pub mod validate;
pub mod tensor;
pub mod ttn;
pub mod wavepacket;

pub use error::{Error, Result};
