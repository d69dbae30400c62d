//! Exact classical simulation of composite-particle scattering in
//! discretized light-cone quantized φ⁴ theory in 1+1 dimensions.
//!
//! The crate is organized bottom-up:
//!
//! * [`fock`] — Fock states, sectors and their ordered bases;
//! * [`opalg`] — normal-ordered ladder-operator polynomials and their action;
//! * [`hamiltonian`] — the light-cone Hamiltonian and sector matrices;
//! * [`spectral`] — diagonalization, modal matrices, matrix log/exp, propagation;
//! * [`ucc`] — fitting a unitary-coupled-cluster generator to the modal matrices;
//! * [`scatter`] — composite state preparation, evolution and observables;
//! * [`cli`] — the command-line driver.

pub mod cli;
pub mod error;
pub mod fock;
pub mod hamiltonian;
pub mod opalg;
pub mod scatter;
pub mod spectral;
pub mod ucc;

pub use error::{Error, ErrorKind, Result};
pub use fock::{FockState, Parity, SectorBasis};
pub use hamiltonian::ModelParams;
pub use opalg::{Monomial, MonomialKey, OperatorPolynomial, SectorMatrix, SectorVector};
