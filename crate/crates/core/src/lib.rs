//! Factorization of N×N unitary matrices into interlaced diagonal phase
//! layers and one-parameter propagators of a fixed lattice Hamiltonian,
//! with a damped least-squares fitter, a numeric Lie-closure probe, and an
//! ideal transfer-matrix model of a three-port all-optical logic gate.

pub mod error;
pub mod factorization;
pub mod gate;
pub mod lattice;
pub mod numerics;
pub mod optimizer;
pub mod sampling;
pub mod universality;

pub use error::{Error, Result};
