//! Blind fault diagnosis for millimeter-wave antenna arrays.
//!
//! A faulty array element shows up as a sparse additive deviation `h_f` on top
//! of an angularly sparse channel `h`. Given only random analog-combined
//! measurements `y = F (h + h_f) + w`, [`solver::diagnose`] jointly recovers
//! both: `h` under the atomic norm over the continuous steering-vector
//! dictionary (via its Toeplitz SDP lift) and `h_f` under the l1 norm, using
//! ADMM.
//!
//! CSI-dependent reference schemes and a grid-discretized variant live in
//! [`baselines`]; [`harness`] runs seeded Monte Carlo sweeps over them.

pub mod array_model;
pub mod baselines;
pub mod detection;
pub mod error;
pub mod harness;
pub mod selftest;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;
