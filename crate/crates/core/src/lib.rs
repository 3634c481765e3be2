//! Frequency-box normal-form machinery for the one-dimensional cubic
//! Schrödinger equation `i u_t - u_xx ± |u|^2 u = 0`.
//!
//! The crate is organised bottom-up:
//!
//! * [`spectral`]: periodic grid, unitary DFT, free propagator.
//! * [`modulation`]: box projections and modulation-space norms.
//! * [`resonance`]: phase arithmetic, divisor counting, frequency-set enumeration.
//! * [`trees`]: ordered trees with chronicles and index functions.
//! * [`multilinear`]: brute-force evaluation of the tree-indexed operators.
//! * [`normal_form`]: resonant/non-resonant splits, the partial-sum map and the Picard solver.
//! * [`harness`]: split-step reference solver, certification checks, experiments.

pub mod error;
pub mod harness;
pub mod modulation;
pub mod multilinear;
pub mod normal_form;
pub mod resonance;
pub mod spectral;
pub mod trees;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
