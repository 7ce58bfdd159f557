//! Numerics for the readout-resonator leakage-reduction unit (res-LRU).
//!
//! The crate is `no_std` (with `alloc`) so the numerical kernels can be
//! embedded anywhere; file formats, the command line and thread pools live
//! in the `reslru` companion crate.
//!
//! Module map:
//!
//! - [`model`]: transmon-resonator Hamiltonian, exact dressed frame, exact
//!   avoided crossing.
//! - [`swt`]: Schrieffer-Wolff generators, double-dressed Hamiltonian,
//!   effective coupling and the analytic crossing solver.
//! - [`lindblad`]: master-equation dynamics and the characterization runs
//!   (leakage, effective T1/T2/T1 up, long drive, ZZ).
//! - [`optimize`]: critical amplitude, pulse-duration optimization, adaptive
//!   landscape and operating-point selection.
//! - [`markov`]: per-cycle leakage Markov model, qutrit LRU channel and the
//!   Surface-17 leakage Monte Carlo.
//!
//! Internally every frequency is an angular frequency in rad/s and every time
//! is in seconds. Use [`units`] at the boundary.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
#![warn(missing_debug_implementations, rust_2018_idioms)]

extern crate alloc;

pub mod batch;
pub mod error;
pub mod linalg;
pub mod lindblad;
pub mod markov;
pub mod model;
pub mod optimize;
pub mod swt;
pub mod units;

pub use error::Error;
pub use linalg::{CMatrix, C64};
