//! Quantized cat maps at Planck constant `1/p`.
//!
//! The crate realizes the Weyl operators and the Weil representation of
//! SL_2(F_p) on C^p, builds the Hecke torus of a hyperbolic `A` in SL_2(Z)
//! together with its joint eigenvectors, and evaluates the twisted trace
//! sums `a_chi = sum_{B in T_A} Tr(rho(B) pi(xi)) chi(B)` whose size governs
//! the rate of Hecke equidistribution.

pub mod classical;
pub mod error;
pub mod exp_sums;
pub mod ff;
pub mod harness;
pub mod hecke;
pub mod parallel;
pub mod quantization;

pub use error::{Error, Result};
