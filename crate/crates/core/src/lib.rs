//! Boundary control and estimation for the coupled reaction-diffusion system
//!
//! ```text
//! u_t = u_xx + λ₁ v,    v_t = v_xx + λ₂ u,    x ∈ [0, 1]
//! w_x(0, t) = 0,        w(1, t) = U(t)
//! ```
//!
//! The crate computes the backstepping kernels of the controller, of its
//! inverse transformation and of the anti-collocated and collocated boundary
//! observers by successive approximation of the equivalent Volterra integral
//! equations ([`goursat`], [`kernels`]). The resulting gains drive a
//! θ-scheme simulator of the plant and observers ([`sim`]); [`analysis`]
//! provides the norms, decay fits and residual checks used to verify the
//! closed loops.

pub mod analysis;
pub mod config;
pub mod error;
pub mod goursat;
pub mod grid;
pub mod io;
pub mod kernels;
mod mat2;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
