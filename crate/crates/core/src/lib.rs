//! Coarse-grained measurements on single- and two-mode bosonic states.
//!
//! The crate covers the full pipeline from truncated Fock-space states
//! through the two coarse-graining channels (finite outcome *resolution*,
//! Gaussian-smeared measurement *reference*) to the quantities used to
//! diagnose non-classicality of the post-measurement states:
//!
//! * [`fockspace`] — state constructors, cut observables `O^k`, subspace
//!   rotations `U(θ)`, and a displaced-parity Wigner oracle.
//! * [`coarse`] — discrete Gaussian resolution weights, smeared harmonics,
//!   and the non-selective measurement channels with their closed forms.
//! * [`bell`] — CHSH quantities `B_δ` and `B_Δ` plus the angle maximizer.
//! * [`phasespace`] — analytic Wigner bases for cat / NOON / photon-added
//!   squeezed-vacuum families, two-mode assembly, and the symbolic
//!   P-distribution calculus with exact moments.
//! * [`negativity`] — phase-space negativity by 2D/4D quadrature, the sharp
//!   measurement map `N_km`, and the resolution mixture formula.

pub mod bell;
pub mod coarse;
pub mod error;
pub mod fockspace;
pub mod negativity;
pub mod phasespace;
pub mod special;

pub use error::{Error, Result};
