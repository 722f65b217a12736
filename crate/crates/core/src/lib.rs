//! Numerical laboratory for adiabatic evolution when the tracked eigenvalue is embedded in, or touches, the rest of the spectrum.
//!
//! The crate propagates slowly driven quantum systems, builds regularized
//! solutions of the commutator equation `[Ṗ, P] = [H, X] + Y`, certifies the
//! resulting error bounds, and measures adiabatic convergence rates on a zoo
//! of gapped, crossing and gapless (Friedrichs) models.

pub mod cli;
pub mod commutator;
pub mod error;
pub mod families;
pub mod operators;
pub mod propagation;
pub mod rates;
pub mod spectral;

pub use error::{Error, Result};
