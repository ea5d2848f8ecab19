//! Numerical laboratory for small-noise SDEs driven by fractional Brownian motion.
//!
//! The crate is organised bottom-up:
//!
//! * [`fracpath`] grid paths, fractional norms, Weyl derivatives and Young integrals
//! * [`fbm`] fBm/BM sampling, the Volterra kernel and Cameron–Martin controls
//! * [`sde`] Euler solvers for single-scale and slow-fast systems
//! * [`averaging`] averaged drift by time averaging or Gauss–Hermite quadrature
//! * [`mdp`] skeleton equations, endpoint rate functions and Monte Carlo checks

pub mod averaging;
pub mod error;
pub mod fbm;
pub mod fracpath;
pub mod mc;
pub mod mdp;
pub mod quad;
pub mod rng;
pub mod sde;
pub mod systems;

pub use error::{Error, Result};
pub use fracpath::GridPath;
