//! Simulation and coefficient estimation for linear parabolic SPDEs on the
//! unit square driven by damped (Q-) Wiener noise.
//!
//! The pipeline, one module per stage:
//!
//! 1. [`model`]: parameters, eigenvalues and eigenfunctions of the drift
//!    operator.
//! 2. [`simulator`]: exact Ornstein–Uhlenbeck sampling of the spectral
//!    coordinates and synthesis of the observed field.
//! 3. [`increments`]: the squared-increment statistic `Z_N` on an interior
//!    sub-grid, with exact and asymptotic formulas for its mean.
//! 4. [`contrast`]: minimum-contrast fit of `(scale, κ, η)`.
//! 5. [`reconstruction`]: approximate coordinate processes and their
//!    realized quadratic variation.
//! 6. [`plugin`]: closed-form recovery of all coefficients and the
//!    asymptotic covariance matrices.
//! 7. [`harness`]: configuration, seeded Monte Carlo, summary tables and
//!    cross-sections.
//!
//! ```
//! use spde2d::model::{ModelParams, Mode};
//!
//! let p = ModelParams::reference();
//! let l11 = p.eigenvalue(Mode::new(1, 1).unwrap());
//! assert!((l11 - 4.0478).abs() < 1e-4);
//! ```

pub mod contrast;
pub mod error;
pub mod field_io;
pub mod harness;
pub mod increments;
pub mod model;
pub mod plugin;
pub mod reconstruction;
pub mod rng;
pub mod simulator;
pub mod special;

pub use error::{Error, Result};
pub use model::{Mode, ModelParams, NoiseKind};
pub use rng::RngSeed;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/increments.md")]
    mod increments {}
    #[doc = include_str!("../../../book/src/contrast.md")]
    mod contrast {}
    #[doc = include_str!("../../../book/src/reconstruction.md")]
    mod reconstruction {}
    #[doc = include_str!("../../../book/src/plugins.md")]
    mod plugins {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
