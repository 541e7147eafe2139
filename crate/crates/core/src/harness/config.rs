//! Experiment configuration.
//!
//! A config is a single TOML document. Every table is optional and falls
//! back to the desk-scale default:
//!
//! ```toml
//! kind = "q1"              # "q1", "q2-known-mu0" or "q2-unknown-mu0"
//! replications = 25
//! seed = 20240601
//!
//! [params]                 # mu0 is optional and only used by the q2 kinds
//! theta0 = 0.0
//! theta1 = 0.2
//! eta1 = 0.2
//! theta2 = 0.2
//! sigma = 1.0
//! alpha = 0.5
//! mu0 = 0.0
//!
//! [grid]                   # t_i = i/n, y_j = j/m1, z_j = j/m2
//! n = 1000
//! m1 = 50
//! m2 = 50
//!
//! [truncation]             # spectral cutoffs K, L
//! k = 256
//! l = 256
//!
//! [thinning]
//! mbar1 = 6                # coarse space grid, before keeping [delta, 1-delta]
//! mbar2 = 6
//! delta = 0.05
//! n = 100                  # coarse time grid for the volatility stage
//!
//! [contrast]
//! scale = { lo = 1e-3, hi = 1e3 }
//! kappa = { lo = -20.0, hi = 20.0 }
//! eta = { lo = -20.0, hi = 20.0 }
//! init_grid = [5, 5]
//! max_iter = 500
//! grad_tol = 1e-10
//! step_tol = 1e-12
//!
//! [exponents]              # only used for the reported rate diagnostics
//! rho = 0.47
//! gamma = 0.26
//! epsilon = 0.499
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contrast::ContrastConfig;
use crate::error::{Error, Result};
use crate::increments::{build_space_thinning, SpaceThinning};
use crate::model::{ModelParams, NoiseKind};
use crate::reconstruction::{build_time_thinning, TimeThinning};
use crate::rng::RngSeed;
use crate::simulator::{SpaceTimeGrid, TruncationSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThinningConfig {
    pub mbar1: usize,
    pub mbar2: usize,
    pub delta: f64,
    pub n: usize,
}

impl Default for ThinningConfig {
    fn default() -> Self {
        Self { mbar1: 6, mbar2: 6, delta: 0.05, n: 100 }
    }
}

/// Rate exponents `(ρ, γ, ε)`; they do not affect any estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exponents {
    pub rho: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl Default for Exponents {
    fn default() -> Self {
        Self { rho: 0.47, gamma: 0.26, epsilon: 0.499 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: NoiseKind,
    pub replications: usize,
    pub seed: RngSeed,
    pub params: ModelParams,
    pub grid: SpaceTimeGrid,
    pub truncation: TruncationSpec,
    pub thinning: ThinningConfig,
    pub contrast: ContrastConfig,
    pub exponents: Exponents,
}

impl Default for ExperimentConfig {
    /// Desk scale: `N = 1000`, `M₁ = M₂ = 50`, `K = L = 256`, 5×5 interior
    /// points, `n = 100`, 25 replications at the reference parameters.
    fn default() -> Self {
        Self {
            kind: NoiseKind::Q1,
            replications: 25,
            seed: RngSeed::default(),
            params: ModelParams::reference(),
            grid: SpaceTimeGrid { n: 1000, m1: 50, m2: 50 },
            truncation: TruncationSpec { k: 256, l: 256 },
            thinning: ThinningConfig::default(),
            contrast: ContrastConfig::default(),
            exponents: Exponents::default(),
        }
    }
}

/// A config whose derived grids have been built.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub space: SpaceThinning,
    pub time: TimeThinning,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.prepare()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Checks every invariant and builds the space and time thinning.
    pub fn prepare(&self) -> Result<Prepared> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        let g = SpaceTimeGrid::new(self.grid.n, self.grid.m1, self.grid.m2)?;
        TruncationSpec::new(self.truncation.k, self.truncation.l)?;
        self.contrast.validate()?;
        let t = &self.thinning;
        let space = build_space_thinning(g.m1, g.m2, t.mbar1, t.mbar2, t.delta)?;
        let time = build_time_thinning(g.n, t.n)?;
        Ok(Prepared { space, time })
    }
}
