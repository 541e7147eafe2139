//! Approximate coordinate processes and realized quadratic variation.
//!
//! Given `(κ̂, η̂)` the projection of the observed field onto `e_{k,ℓ}` in
//! the weighted inner product is approximated by the Riemann sum
//!
//! `x̂_{k,ℓ}(t̃) = (2/M) Σ_{j₁=1}^{M₁} Σ_{j₂=1}^{M₂} X(t̃, y_{j₁}, z_{j₂}) sin(πk y_{j₁}) sin(πℓ z_{j₂}) e^{κ̂y_{j₁}/2} e^{η̂z_{j₂}/2}`
//!
//! with `M = M₁M₂`, on the coarse time grid `t̃_i = ⌊N/n⌋ i/N`. When
//! `⌊N/n⌋ n < N` the observations after `t̃_n` are not used.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::Mode;
use crate::simulator::FieldSample;
use crate::special::{sin_pi_ratio, CompensatedSum};

/// Coarse time grid `t̃_i = stride · i / N`, `stride = ⌊N/n⌋`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeThinning {
    /// Native resolution `N`.
    pub resolution: usize,
    pub n: usize,
    pub stride: usize,
    /// Native time indices `stride · i`.
    pub indices: Vec<usize>,
    pub points: Vec<f64>,
}

impl TimeThinning {
    /// Effective horizon `t̃_n`.
    pub fn horizon(&self) -> f64 {
        *self.points.last().expect("n + 1 >= 2 points")
    }
}

pub fn build_time_thinning(resolution: usize, n: usize) -> Result<TimeThinning> {
    if n == 0 || n > resolution {
        return Err(invalid(format!("time thinning needs 1 <= n <= N, got n={n}, N={resolution}")));
    }
    let stride = resolution / n;
    let indices: Vec<usize> = (0..=n).map(|i| stride * i).collect();
    let points = indices.iter().map(|&i| i as f64 / resolution as f64).collect();
    Ok(TimeThinning { resolution, n, stride, indices, points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxCoordinatePath {
    pub mode: Mode,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub kappa_used: f64,
    pub eta_used: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolatilityEstimate {
    pub mode: Mode,
    pub value: f64,
    pub n_used: usize,
}

/// Modes needed by every plug-in estimator.
pub const DEFAULT_MODES: [Mode; 2] = [Mode { k: 1, l: 1 }, Mode { k: 1, l: 2 }];

pub fn approx_coordinate(
    field: &FieldSample,
    mode: Mode,
    kappa_hat: f64,
    eta_hat: f64,
    tt: &TimeThinning,
) -> Result<ApproxCoordinatePath> {
    let g = field.grid();
    if tt.resolution != g.n {
        return Err(Error::GridMismatch(format!("time thinning built for N={}, field has N={}", tt.resolution, g.n)));
    }
    let (m1, m2) = (g.m1 as u64, g.m2 as u64);
    let wy: Vec<f64> = (0..=g.m1)
        .map(|j| if j == 0 { 0.0 } else { sin_pi_ratio(mode.k as u64, j as u64, m1) * (0.5 * kappa_hat * g.y(j)).exp() })
        .collect();
    let wz: Vec<f64> = (0..=g.m2)
        .map(|j| if j == 0 { 0.0 } else { sin_pi_ratio(mode.l as u64, j as u64, m2) * (0.5 * eta_hat * g.z(j)).exp() })
        .collect();
    let norm = 2.0 / (g.m1 as f64 * g.m2 as f64);
    let values = tt
        .indices
        .par_iter()
        .map(|&i| {
            let slice = field.time_slice(i);
            let mut acc = CompensatedSum::new();
            for (j1, row) in slice.outer_iter().enumerate().skip(1) {
                let inner: f64 = row.iter().zip(&wz).skip(1).map(|(x, w)| x * w).sum();
                acc.add(wy[j1] * inner);
            }
            norm * acc.value()
        })
        .collect();
    Ok(ApproxCoordinatePath { mode, times: tt.points.clone(), values, kappa_used: kappa_hat, eta_used: eta_hat })
}

/// Reconstructs several modes at once.
pub fn approx_coordinates(
    field: &FieldSample,
    modes: &[Mode],
    kappa_hat: f64,
    eta_hat: f64,
    tt: &TimeThinning,
) -> Result<Vec<ApproxCoordinatePath>> {
    modes.iter().map(|&m| approx_coordinate(field, m, kappa_hat, eta_hat, tt)).collect()
}

/// Sum of squared increments of `values`.
pub fn realized_qv_of(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).powi(2)).collect::<CompensatedSum>().value()
}

pub fn realized_qv(path: &ApproxCoordinatePath) -> VolatilityEstimate {
    VolatilityEstimate {
        mode: path.mode,
        value: realized_qv_of(&path.values),
        n_used: path.values.len().saturating_sub(1),
    }
}

/// Two-column CSV `t,value`.
pub fn write_path_csv<W: Write>(mut w: W, path: &ApproxCoordinatePath) -> Result<()> {
    writeln!(w, "t,value")?;
    for (t, v) in path.times.iter().zip(&path.values) {
        writeln!(w, "{t},{v}")?;
    }
    Ok(())
}
