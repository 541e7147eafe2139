//! Space thinning, the normalized squared-increment statistic `Z_N`, and
//! the exact and asymptotic formulas for its mean.

use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{contrast_constant, ModelParams, NoiseKind};
use crate::simulator::{FieldSample, TruncationSpec};
use crate::special::{sin_pi, CompensatedSum};

/// Thinned interior points along one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisThinning {
    /// Full-grid resolution `M`.
    pub resolution: usize,
    /// Coarse count `m̄`.
    pub coarse: usize,
    /// Offset `J`: the last coarse index with `ȳ_J < δ`.
    pub offset: usize,
    /// Indices into the full grid, `⌊M/m̄⌋ (J + j)` for `j = 1..=m`.
    pub indices: Vec<usize>,
    /// The points themselves, `indices[j] / M`.
    pub points: Vec<f64>,
}

impl AxisThinning {
    fn build(resolution: usize, coarse: usize, delta: f64) -> Result<Self> {
        if coarse == 0 || coarse > resolution {
            return Err(invalid(format!("coarse count must lie in 1..={resolution}, got {coarse}")));
        }
        let step = resolution / coarse;
        let at = |j: usize| (step * j) as f64 / resolution as f64;
        let upper = 1.0 - delta;
        let offset = (0..=coarse).take_while(|&j| at(j) < delta).last().unwrap_or(0);
        let indices: Vec<usize> = (offset + 1..=coarse)
            .take_while(|&j| at(j) <= upper)
            .map(|j| step * j)
            .collect();
        if indices.is_empty() {
            return Err(Error::EmptyThinning { delta, upper });
        }
        let points = indices.iter().map(|&i| i as f64 / resolution as f64).collect();
        Ok(Self { resolution, coarse, offset, indices, points })
    }

    /// Interior count `m`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Interior sub-grid `{(ỹ_{j₁}, z̃_{j₂})} ⊂ [δ, 1-δ]²` used by the contrast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceThinning {
    pub delta: f64,
    pub y: AxisThinning,
    pub z: AxisThinning,
}

impl SpaceThinning {
    pub fn m1(&self) -> usize {
        self.y.len()
    }

    pub fn m2(&self) -> usize {
        self.z.len()
    }

    /// `m = m₁ m₂`.
    pub fn m(&self) -> usize {
        self.m1() * self.m2()
    }
}

/// Builds the thinned grid `ỹ_{j} = ⌊M₁/m̄₁⌋(J₁ + j)/M₁` (and likewise in
/// `z`), keeping every coarse point in `[δ, 1-δ]`.
pub fn build_space_thinning(m1: usize, m2: usize, mbar1: usize, mbar2: usize, delta: f64) -> Result<SpaceThinning> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(invalid(format!("delta must lie in (0, 1/2), got {delta}")));
    }
    Ok(SpaceThinning {
        delta,
        y: AxisThinning::build(m1, mbar1, delta)?,
        z: AxisThinning::build(m2, mbar2, delta)?,
    })
}

/// Smallest coarse count giving exactly `target` interior points, if any.
pub fn coarse_count_for(resolution: usize, target: usize, delta: f64) -> Option<usize> {
    (1..=resolution).find(|&c| AxisThinning::build(resolution, c, delta).map(|a| a.len() == target).unwrap_or(false))
}

/// `Z_N(ỹ, z̃) = (1/(N Δ_N^α)) Σ_{i=1}^N (X_{t_i} - X_{t_{i-1}})²` on the
/// thinned points, indexed `[j₁, j₂]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredIncrementField {
    pub values: Array2<f64>,
    pub alpha: f64,
    pub n: usize,
}

pub fn squared_increment_field(field: &FieldSample, thin: &SpaceThinning, alpha: f64) -> Result<SquaredIncrementField> {
    let g = field.grid();
    if thin.y.resolution != g.m1 || thin.z.resolution != g.m2 {
        return Err(Error::GridMismatch(format!(
            "thinning built for M = ({}, {}), field has ({}, {})",
            thin.y.resolution, thin.z.resolution, g.m1, g.m2
        )));
    }
    let norm = (g.n as f64).powf(1.0 - alpha);
    let values = Array2::from_shape_fn((thin.m1(), thin.m2()), |(a, b)| {
        let series = field.series(thin.y.indices[a], thin.z.indices[b]);
        let acc: CompensatedSum = series.windows(2).into_iter().map(|w| (w[1] - w[0]).powi(2)).collect();
        acc.value() / norm
    });
    Ok(SquaredIncrementField { values, alpha, n: g.n })
}

/// CSV of `Z_N`: header row `y\z` then the `z̃` values, one row per `ỹ`.
pub fn write_z_csv<W: Write>(mut w: W, z: &SquaredIncrementField, thin: &SpaceThinning) -> Result<()> {
    write!(w, "y\\z")?;
    for p in &thin.z.points {
        write!(w, ",{p}")?;
    }
    writeln!(w)?;
    for (row, y) in z.values.outer_iter().zip(&thin.y.points) {
        write!(w, "{y}")?;
        for v in row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Per-mode volatility base of the oracle: `λ^{1+α}` for Q1, `λ μ^α` for Q2.
fn variance_denominator(params: &ModelParams, kind: NoiseKind, lambda: f64, mu: f64) -> f64 {
    if kind.is_q2() {
        lambda * mu.powf(params.alpha())
    } else {
        lambda.powf(1.0 + params.alpha())
    }
}

/// Exact `E[(Δ_i X)²(y, z)]` for `i = 1..=N` under `ξ = 0`, truncated at
/// the simulator's cutoffs:
///
/// ```text
/// σ² Σ_{k≤K, ℓ≤L} (1 - e^{-λΔ}) / D_{k,ℓ} · (1 - (1 - e^{-λΔ})/2 · e^{-2λ(i-1)Δ}) · e_{k,ℓ}²(y, z)
/// ```
///
/// with `D = λ^{1+α}` (Q1) or `λ μ^α` (Q2). Entry `i-1` of the result is
/// the value at increment `i`.
pub fn expected_squared_increment_series(
    params: &ModelParams,
    kind: NoiseKind,
    n: usize,
    y: f64,
    z: f64,
    trunc: &TruncationSpec,
) -> Vec<f64> {
    let dt = 1.0 / n as f64;
    let r = params.ratios();
    let weight = 4.0 * (-r.kappa * y - r.eta * z).exp();
    let sin_z: Vec<f64> = (1..=trunc.l).map(|l| sin_pi(l as f64 * z).powi(2)).collect();
    let offset = params.eigenvalue_offset();
    let theta2 = params.theta2();
    let pi2 = std::f64::consts::PI.powi(2);
    let per_k: Vec<Vec<f64>> = (1..=trunc.k)
        .into_par_iter()
        .map(|k| {
            let mut acc = vec![0.0; n];
            let sy = sin_pi(k as f64 * y).powi(2);
            if sy == 0.0 {
                return acc;
            }
            for (li, &sz) in sin_z.iter().enumerate() {
                if sz == 0.0 {
                    continue;
                }
                let l = li as f64 + 1.0;
                let nsq = (k as f64).powi(2) + l * l;
                let lambda = offset + pi2 * nsq * theta2;
                let mu = pi2 * nsq + params.mu0();
                let one_minus = -(-lambda * dt).exp_m1();
                let base = one_minus / variance_denominator(params, kind, lambda, mu) * sy * sz;
                for (i, slot) in acc.iter_mut().enumerate() {
                    let decay = (-2.0 * lambda * i as f64 * dt).exp();
                    *slot += base * (1.0 - 0.5 * one_minus * decay);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; n];
    for part in per_k {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    let scale = params.sigma2() * weight;
    total.into_iter().map(|v| v * scale).collect()
}

/// [`expected_squared_increment_series`] at a single increment `i ∈ 1..=N`.
pub fn expected_squared_increment_oracle(
    params: &ModelParams,
    kind: NoiseKind,
    i: usize,
    n: usize,
    y: f64,
    z: f64,
    trunc: &TruncationSpec,
) -> Result<f64> {
    if i == 0 || i > n {
        return Err(invalid(format!("increment index must lie in 1..={n}, got {i}")));
    }
    Ok(expected_squared_increment_series(params, kind, n, y, z, trunc)[i - 1])
}

/// `(1/N) Σ_i E[(Δ_i X)²] / Δ_N^α`, the exact mean of `Z_N` under the
/// truncated model.
pub fn expected_z(params: &ModelParams, kind: NoiseKind, n: usize, y: f64, z: f64, trunc: &TruncationSpec) -> f64 {
    let series = expected_squared_increment_series(params, kind, n, y, z, trunc);
    let sum: CompensatedSum = series.into_iter().collect();
    sum.value() / (n as f64).powf(1.0 - params.alpha())
}

/// Leading term of `E[Z_N]`: `Γ(1-α)/(4πα) · scale · e^{-κy-ηz}` with
/// scale `s = σ²/θ₂` (Q1) or `S = σ²/θ₂^{1-α}` (Q2).
pub fn asymptotic_mean(params: &ModelParams, kind: NoiseKind, y: f64, z: f64) -> f64 {
    let r = params.ratios();
    contrast_constant(params.alpha()) * r.scale(kind) * (-r.kappa * y - r.eta * z).exp()
}
