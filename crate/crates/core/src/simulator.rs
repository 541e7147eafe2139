//! Exact spectral simulation of the random field.
//!
//! Each coordinate process `x_{k,ℓ}` is an Ornstein–Uhlenbeck process with
//! rate `λ_{k,ℓ}` and volatility `γ_{k,ℓ} = σ · damping_factor(k,ℓ)`. Paths
//! are sampled with the exact Gaussian transition, so the only
//! approximation left is the spectral cutoff `(K, L)`. The field on the
//! observation lattice is the truncated series
//! `X(t_i, y, z) = Σ_{k≤K} Σ_{ℓ≤L} x_{k,ℓ}(t_i) e_{k,ℓ}(y, z)`.
//!
//! Every mode draws from its own stream ([`RngSeed::mode_stream`]), so a
//! run with larger cutoffs reproduces the paths of every mode it shares
//! with a smaller run.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{damping_factor, Mode, ModelParams, NoiseKind};
use crate::rng::RngSeed;
use crate::special::sin_pi_ratio;

/// Default cap on `K · L · (N + 1)` for [`simulate_coordinate_paths`]
/// (512 MiB of `f64`).
pub const DEFAULT_PATH_BUDGET: usize = 1 << 26;

/// Observation lattice `t_i = i/N`, `y_j = j/M₁`, `z_j = j/M₂` on `[0,1]³`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    pub n: usize,
    pub m1: usize,
    pub m2: usize,
}

impl SpaceTimeGrid {
    pub fn new(n: usize, m1: usize, m2: usize) -> Result<Self> {
        if n == 0 || m1 == 0 || m2 == 0 {
            return Err(invalid(format!("grid sizes must be >= 1, got N={n}, M1={m1}, M2={m2}")));
        }
        Ok(Self { n, m1, m2 })
    }

    /// `Δ_N = 1/N`.
    pub fn dt(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 / self.m1 as f64
    }

    pub fn z(&self, j: usize) -> f64 {
        j as f64 / self.m2 as f64
    }

    /// Shape of the value array, `(N+1, M₁+1, M₂+1)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n + 1, self.m1 + 1, self.m2 + 1)
    }

    pub fn len(&self) -> usize {
        let (a, b, c) = self.shape();
        a * b * c
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Spectral cutoffs `K` (in `y`) and `L` (in `z`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationSpec {
    pub k: u32,
    pub l: u32,
}

impl TruncationSpec {
    pub fn new(k: u32, l: u32) -> Result<Self> {
        if k == 0 || l == 0 {
            return Err(invalid(format!("truncation must be >= 1, got K={k}, L={l}")));
        }
        Ok(Self { k, l })
    }

    pub fn contains(&self, m: Mode) -> bool {
        m.k <= self.k && m.l <= self.l
    }

    pub fn n_modes(&self) -> usize {
        self.k as usize * self.l as usize
    }

    /// All modes in row-major `(k, ℓ)` order.
    pub fn modes(&self) -> impl Iterator<Item = Mode> + '_ {
        (1..=self.k).flat_map(move |k| (1..=self.l).map(move |l| Mode { k, l }))
    }
}

/// Spectral coefficients `⟨ξ, e_{k,ℓ}⟩_θ` of the initial value; missing
/// modes are zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    coefficients: BTreeMap<Mode, f64>,
}

impl InitialCondition {
    /// `ξ ≡ 0`.
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn with(mut self, m: Mode, value: f64) -> Self {
        self.coefficients.insert(m, value);
        self
    }

    pub fn get(&self, m: Mode) -> f64 {
        self.coefficients.get(&m).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.values().all(|&v| v == 0.0)
    }

    fn validate(&self, trunc: &TruncationSpec) -> Result<()> {
        for (m, v) in &self.coefficients {
            if !trunc.contains(*m) {
                return Err(invalid(format!("initial coefficient for {m} lies outside the truncation")));
            }
            if !v.is_finite() {
                return Err(invalid(format!("initial coefficient for {m} is not finite")));
            }
        }
        Ok(())
    }
}

/// Where a field came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub params: ModelParams,
    pub kind: NoiseKind,
    pub truncation: TruncationSpec,
    pub seed: Option<RngSeed>,
}

/// Field values `X(t_i, y_{j₁}, z_{j₂})` on the full observation lattice,
/// indexed `[i, j₁, j₂]`. Boundary rows and columns are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    values: Array3<f64>,
    grid: SpaceTimeGrid,
    provenance: Option<Provenance>,
}

impl FieldSample {
    /// Wraps an externally built array after checking shape, finiteness and
    /// the Dirichlet boundary.
    pub fn from_values(values: Array3<f64>, grid: SpaceTimeGrid) -> Result<Self> {
        let (a, b, c) = grid.shape();
        if values.dim() != (a, b, c) {
            return Err(Error::GridMismatch(format!("array shape {:?} does not match grid {:?}", values.dim(), grid.shape())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("field values must be finite"));
        }
        for slice in values.outer_iter() {
            let edges = [slice.row(0), slice.row(b - 1), slice.column(0), slice.column(c - 1)];
            if edges.iter().any(|e| e.iter().any(|&v| v != 0.0)) {
                return Err(invalid("field must vanish on the spatial boundary"));
            }
        }
        Ok(Self { values, grid, provenance: None })
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance = Some(p);
        self
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    pub fn value(&self, i: usize, j1: usize, j2: usize) -> f64 {
        self.values[[i, j1, j2]]
    }

    /// The spatial slice at time index `i`.
    pub fn time_slice(&self, i: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(Axis(0), i)
    }

    /// The time series at spatial node `(j₁, j₂)`.
    pub fn series(&self, j1: usize, j2: usize) -> ArrayView1<'_, f64> {
        self.values.slice(ndarray::s![.., j1, j2])
    }
}

/// One exact Ornstein–Uhlenbeck step of length `dt` for
/// `dx = -λ x dt + γ dw`:
/// `e^{-λ dt} x + γ √((1 - e^{-2λ dt}) / (2λ)) · noise`.
pub fn ou_transition(x_prev: f64, lambda: f64, gamma: f64, dt: f64, noise: f64) -> f64 {
    (-lambda * dt).exp() * x_prev + gamma * ou_step_sd(lambda, dt) * noise
}

/// Conditional standard deviation of a unit-volatility OU step.
pub fn ou_step_sd(lambda: f64, dt: f64) -> f64 {
    (-(-2.0 * lambda * dt).exp_m1() / (2.0 * lambda)).sqrt()
}

/// Sampled coordinate paths, indexed `[k-1, ℓ-1, i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinatePaths {
    values: Array3<f64>,
    grid: SpaceTimeGrid,
    trunc: TruncationSpec,
}

impl CoordinatePaths {
    pub fn path(&self, m: Mode) -> ArrayView1<'_, f64> {
        self.values.slice(ndarray::s![m.k as usize - 1, m.l as usize - 1, ..])
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn truncation(&self) -> &TruncationSpec {
        &self.trunc
    }

    /// All modes' values at time index `i`, as a `K × L` matrix.
    pub fn at(&self, i: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(Axis(2), i)
    }
}

/// Per-mode sampler state.
struct ModeStepper {
    rng: ChaCha8Rng,
    lambda: f64,
    decay: f64,
    scale: f64,
    x0: f64,
    noise_part: f64,
}

impl ModeStepper {
    fn new(m: Mode, params: &ModelParams, kind: NoiseKind, dt: f64, x0: f64, seed: RngSeed) -> Self {
        let lambda = params.eigenvalue(m);
        let gamma = params.sigma() * damping_factor(kind, m, params);
        Self {
            rng: seed.mode_stream(m),
            lambda,
            decay: (-lambda * dt).exp(),
            scale: gamma * ou_step_sd(lambda, dt),
            x0,
            noise_part: 0.0,
        }
    }

    fn value(&self, t: f64) -> f64 {
        if self.x0 == 0.0 {
            self.noise_part
        } else {
            self.x0 * (-self.lambda * t).exp() + self.noise_part
        }
    }

    fn step(&mut self) {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        self.noise_part = self.decay * self.noise_part + self.scale * z;
    }
}

fn steppers(
    params: &ModelParams,
    kind: NoiseKind,
    grid: &SpaceTimeGrid,
    trunc: &TruncationSpec,
    init: &InitialCondition,
    seed: RngSeed,
) -> Result<Vec<ModeStepper>> {
    init.validate(trunc)?;
    let dt = grid.dt();
    Ok(trunc
        .modes()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|m| ModeStepper::new(m, params, kind, dt, init.get(m), seed))
        .collect())
}

/// Samples all `K · L` coordinate paths at `t_0, …, t_N`.
///
/// Fails with [`Error::MemoryBudget`] when `K · L · (N+1)` exceeds
/// [`DEFAULT_PATH_BUDGET`]; use [`simulate_field`] for large runs.
pub fn simulate_coordinate_paths(
    params: &ModelParams,
    kind: NoiseKind,
    grid: &SpaceTimeGrid,
    trunc: &TruncationSpec,
    init: &InitialCondition,
    seed: RngSeed,
) -> Result<CoordinatePaths> {
    simulate_coordinate_paths_with_budget(params, kind, grid, trunc, init, seed, DEFAULT_PATH_BUDGET)
}

pub fn simulate_coordinate_paths_with_budget(
    params: &ModelParams,
    kind: NoiseKind,
    grid: &SpaceTimeGrid,
    trunc: &TruncationSpec,
    init: &InitialCondition,
    seed: RngSeed,
    budget: usize,
) -> Result<CoordinatePaths> {
    let requested = trunc.n_modes().saturating_mul(grid.n + 1);
    if requested > budget {
        return Err(Error::MemoryBudget { requested, budget });
    }
    let mut states = steppers(params, kind, grid, trunc, init, seed)?;
    let n = grid.n;
    let mut values = Array3::<f64>::zeros((trunc.k as usize, trunc.l as usize, n + 1));
    values
        .as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(n + 1)
        .zip(states.par_iter_mut())
        .for_each(|(path, st)| {
            path[0] = st.value(0.0);
            for (i, slot) in path.iter_mut().enumerate().skip(1) {
                st.step();
                *slot = st.value(grid.t(i));
            }
        });
    Ok(CoordinatePaths { values, grid: *grid, trunc: *trunc })
}

/// Precomputed separable pieces of `e_{k,ℓ}` on the lattice.
struct Synthesis {
    /// `sin(π k y_j)`, shape `(M₁+1) × K`.
    sin_y_t: Array2<f64>,
    /// `sin(π ℓ z_j)`, shape `L × (M₂+1)`.
    sin_z: Array2<f64>,
    /// `2 e^{-κ y_j / 2}`.
    weight_y: Array1<f64>,
    /// `e^{-η z_j / 2}`.
    weight_z: Array1<f64>,
}

impl Synthesis {
    fn new(grid: &SpaceTimeGrid, params: &ModelParams, trunc: &TruncationSpec) -> Self {
        let r = params.ratios();
        let (m1, m2) = (grid.m1 as u64, grid.m2 as u64);
        let sin_y_t = Array2::from_shape_fn((grid.m1 + 1, trunc.k as usize), |(j, k)| sin_pi_ratio(k as u64 + 1, j as u64, m1));
        let sin_z = Array2::from_shape_fn((trunc.l as usize, grid.m2 + 1), |(l, j)| sin_pi_ratio(l as u64 + 1, j as u64, m2));
        let weight_y = Array1::from_shape_fn(grid.m1 + 1, |j| 2.0 * (-0.5 * r.kappa * grid.y(j)).exp());
        let weight_z = Array1::from_shape_fn(grid.m2 + 1, |j| (-0.5 * r.eta * grid.z(j)).exp());
        Self { sin_y_t, sin_z, weight_y, weight_z }
    }

    /// Field slice from the `K × L` matrix of coordinate values.
    fn slice(&self, coords: ArrayView2<'_, f64>) -> Array2<f64> {
        let inner = coords.dot(&self.sin_z);
        let mut out = self.sin_y_t.dot(&inner);
        let (rows, cols) = out.dim();
        for ((j1, j2), v) in out.indexed_iter_mut() {
            if j1 == 0 || j2 == 0 || j1 + 1 == rows || j2 + 1 == cols {
                *v = 0.0;
            } else {
                *v *= self.weight_y[j1] * self.weight_z[j2];
            }
        }
        out
    }
}

/// Evaluates the truncated series on the lattice from stored paths.
pub fn synthesize_field(
    paths: &CoordinatePaths,
    grid: &SpaceTimeGrid,
    params: &ModelParams,
    trunc: &TruncationSpec,
) -> Result<FieldSample> {
    if paths.trunc != *trunc {
        return Err(Error::GridMismatch(format!("paths were sampled with {:?}, synthesis asked for {:?}", paths.trunc, trunc)));
    }
    if paths.grid.n != grid.n {
        return Err(Error::GridMismatch(format!("paths have N={}, grid has N={}", paths.grid.n, grid.n)));
    }
    let syn = Synthesis::new(grid, params, trunc);
    let slices: Vec<Array2<f64>> = (0..=grid.n).into_par_iter().map(|i| syn.slice(paths.at(i))).collect();
    let mut values = Array3::<f64>::zeros(grid.shape());
    for (mut slot, slice) in values.outer_iter_mut().zip(slices) {
        slot.assign(&slice);
    }
    Ok(FieldSample { values, grid: *grid, provenance: None })
}

/// Simulates paths and synthesizes the field one time slice at a time,
/// never holding more than one `K × L` coordinate matrix.
///
/// Bit-identical to `synthesize_field(simulate_coordinate_paths(..))`.
pub fn simulate_field(
    params: &ModelParams,
    kind: NoiseKind,
    grid: &SpaceTimeGrid,
    trunc: &TruncationSpec,
    init: &InitialCondition,
    seed: RngSeed,
) -> Result<FieldSample> {
    let mut states = steppers(params, kind, grid, trunc, init, seed)?;
    let syn = Synthesis::new(grid, params, trunc);
    let mut coords = Array2::<f64>::zeros((trunc.k as usize, trunc.l as usize));
    let mut values = Array3::<f64>::zeros(grid.shape());
    for i in 0..=grid.n {
        let t = grid.t(i);
        coords
            .as_slice_mut()
            .expect("standard layout")
            .par_iter_mut()
            .zip(states.par_iter_mut())
            .for_each(|(c, st)| {
                if i > 0 {
                    st.step();
                }
                *c = st.value(t);
            });
        values.index_axis_mut(Axis(0), i).assign(&syn.slice(coords.view()));
    }
    let provenance = Provenance { params: *params, kind, truncation: *trunc, seed: Some(seed) };
    Ok(FieldSample { values, grid: *grid, provenance: Some(provenance) })
}
