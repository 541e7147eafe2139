//! Model parameterization and the eigen-structure of the drift operator.
//!
//! The field lives on the unit square `D = (0,1)²` with Dirichlet boundary
//! and is driven by
//!
//! ```text
//! dX_t = (θ₂ ΔX_t + θ₁ ∂_y X_t + η₁ ∂_z X_t + θ₀ X_t) dt + σ dW_t^Q
//! ```
//!
//! The operator `-A_θ` on the right has eigenpairs `(λ_{k,ℓ}, e_{k,ℓ})`
//! indexed by [`Mode`]; everything downstream is expressed in that basis.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::special::{gamma, sin_pi};

const PI2: f64 = PI * PI;

/// Lower bound (exclusive) on `μ₀`: `μ_{1,1} = 2π² + μ₀` must stay positive.
pub const MU0_LOWER: f64 = -2.0 * PI2;

/// Which Q-Wiener process drives the equation, and for `Q2` whether the
/// shift `μ₀` is treated as known during estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// Damping `λ_{k,ℓ}^{-α/2}`.
    Q1,
    /// Damping `μ_{k,ℓ}^{-α/2}`, `μ₀` supplied to the estimator.
    #[serde(rename = "q2-known-mu0")]
    Q2KnownMu0,
    /// Damping `μ_{k,ℓ}^{-α/2}`, `μ₀` estimated.
    #[serde(rename = "q2-unknown-mu0")]
    Q2UnknownMu0,
}

impl NoiseKind {
    pub fn is_q2(self) -> bool {
        !matches!(self, NoiseKind::Q1)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::Q1 => "q1",
            NoiseKind::Q2KnownMu0 => "q2-known-mu0",
            NoiseKind::Q2UnknownMu0 => "q2-unknown-mu0",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q1" | "Q1" => Ok(NoiseKind::Q1),
            "q2-known-mu0" | "q2-known" => Ok(NoiseKind::Q2KnownMu0),
            "q2-unknown-mu0" | "q2-unknown" => Ok(NoiseKind::Q2UnknownMu0),
            other => Err(invalid(format!("unknown noise kind `{other}`"))),
        }
    }
}

/// Spectral index `(k, ℓ)`, both at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mode {
    pub k: u32,
    pub l: u32,
}

impl Mode {
    pub fn new(k: u32, l: u32) -> Result<Self> {
        if k == 0 || l == 0 {
            return Err(invalid(format!("mode indices must be >= 1, got ({k}, {l})")));
        }
        Ok(Self { k, l })
    }

    /// `k² + ℓ²` as a float.
    pub fn norm_sq(self) -> f64 {
        let (k, l) = (self.k as f64, self.l as f64);
        k * k + l * l
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.k, self.l)
    }
}

/// Shorthand for modes known to be valid at compile time.
pub(crate) const fn mode(k: u32, l: u32) -> Mode {
    Mode { k, l }
}

/// Coefficient vector `(θ₀, θ₁, η₁, θ₂, σ, α, μ₀)`.
///
/// Validated once in [`ModelParams::new`]; every other function assumes
/// the invariants hold. `μ₀` is only read for the `Q2` noise kinds and
/// defaults to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    theta0: f64,
    theta1: f64,
    eta1: f64,
    theta2: f64,
    sigma: f64,
    alpha: f64,
    mu0: f64,
}

#[derive(Deserialize)]
struct RawParams {
    theta0: f64,
    theta1: f64,
    eta1: f64,
    theta2: f64,
    sigma: f64,
    alpha: f64,
    #[serde(default)]
    mu0: f64,
}

impl<'de> Deserialize<'de> for ModelParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = RawParams::deserialize(d)?;
        ModelParams::new(r.theta0, r.theta1, r.eta1, r.theta2, r.sigma, r.alpha)
            .and_then(|p| p.with_mu0(r.mu0))
            .map_err(serde::de::Error::custom)
    }
}

impl ModelParams {
    pub fn new(theta0: f64, theta1: f64, eta1: f64, theta2: f64, sigma: f64, alpha: f64) -> Result<Self> {
        let all = [theta0, theta1, eta1, theta2, sigma, alpha];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(invalid("parameters must be finite"));
        }
        if theta2 <= 0.0 {
            return Err(invalid(format!("theta2 must be > 0, got {theta2}")));
        }
        if sigma < 0.0 {
            return Err(invalid(format!("sigma must be >= 0, got {sigma}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let p = Self { theta0, theta1, eta1, theta2, sigma, alpha, mu0: 0.0 };
        let l11 = p.eigenvalue(mode(1, 1));
        if l11 <= 0.0 {
            return Err(invalid(format!("lambda(1,1) must be > 0, got {l11}")));
        }
        Ok(p)
    }

    /// Sets the `Q2` shift `μ₀`; requires `μ₀ > -2π²`.
    pub fn with_mu0(mut self, mu0: f64) -> Result<Self> {
        if !mu0.is_finite() || mu0 <= MU0_LOWER {
            return Err(invalid(format!("mu0 must exceed -2π² ≈ {MU0_LOWER:.6}, got {mu0}")));
        }
        self.mu0 = mu0;
        Ok(self)
    }

    /// Same coefficients with a different noise amplitude.
    pub fn with_sigma(self, sigma: f64) -> Result<Self> {
        Self::new(self.theta0, self.theta1, self.eta1, self.theta2, sigma, self.alpha)?.with_mu0(self.mu0)
    }

    /// Same coefficients with a different damping exponent.
    pub fn with_alpha(self, alpha: f64) -> Result<Self> {
        Self::new(self.theta0, self.theta1, self.eta1, self.theta2, self.sigma, alpha)?.with_mu0(self.mu0)
    }

    /// `(θ₀, θ₁, η₁, θ₂, σ) = (0, 0.2, 0.2, 0.2, 1)`, `α = 0.5`, `μ₀ = 0`:
    /// the configuration used for the reference Monte Carlo tables.
    pub fn reference() -> Self {
        Self::new(0.0, 0.2, 0.2, 0.2, 1.0, 0.5).expect("reference parameters are valid")
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }
    pub fn theta1(&self) -> f64 {
        self.theta1
    }
    pub fn eta1(&self) -> f64 {
        self.eta1
    }
    pub fn theta2(&self) -> f64 {
        self.theta2
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn ratios(&self) -> DerivedRatios {
        DerivedRatios::from_params(self)
    }

    /// `λ_{k,ℓ} = -θ₀ + (θ₁² + η₁²)/(4θ₂) + π²(k² + ℓ²)θ₂`.
    pub fn eigenvalue(&self, m: Mode) -> f64 {
        self.eigenvalue_offset() + PI2 * m.norm_sq() * self.theta2
    }

    /// The mode-independent part `-θ₀ + (θ₁² + η₁²)/(4θ₂)`.
    pub(crate) fn eigenvalue_offset(&self) -> f64 {
        -self.theta0 + (self.theta1 * self.theta1 + self.eta1 * self.eta1) / (4.0 * self.theta2)
    }

    /// `μ_{k,ℓ}` at this parameter set's `μ₀`.
    pub fn mu(&self, m: Mode) -> f64 {
        PI2 * m.norm_sq() + self.mu0
    }
}

/// Ratios identified by the increment statistic: `κ = θ₁/θ₂`,
/// `η = η₁/θ₂`, `s = σ²/θ₂` (Q1 scale) and `S = σ²/θ₂^{1-α}` (Q2 scale).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedRatios {
    pub kappa: f64,
    pub eta: f64,
    pub s: f64,
    #[serde(rename = "S")]
    pub big_s: f64,
}

impl DerivedRatios {
    pub fn from_params(p: &ModelParams) -> Self {
        Self {
            kappa: p.theta1 / p.theta2,
            eta: p.eta1 / p.theta2,
            s: p.sigma2() / p.theta2,
            big_s: p.sigma2() / p.theta2.powf(1.0 - p.alpha),
        }
    }

    /// The scale parameter fitted by the contrast for `kind`.
    pub fn scale(&self, kind: NoiseKind) -> f64 {
        if kind.is_q2() {
            self.big_s
        } else {
            self.s
        }
    }
}

/// `λ_{k,ℓ}` for `params`.
pub fn eigenvalue(m: Mode, params: &ModelParams) -> f64 {
    params.eigenvalue(m)
}

/// `μ_{k,ℓ} = π²(k² + ℓ²) + μ₀`; rejects `μ₀ ≤ -2π²`.
pub fn mu_value(m: Mode, mu0: f64) -> Result<f64> {
    if !mu0.is_finite() || mu0 <= MU0_LOWER {
        return Err(invalid(format!("mu0 must exceed -2π², got {mu0}")));
    }
    Ok(PI2 * m.norm_sq() + mu0)
}

/// `e_{k,ℓ}(y,z) = 2 sin(πky) sin(πℓz) e^{-κy/2} e^{-ηz/2}`, exactly zero
/// on the boundary of the unit square.
pub fn eigenfunction(m: Mode, y: f64, z: f64, params: &ModelParams) -> f64 {
    let r = params.ratios();
    let sy = sin_pi(m.k as f64 * y);
    let sz = sin_pi(m.l as f64 * z);
    if sy == 0.0 || sz == 0.0 {
        return 0.0;
    }
    2.0 * sy * sz * (-0.5 * r.kappa * y).exp() * (-0.5 * r.eta * z).exp()
}

/// Per-mode damping of the driving noise: `λ_{k,ℓ}^{-α/2}` for Q1,
/// `μ_{k,ℓ}^{-α/2}` for Q2.
pub fn damping_factor(kind: NoiseKind, m: Mode, params: &ModelParams) -> f64 {
    let base = if kind.is_q2() { params.mu(m) } else { params.eigenvalue(m) };
    base.powf(-0.5 * params.alpha)
}

/// `Γ(1-α)/(4πα)`, the constant in front of the asymptotic increment mean.
pub fn contrast_constant(alpha: f64) -> f64 {
    gamma(1.0 - alpha) / (4.0 * PI * alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_eigenvalue() {
        let p = ModelParams::reference();
        let l11 = eigenvalue(mode(1, 1), &p);
        // 0.08/0.8 + 2π²·0.2
        assert!((l11 - 4.047_841_760_435_743).abs() < 1e-13);
        assert_eq!((l11 * 100.0).round() / 100.0, 4.05);
    }

    #[test]
    fn drift_free_unit_diffusivity() {
        let p = ModelParams::new(0.0, 0.0, 0.0, 1.0, 1.0, 0.5).unwrap();
        assert!((eigenvalue(mode(1, 1), &p) - 2.0 * PI2).abs() < 1e-13);
    }

    #[test]
    fn eigen_gap_is_three_pi_sq_theta2() {
        for &(t0, t1, e1, t2) in &[(0.0, 0.2, 0.2, 0.2), (1.5, -3.0, 0.7, 2.5), (-4.0, 0.0, 9.0, 0.05)] {
            let p = ModelParams::new(t0, t1, e1, t2, 1.0, 0.4).unwrap();
            let gap = p.eigenvalue(mode(1, 2)) - p.eigenvalue(mode(1, 1));
            let want = 3.0 * PI2 * t2;
            assert!((gap - want).abs() / want < 1e-12);
        }
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(ModelParams::new(0.0, 0.0, 0.0, 0.0, 1.0, 0.5).is_err());
        assert!(ModelParams::new(0.0, 0.0, 0.0, 1.0, -1.0, 0.5).is_err());
        assert!(ModelParams::new(0.0, 0.0, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(0.0, 0.0, 0.0, 1.0, 1.0, 0.0).is_err());
        // λ_{1,1} = -θ₀ + 2π² ≤ 0
        assert!(ModelParams::new(2.0 * PI2, 0.0, 0.0, 1.0, 1.0, 0.5).is_err());
        assert!(ModelParams::reference().with_mu0(MU0_LOWER).is_err());
    }

    #[test]
    fn mu_values() {
        assert!((mu_value(mode(1, 1), 0.0).unwrap() - 2.0 * PI2).abs() < 1e-13);
        let mu0 = 1.7;
        let d = mu_value(mode(1, 2), mu0).unwrap() - mu_value(mode(1, 1), mu0).unwrap();
        assert!((d - 3.0 * PI2).abs() < 1e-12);
        let v = mu_value(mode(1, 1), MU0_LOWER + 0.1).unwrap();
        assert!((v - 0.1).abs() < 1e-12);
        assert!(mu_value(mode(1, 1), MU0_LOWER).is_err());
    }

    #[test]
    fn eigenfunction_values() {
        let p = ModelParams::new(0.0, 0.0, 0.0, 1.0, 1.0, 0.5).unwrap();
        assert!((eigenfunction(mode(1, 1), 0.5, 0.5, &p) - 2.0).abs() < 1e-15);
        let p = ModelParams::new(0.0, 0.3, 0.3, 0.3, 1.0, 0.5).unwrap();
        // 2 e^{-1/2}
        let want = 1.213_061_319_425_266_8;
        assert!((eigenfunction(mode(1, 1), 0.5, 0.5, &p) - want).abs() < 1e-14);
    }

    #[test]
    fn damping_values() {
        let p = ModelParams::new(0.0, 0.0, 0.0, 1.0 / (2.0 * PI2), 1.0, 0.5).unwrap();
        // λ_{1,1} = 1
        assert!((damping_factor(NoiseKind::Q1, mode(1, 1), &p) - 1.0).abs() < 1e-14);
        let p = ModelParams::reference();
        let l11 = p.eigenvalue(mode(1, 1));
        assert!((damping_factor(NoiseKind::Q1, mode(1, 1), &p) - l11.powf(-0.25)).abs() < 1e-15);
        // 4.0478^{-1/4}, from mpmath
        assert!((4.0478f64.powf(-0.25) - 0.705_009_937_226_484).abs() < 1e-14);
        // (2π²)^{-1/4}, from mpmath
        let q2 = damping_factor(NoiseKind::Q2KnownMu0, mode(1, 1), &p);
        assert!((q2 - 0.474_424_998_328_794_3).abs() < 1e-14);
    }

    #[test]
    fn contrast_constant_half() {
        // Γ(1/2)/(2π) = 1/(2√π)
        assert!((contrast_constant(0.5) - 0.282_094_791_773_878_14).abs() < 1e-14);
    }

    #[test]
    fn discrete_weighted_orthonormality() {
        let p = ModelParams::reference();
        let r = p.ratios();
        let m = 400usize;
        let h = 1.0 / m as f64;
        let modes: Vec<Mode> = (1..=4).flat_map(|k| (1..=4).map(move |l| mode(k, l))).collect();
        for &a in &modes {
            for &b in &modes {
                let mut acc = 0.0;
                for j1 in 1..m {
                    let y = j1 as f64 * h;
                    for j2 in 1..m {
                        let z = j2 as f64 * h;
                        acc += eigenfunction(a, y, z, &p)
                            * eigenfunction(b, y, z, &p)
                            * (r.kappa * y).exp()
                            * (r.eta * z).exp();
                    }
                }
                let v = acc * h * h;
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 2e-2, "{a} {b}: {v}");
            }
        }
    }

    #[test]
    fn ratio_round_trip() {
        let p = ModelParams::new(0.3, -0.7, 1.1, 0.37, 1.3, 0.6).unwrap();
        let r = p.ratios();
        let q = ModelParams::new(0.3, r.kappa * p.theta2(), r.eta * p.theta2(), p.theta2(), (r.s * p.theta2()).sqrt(), 0.6)
            .unwrap();
        let r2 = q.ratios();
        assert!((r2.kappa - r.kappa).abs() <= f64::EPSILON * r.kappa.abs() * 2.0);
        assert!((r2.eta - r.eta).abs() <= f64::EPSILON * r.eta.abs() * 2.0);
        assert!((r2.s - r.s).abs() <= f64::EPSILON * r.s * 4.0);
    }

    fn arb_params() -> impl Strategy<Value = ModelParams> {
        (-2.0..2.0f64, -3.0..3.0f64, -3.0..3.0f64, 0.05..3.0f64, 0.1..3.0f64, 0.05..0.95f64)
            .prop_filter_map("valid", |(t0, t1, e1, t2, s, a)| ModelParams::new(t0, t1, e1, t2, s, a).ok())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn boundary_vanishes(p in arb_params(), k in 1u32..200, l in 1u32..200, t in 0.0..1.0f64) {
            let m = mode(k, l);
            prop_assert_eq!(eigenfunction(m, 0.0, t, &p), 0.0);
            prop_assert_eq!(eigenfunction(m, 1.0, t, &p), 0.0);
            prop_assert_eq!(eigenfunction(m, t, 0.0, &p), 0.0);
            prop_assert_eq!(eigenfunction(m, t, 1.0, &p), 0.0);
        }

        #[test]
        fn eigenvalue_and_damping_monotone(p in arb_params(), k in 1u32..500, l in 1u32..500) {
            let m = mode(k, l);
            prop_assert!(p.eigenvalue(mode(k + 1, l)) > p.eigenvalue(m));
            prop_assert!(p.eigenvalue(mode(k, l + 1)) > p.eigenvalue(m));
            for kind in [NoiseKind::Q1, NoiseKind::Q2KnownMu0] {
                prop_assert!(damping_factor(kind, mode(k + 1, l), &p) < damping_factor(kind, m, &p));
                prop_assert!(damping_factor(kind, mode(k, l + 1), &p) < damping_factor(kind, m, &p));
            }
        }
    }
}
