//! Closed-form plug-in estimators and asymptotic covariance matrices.
//!
//! Q1 uses the contrast triple `(ŝ, κ̂, η̂)` and the realized volatilities
//! of modes (1,1) and (1,2), `σ̂²_{1,ℓ} ≈ σ² λ_{1,ℓ}^{-α}`. Since
//! `λ_{1,2} - λ_{1,1} = 3π²θ₂`, the difference of their `-1/α` powers
//! isolates `θ₂`. Q2 works the same way with `μ_{1,ℓ}` in place of
//! `λ_{1,ℓ}`, which no longer involves `θ₂`, so the scale `S` is needed to
//! get at `θ₂`.
//!
//! Sampling noise can put the two volatilities in the wrong order, which
//! makes the base of a fractional power non-positive. That is reported as a
//! [`PluginFailure`], never clamped.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Mode, ModelParams, NoiseKind};

const PI2: f64 = PI * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PluginFailure {
    /// The (1,2) volatility is not below the (1,1) volatility.
    OrderingViolation,
    /// An input that must be positive is not.
    NonpositiveBase,
    /// The formulas produced a non-finite or inadmissible value.
    OutOfDomain,
}

impl PluginFailure {
    pub fn as_str(self) -> &'static str {
        match self {
            PluginFailure::OrderingViolation => "ordering-violation",
            PluginFailure::NonpositiveBase => "nonpositive-base",
            PluginFailure::OutOfDomain => "out-of-domain",
        }
    }
}

impl std::fmt::Display for PluginFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A complete set of plug-in estimates. `theta0` and `lambda11_hat` are
/// present for Q1 only, `mu0` for Q2 only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PluginEstimates {
    pub case: NoiseKind,
    pub theta0: Option<f64>,
    pub theta1: f64,
    pub eta1: f64,
    pub theta2: f64,
    pub sigma2: f64,
    pub mu0: Option<f64>,
    pub lambda11_hat: Option<f64>,
}

impl PluginEstimates {
    /// Parameters implied by the estimates, for evaluating covariances at
    /// estimated rather than true values. A missing `θ₀` is taken as 0.
    pub fn to_params(&self, alpha: f64) -> Result<ModelParams> {
        let p = ModelParams::new(self.theta0.unwrap_or(0.0), self.theta1, self.eta1, self.theta2, self.sigma2.sqrt(), alpha)?;
        match self.mu0 {
            Some(mu0) => p.with_mu0(mu0),
            None => Ok(p),
        }
    }
}

pub type PluginOutcome = std::result::Result<PluginEstimates, PluginFailure>;

fn positive(xs: &[f64]) -> std::result::Result<(), PluginFailure> {
    if xs.iter().all(|x| x.is_finite() && *x > 0.0) {
        Ok(())
    } else {
        Err(PluginFailure::NonpositiveBase)
    }
}

fn finite(xs: &[f64]) -> std::result::Result<(), PluginFailure> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(PluginFailure::OutOfDomain)
    }
}

/// `x^p` for `x > 0`, via `exp(p ln x)`.
fn pow(x: f64, p: f64) -> f64 {
    (p * x.ln()).exp()
}

/// Q1 plug-in from `(ŝ, κ̂, η̂)` and the realized volatilities of modes
/// (1,1) and (1,2).
pub fn q1_plugin(s_hat: f64, kappa_hat: f64, eta_hat: f64, sig11: f64, sig12: f64, alpha: f64) -> PluginOutcome {
    positive(&[s_hat, sig11, sig12])?;
    finite(&[kappa_hat, eta_hat])?;
    let inv = -1.0 / alpha;
    let (a, b) = (pow(sig11, inv), pow(sig12, inv));
    if !(b > a) {
        return Err(PluginFailure::OrderingViolation);
    }
    let base = 3.0 * PI2 / (pow(s_hat, 1.0 / alpha) * (b - a));
    if !(base.is_finite() && base > 0.0) {
        return Err(PluginFailure::OutOfDomain);
    }
    let theta2 = pow(base, alpha / (1.0 - alpha));
    let sigma2 = s_hat * theta2;
    let lambda11 = pow(sigma2 / sig11, 1.0 / alpha);
    let theta0 = -lambda11 + ((kappa_hat * kappa_hat + eta_hat * eta_hat) / 4.0 + 2.0 * PI2) * theta2;
    let out = PluginEstimates {
        case: NoiseKind::Q1,
        theta0: Some(theta0),
        theta1: kappa_hat * theta2,
        eta1: eta_hat * theta2,
        theta2,
        sigma2,
        mu0: None,
        lambda11_hat: Some(lambda11),
    };
    finite(&[theta0, out.theta1, out.eta1, theta2, sigma2, lambda11])?;
    if !(theta2 > 0.0 && sigma2 > 0.0) {
        return Err(PluginFailure::OutOfDomain);
    }
    Ok(out)
}

/// Q2 plug-in with known `μ₀`, from `(Š, κ̌, η̌)` and the realized
/// volatility of mode (1,1).
pub fn q2_known_plugin(big_s_hat: f64, kappa_hat: f64, eta_hat: f64, qv11: f64, mu0: f64, alpha: f64) -> PluginOutcome {
    positive(&[big_s_hat, qv11, 2.0 * PI2 + mu0])?;
    finite(&[kappa_hat, eta_hat])?;
    let mu11 = 2.0 * PI2 + mu0;
    let sigma2 = pow(mu11, alpha) * qv11;
    q2_finish(big_s_hat, kappa_hat, eta_hat, sigma2, mu0, alpha, NoiseKind::Q2KnownMu0)
}

/// Q2 plug-in with unknown `μ₀`, from `(S̄, κ̄, η̄)` and the realized
/// volatilities of modes (1,1) and (1,2).
pub fn q2_unknown_plugin(big_s_hat: f64, kappa_hat: f64, eta_hat: f64, tau11: f64, tau12: f64, alpha: f64) -> PluginOutcome {
    positive(&[big_s_hat, tau11, tau12])?;
    finite(&[kappa_hat, eta_hat])?;
    let inv = -1.0 / alpha;
    let (a, b) = (pow(tau11, inv), pow(tau12, inv));
    if !(b > a) {
        return Err(PluginFailure::OrderingViolation);
    }
    let mu11 = 3.0 * PI2 * a / (b - a);
    if !(mu11.is_finite() && mu11 > 0.0) {
        return Err(PluginFailure::OutOfDomain);
    }
    let sigma2 = pow(3.0 * PI2 / (b - a), alpha);
    q2_finish(big_s_hat, kappa_hat, eta_hat, sigma2, mu11 - 2.0 * PI2, alpha, NoiseKind::Q2UnknownMu0)
}

fn q2_finish(big_s: f64, kappa: f64, eta: f64, sigma2: f64, mu0: f64, alpha: f64, case: NoiseKind) -> PluginOutcome {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(PluginFailure::OutOfDomain);
    }
    let theta2 = pow(sigma2 / big_s, 1.0 / (1.0 - alpha));
    let out = PluginEstimates {
        case,
        theta0: None,
        theta1: kappa * theta2,
        eta1: eta * theta2,
        theta2,
        sigma2,
        mu0: Some(mu0),
        lambda11_hat: None,
    };
    finite(&[out.theta1, out.eta1, theta2, mu0])?;
    if !(theta2 > 0.0) {
        return Err(PluginFailure::OutOfDomain);
    }
    Ok(out)
}

/// Dispatches on `kind`. `vol12` is ignored for the known-`μ₀` case.
pub fn plugin_for(kind: NoiseKind, scale: f64, kappa: f64, eta: f64, vol11: f64, vol12: f64, mu0: f64, alpha: f64) -> PluginOutcome {
    match kind {
        NoiseKind::Q1 => q1_plugin(scale, kappa, eta, vol11, vol12, alpha),
        NoiseKind::Q2KnownMu0 => q2_known_plugin(scale, kappa, eta, vol11, mu0, alpha),
        NoiseKind::Q2UnknownMu0 => q2_unknown_plugin(scale, kappa, eta, vol11, vol12, alpha),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovarianceKind {
    J,
    K,
    L,
}

/// Asymptotic covariance of the plug-in estimators.
///
/// Parameter order: `(θ₀, θ₁, η₁, θ₂, σ²)` for J, `(θ₁, η₁, θ₂, σ²)` for K,
/// `(μ₀, θ₁, η₁, θ₂, σ²)` for L. `constants` holds `(c₁, c₂, c₃)` for J,
/// `(d₁, d₂, d₃)` for L and is empty for K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceMatrix {
    pub which: CovarianceKind,
    pub entries: Vec<Vec<f64>>,
    pub constants: Vec<f64>,
}

impl CovarianceMatrix {
    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.entries[i][j])
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Number of eigenvalues above `rel_tol` times the largest in magnitude.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let ev = self.eigenvalues();
        let max = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ev.iter().filter(|v| v.abs() > rel_tol * max).count()
    }

    pub fn is_psd(&self, rel_tol: f64) -> bool {
        let ev = self.eigenvalues();
        let max = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ev[0] >= -rel_tol * max
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.entries[i][j] - self.entries[j][i]).abs());
            }
        }
        worst
    }
}

/// `[[a, b vᵀ], [b v, c v vᵀ]]` scaled by `pref`.
fn bordered(pref: f64, a: f64, b: f64, c: f64, v: &[f64; 4]) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; 5]; 5];
    m[0][0] = pref * a;
    for i in 0..4 {
        m[0][i + 1] = pref * b * v[i];
        m[i + 1][0] = m[0][i + 1];
        for j in i..4 {
            m[i + 1][j + 1] = pref * c * v[i] * v[j];
            m[j + 1][i + 1] = m[i + 1][j + 1];
        }
    }
    m
}

/// Asymptotic covariance of the Q1 plug-in estimators at `params`.
#[allow(non_snake_case)]
pub fn covariance_J(params: &ModelParams) -> CovarianceMatrix {
    let alpha = params.alpha();
    let l11 = params.eigenvalue(Mode { k: 1, l: 1 });
    let l12 = params.eigenvalue(Mode { k: 1, l: 2 });
    let t0 = params.theta0() / (1.0 - alpha);
    let a = l12 / alpha - t0;
    let b = l11 / alpha - t0;
    let (l11s, l12s) = (l11 * l11, l12 * l12);
    let c1 = l11s * a * a + l12s * b * b;
    let c2 = -(l11s * a + l12s * b) / (1.0 - alpha);
    let c3 = (l11s + l12s) / (1.0 - alpha).powi(2);
    let theta2 = params.theta2();
    let pref = 2.0 / (9.0 * PI2 * PI2 * theta2 * theta2);
    let v = [params.theta1(), params.eta1(), theta2, params.sigma2()];
    CovarianceMatrix { which: CovarianceKind::J, entries: bordered(pref, c1, c2, c3, &v), constants: vec![c1, c2, c3] }
}

/// Asymptotic covariance of the Q2 known-`μ₀` plug-in estimators.
#[allow(non_snake_case)]
pub fn covariance_K(params: &ModelParams) -> CovarianceMatrix {
    let alpha = params.alpha();
    // ν/(1-α) with ν = (θ₁, η₁, θ₂, (1-α)σ²); the last entry is σ² exactly
    let v = [
        params.theta1() / (1.0 - alpha),
        params.eta1() / (1.0 - alpha),
        params.theta2() / (1.0 - alpha),
        params.sigma2(),
    ];
    let entries = (0..4).map(|i| (0..4).map(|j| 2.0 * v[i.min(j)] * v[i.max(j)]).collect()).collect();
    CovarianceMatrix { which: CovarianceKind::K, entries, constants: Vec::new() }
}

/// Asymptotic covariance of the Q2 unknown-`μ₀` plug-in estimators.
#[allow(non_snake_case)]
pub fn covariance_L(params: &ModelParams) -> CovarianceMatrix {
    let alpha = params.alpha();
    let m11 = params.mu(Mode { k: 1, l: 1 });
    let m12 = params.mu(Mode { k: 1, l: 2 });
    let d1 = 2.0 * (m11 * m12).powi(2) / (alpha * alpha);
    let d2 = m11 * m12 * (m11 + m12) / (alpha * (1.0 - alpha));
    let d3 = (m11 * m11 + m12 * m12) / (1.0 - alpha).powi(2);
    let pref = 2.0 / (9.0 * PI2 * PI2);
    let v = [params.theta1(), params.eta1(), params.theta2(), (1.0 - alpha) * params.sigma2()];
    CovarianceMatrix { which: CovarianceKind::L, entries: bordered(pref, d1, d2, d3, &v), constants: vec![d1, d2, d3] }
}

/// Covariance matching the estimators of `kind`.
pub fn covariance_for(kind: NoiseKind, params: &ModelParams) -> CovarianceMatrix {
    match kind {
        NoiseKind::Q1 => covariance_J(params),
        NoiseKind::Q2KnownMu0 => covariance_K(params),
        NoiseKind::Q2UnknownMu0 => covariance_L(params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mode;
    use rand::{Rng, SeedableRng};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    /// Population inputs `σ² λ_{1,ℓ}^{-α}` or `σ² μ_{1,ℓ}^{-α}`.
    fn population(p: &ModelParams, kind: NoiseKind) -> (f64, f64, f64) {
        let r = p.ratios();
        let a = p.alpha();
        let (d11, d12) = if kind.is_q2() { (p.mu(mode(1, 1)), p.mu(mode(1, 2))) } else { (p.eigenvalue(mode(1, 1)), p.eigenvalue(mode(1, 2))) };
        (r.scale(kind), p.sigma2() * d11.powf(-a), p.sigma2() * d12.powf(-a))
    }

    fn random_params(rng: &mut impl Rng) -> ModelParams {
        loop {
            let p = ModelParams::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.05..2.0),
                rng.random_range(0.2..3.0),
                rng.random_range(0.1..0.9),
            )
            .and_then(|p| p.with_mu0(rng.random_range(-5.0..10.0)));
            if let Ok(p) = p {
                return p;
            }
        }
    }

    fn check_q1(p: &ModelParams) {
        let r = p.ratios();
        let (s, v11, v12) = population(p, NoiseKind::Q1);
        let e = q1_plugin(s, r.kappa, r.eta, v11, v12, p.alpha()).unwrap();
        assert!(rel(e.theta2, p.theta2()) < 1e-10, "{e:?} {p:?}");
        assert!(rel(e.sigma2, p.sigma2()) < 1e-10);
        assert!(rel(e.theta1, p.theta1()) < 1e-10 || (e.theta1 - p.theta1()).abs() < 1e-12);
        assert!(rel(e.eta1, p.eta1()) < 1e-10 || (e.eta1 - p.eta1()).abs() < 1e-12);
        assert!((e.theta0.unwrap() - p.theta0()).abs() < 1e-10 * p.eigenvalue(mode(1, 1)).max(1.0));
        assert_eq!(e.theta1, r.kappa * e.theta2);
        assert_eq!(e.eta1, r.eta * e.theta2);
        assert_eq!(e.sigma2, s * e.theta2);
    }

    fn check_q2(p: &ModelParams) {
        let r = p.ratios();
        let (s, v11, v12) = population(p, NoiseKind::Q2UnknownMu0);
        let e = q2_known_plugin(s, r.kappa, r.eta, v11, p.mu0(), p.alpha()).unwrap();
        assert!(rel(e.sigma2, p.sigma2()) < 1e-10 && rel(e.theta2, p.theta2()) < 1e-10, "{e:?}");
        assert_eq!(e.theta1, r.kappa * e.theta2);
        let e = q2_unknown_plugin(s, r.kappa, r.eta, v11, v12, p.alpha()).unwrap();
        assert!(rel(e.sigma2, p.sigma2()) < 1e-10 && rel(e.theta2, p.theta2()) < 1e-10, "{e:?}");
        assert!((e.mu0.unwrap() - p.mu0()).abs() < 1e-10 * p.mu(mode(1, 1)));
        assert_eq!(e.eta1, r.eta * e.theta2);
    }

    #[test]
    fn reference_round_trips() {
        let p = ModelParams::reference();
        check_q1(&p);
        check_q2(&p);
        let (s, v11, v12) = population(&p, NoiseKind::Q1);
        let e = q1_plugin(s, 1.0, 1.0, v11, v12, 0.5).unwrap();
        assert!(e.theta0.unwrap().abs() < 1e-10);
        assert!(rel(e.lambda11_hat.unwrap(), 4.047_841_760_435_743) < 1e-12);
    }

    #[test]
    fn random_round_trips() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let p = random_params(&mut rng);
            check_q1(&p);
            check_q2(&p);
        }
    }

    #[test]
    fn failures() {
        assert_eq!(q1_plugin(5.0, 1.0, 1.0, 0.3, 0.3, 0.5), Err(PluginFailure::OrderingViolation));
        assert_eq!(q1_plugin(5.0, 1.0, 1.0, 0.3, 0.4, 0.5), Err(PluginFailure::OrderingViolation));
        assert_eq!(q1_plugin(5.0, 1.0, 1.0, 0.0, 0.4, 0.5), Err(PluginFailure::NonpositiveBase));
        assert_eq!(q1_plugin(-1.0, 1.0, 1.0, 0.5, 0.4, 0.5), Err(PluginFailure::NonpositiveBase));
        assert_eq!(q2_unknown_plugin(5.0, 1.0, 1.0, 0.2, 0.2, 0.5), Err(PluginFailure::OrderingViolation));
        assert_eq!(q2_known_plugin(5.0, 1.0, 1.0, 0.1, -2.0 * PI2, 0.5), Err(PluginFailure::NonpositiveBase));
        assert_eq!(q1_plugin(5.0, f64::NAN, 1.0, 0.5, 0.4, 0.5), Err(PluginFailure::OutOfDomain));
    }

    #[test]
    fn q2_known_unit_base_and_linearity() {
        let mu11 = 2.0 * PI2;
        let qv = 0.3;
        let sigma2 = mu11.sqrt() * qv;
        let e = q2_known_plugin(sigma2, 1.0, 1.0, qv, 0.0, 0.5).unwrap();
        assert!((e.theta2 - 1.0).abs() < 1e-15);
        let e2 = q2_known_plugin(1.0, 1.0, 1.0, 4.0 * qv, 0.0, 0.5).unwrap();
        let e1 = q2_known_plugin(1.0, 1.0, 1.0, qv, 0.0, 0.5).unwrap();
        assert!(rel(e2.sigma2, 4.0 * e1.sigma2) < 1e-15);
    }

    #[test]
    fn failure_tags_serialize() {
        assert_eq!(serde_json::to_string(&PluginFailure::OrderingViolation).unwrap(), "\"ordering-violation\"");
        assert_eq!(PluginFailure::OutOfDomain.to_string(), "out-of-domain");
    }

    #[test]
    fn j_reference_values() {
        // scalar arithmetic in mpmath at θ = (0, .2, .2, .2), σ = 1, α = .5
        let j = covariance_J(&ModelParams::reference());
        let c = &j.constants;
        assert!(rel(c[0], 13_028.454_224_452_7) < 1e-12);
        assert!(rel(c[1], -2_262.717_523_649_60) < 1e-12);
        assert!(rel(c[2], 463.112_139_326_991) < 1e-12);
        let e = &j.entries;
        assert!(rel(e[0][0], 743.054_888_189_992_09) < 1e-12);
        assert!(rel(e[0][1], -25.810_019_939_055_682) < 1e-12);
        assert!(rel(e[0][4], -129.050_099_695_278_41) < 1e-12);
        assert!(rel(e[1][1], 1.056_511_334_279_954) < 1e-12);
        assert!(rel(e[1][4], 5.282_556_671_399_770_1) < 1e-12);
        assert!(rel(e[4][4], 26.412_783_356_998_85) < 1e-12);
        assert!(c[0] * c[2] >= c[1] * c[1]);
    }

    #[test]
    fn l_reference_values() {
        let l = covariance_L(&ModelParams::reference());
        let d = &l.constants;
        assert!(rel(d[0], 7_590_824.812_856_459_2) < 1e-12);
        assert!(rel(d[1], 269_188.974_201_085_24) < 1e-12);
        assert!(rel(d[2], 11_299.454_559_944_283) < 1e-12);
        assert!(d[0] * d[2] >= d[1] * d[1]);
    }

    #[test]
    fn structure_at_reference_and_random_params() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut all = vec![ModelParams::reference()];
        all.extend((0..50).map(|_| random_params(&mut rng)));
        for p in &all {
            let (j, k, l) = (covariance_J(p), covariance_K(p), covariance_L(p));
            for m in [&j, &k, &l] {
                assert_eq!(m.max_asymmetry(), 0.0);
                assert!(m.is_psd(1e-8), "{:?} {:?}", m.which, m.eigenvalues());
            }
            assert!(j.rank(1e-10) <= 2 && l.rank(1e-10) <= 2);
            assert_eq!(k.rank(1e-10), 1);
            assert_eq!(k.entries[3][3], 2.0 * p.sigma2() * p.sigma2());
        }
    }

    #[test]
    fn k_scales_quadratically() {
        let p = ModelParams::reference();
        let q = ModelParams::new(0.0, 0.6, 0.6, 0.6, 3f64.sqrt(), 0.5).unwrap();
        let (a, b) = (covariance_K(&p), covariance_K(&q));
        for i in 0..4 {
            for j in 0..4 {
                assert!(rel(b.entries[i][j], 9.0 * a.entries[i][j]) < 1e-14);
            }
        }
    }

    #[test]
    fn estimates_back_to_params() {
        let p = ModelParams::reference();
        let (s, v11, v12) = population(&p, NoiseKind::Q1);
        let e = q1_plugin(s, 1.0, 1.0, v11, v12, 0.5).unwrap();
        let back = e.to_params(0.5).unwrap();
        assert!(rel(covariance_J(&back).entries[0][0], covariance_J(&p).entries[0][0]) < 1e-9);
    }
}
