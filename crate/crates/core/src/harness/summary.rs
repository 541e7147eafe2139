use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Exponents, Prepared};
use super::ReplicationRecord;
use crate::model::NoiseKind;
use crate::plugin::PluginEstimates;

/// Realized values of the rate conditions linking `n`, `m`, `N` and `M`.
/// Small values mean the corresponding bias terms are negligible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `n^{1-α} / (m N^{2γ})`.
    pub contrast_ratio: f64,
    /// `n^{2-α} / (m N^{2γ})`.
    pub contrast_ratio_2: f64,
    /// `n^{1-α+ε} / min(M₁, M₂)^{2ε}`.
    pub quadrature_ratio: f64,
    /// `n^{2-α+ε} / min(M₁, M₂)^{2ε}`.
    pub quadrature_ratio_2: f64,
}

impl Diagnostics {
    pub fn compute(alpha: f64, n: usize, m: usize, big_n: usize, m1: usize, m2: usize, exps: &Exponents) -> Self {
        let n = n as f64;
        let denom_c = m as f64 * (big_n as f64).powf(2.0 * exps.gamma);
        let denom_q = (m1.min(m2) as f64).powf(2.0 * exps.epsilon);
        Self {
            contrast_ratio: n.powf(1.0 - alpha) / denom_c,
            contrast_ratio_2: n.powf(2.0 - alpha) / denom_c,
            quadrature_ratio: n.powf(1.0 - alpha + exps.epsilon) / denom_q,
            quadrature_ratio_2: n.powf(2.0 - alpha + exps.epsilon) / denom_q,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub parameter: String,
    #[serde(rename = "true")]
    pub true_value: f64,
    pub mean: f64,
    pub sd: f64,
    /// Replications excluded from this row.
    pub fail_count: usize,
}

impl SummaryRow {
    fn new(parameter: &str, true_value: f64, xs: &[f64], fail_count: usize) -> Self {
        let (mean, sd) = mean_sd(xs);
        Self { parameter: parameter.to_string(), true_value, mean, sd, fail_count }
    }
}

/// Mean and sample standard deviation; the s.d. of a single value is 0 and
/// both are NaN for no values.
fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Means and standard deviations over a Monte Carlo run.
///
/// Contrast rows (`s` or `S`, `kappa`, `eta`) exclude fits that did not
/// converge; plug-in rows exclude replications whose plug-in failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub config: ExperimentConfig,
    pub total: usize,
    /// Replications with a complete plug-in estimate.
    pub successes: usize,
    pub failures: usize,
    pub failure_counts: BTreeMap<String, usize>,
    pub nonconverged_fits: usize,
    pub degenerate: usize,
    /// Time `t̃_n` up to which the volatility stage used the data.
    pub effective_horizon: f64,
    pub diagnostics: Diagnostics,
    pub rows: Vec<SummaryRow>,
    pub records: Vec<ReplicationRecord>,
}

impl SummaryTable {
    /// Builds the table from records sorted by replication index.
    pub fn from_records(config: &ExperimentConfig, prep: &Prepared, records: Vec<ReplicationRecord>) -> Self {
        let p = &config.params;
        let truth = p.ratios();
        let kind = config.kind;

        let fits: Vec<_> = records.iter().map(|r| &r.estimate.fit).filter(|f| f.converged).collect();
        let nonconverged = records.len() - fits.len();
        let col = |f: &dyn Fn(&crate::contrast::MinimumContrastFit) -> f64| fits.iter().map(|x| f(x)).collect::<Vec<_>>();
        let scale_name = if kind.is_q2() { "S" } else { "s" };
        let mut rows = vec![
            SummaryRow::new(scale_name, truth.scale(kind), &col(&|f| f.scale), nonconverged),
            SummaryRow::new("kappa", truth.kappa, &col(&|f| f.kappa_hat), nonconverged),
            SummaryRow::new("eta", truth.eta, &col(&|f| f.eta_hat), nonconverged),
        ];

        let ests: Vec<&PluginEstimates> = records.iter().filter_map(|r| r.estimate.estimates.as_ref()).collect();
        let failures = records.len() - ests.len();
        let pcol = |f: &dyn Fn(&PluginEstimates) -> Option<f64>| ests.iter().filter_map(|e| f(e)).collect::<Vec<_>>();
        let mut plugin_rows: Vec<(&str, f64, Vec<f64>)> = Vec::new();
        if kind == NoiseKind::Q1 {
            plugin_rows.push(("theta0", p.theta0(), pcol(&|e| e.theta0)));
        }
        if kind == NoiseKind::Q2UnknownMu0 {
            plugin_rows.push(("mu0", p.mu0(), pcol(&|e| e.mu0)));
        }
        plugin_rows.push(("theta1", p.theta1(), pcol(&|e| Some(e.theta1))));
        plugin_rows.push(("eta1", p.eta1(), pcol(&|e| Some(e.eta1))));
        plugin_rows.push(("theta2", p.theta2(), pcol(&|e| Some(e.theta2))));
        plugin_rows.push(("sigma2", p.sigma2(), pcol(&|e| Some(e.sigma2))));
        if kind == NoiseKind::Q1 {
            plugin_rows.push(("lambda11", p.eigenvalue(crate::model::Mode { k: 1, l: 1 }), pcol(&|e| e.lambda11_hat)));
        }
        rows.extend(plugin_rows.into_iter().map(|(name, t, xs)| SummaryRow::new(name, t, &xs, failures)));

        let mut failure_counts = BTreeMap::new();
        for f in records.iter().filter_map(|r| r.estimate.failure) {
            *failure_counts.entry(f.to_string()).or_insert(0) += 1;
        }
        let diagnostics = Diagnostics::compute(
            p.alpha(),
            prep.time.n,
            prep.space.m(),
            config.grid.n,
            config.grid.m1,
            config.grid.m2,
            &config.exponents,
        );
        Self {
            config: config.clone(),
            total: records.len(),
            successes: ests.len(),
            failures,
            failure_counts,
            nonconverged_fits: nonconverged,
            degenerate: records.iter().filter(|r| r.estimate.degenerate).count(),
            effective_horizon: prep.time.horizon(),
            diagnostics,
            rows,
            records,
        }
    }

    pub fn row(&self, parameter: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.parameter == parameter)
    }

    /// `parameter,true,mean,sd,fail_count`, one line per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter,true,mean,sd,fail_count\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.parameter, r.true_value, r.mean, r.sd, r.fail_count));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_diagnostics() {
        let e = Exponents::default();
        // n = 50, m = 25, N = 1000, γ = 0.26
        let d = Diagnostics::compute(0.5, 50, 25, 1000, 200, 200, &e);
        assert!((d.contrast_ratio - 0.008).abs() < 5e-4, "{d:?}");
        // n = 100, M = 200, ε = 0.499
        let d = Diagnostics::compute(0.5, 100, 25, 1000, 200, 200, &e);
        assert!((d.quadrature_ratio - 0.50).abs() < 5e-3, "{d:?}");
        assert!((d.contrast_ratio_2 / d.contrast_ratio - 100.0).abs() < 1e-9);
    }

    #[test]
    fn mean_sd_conventions() {
        assert_eq!(mean_sd(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(mean_sd(&[]).0.is_nan());
    }

    #[test]
    fn single_replication_table() {
        let c = ExperimentConfig { replications: 1, ..crate::harness::tests::small_config() };
        let t = crate::harness::run_monte_carlo(&c, Some(1)).unwrap();
        assert_eq!(t.total, 1);
        let k = t.row("kappa").unwrap();
        assert_eq!(k.sd, 0.0);
        assert_eq!(k.mean, t.records[0].estimate.fit.kappa_hat);
        assert_eq!(t.successes + t.failures, t.total);
        assert!(t.to_csv().starts_with("parameter,true,mean,sd,fail_count\ns,"));
        assert_eq!(t.config, c);
    }
}
