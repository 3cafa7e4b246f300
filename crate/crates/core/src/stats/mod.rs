//! Validation statistics: descriptives, Pearson correlation, agreement
//! (mean bias and limits of agreement), Fisher r-to-z and per-coefficient
//! F comparisons, standardized OLS / ridge regression and cross-run
//! coefficient stability.
//!
//! Every function here is pure. p values are returned untruncated;
//! `"<0.001"` style formatting belongs to report rendering.

pub mod dist;
mod regression;

use serde::{Deserialize, Serialize};

pub use regression::{ols_standardized, ridge_standardized, Method, RegressionResult};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("series has zero variance")]
    DegenerateSeries,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("column {0} has zero variance")]
    DegenerateColumn(usize),
    #[error("design matrix is singular")]
    SingularDesign,
    #[error("ridge penalty must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("runs disagree on predictor count ({expected} vs {got})")]
    InconsistentPredictors { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, StatsError>;

fn check_finite(xs: &[f64]) -> Result<()> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (n - 1 denominator); 0 for a single observation.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// Quantile of an ascending-sorted slice by linear interpolation between
/// order statistics (h = (n - 1) p).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub q1: f64,
    pub q3: f64,
}

pub fn descriptive(xs: &[f64]) -> Result<Descriptive> {
    if xs.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    check_finite(xs)?;
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    // Clamp guards the last-ulp drift of a summed mean on constant input.
    let m = mean(xs).clamp(min, max);
    let sd = if min == max { 0.0 } else { sample_sd(xs) };
    Ok(Descriptive {
        n: xs.len(),
        mean: m,
        sd,
        median: quantile_sorted(&sorted, 0.5),
        min,
        max,
        q1: quantile_sorted(&sorted, 0.25),
        q3: quantile_sorted(&sorted, 0.75),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub p: f64,
    pub n: usize,
}

/// Two-tailed p for a sample correlation `r` over `n` pairs, from
/// t = r sqrt(n - 2) / sqrt(1 - r^2) on n - 2 degrees of freedom.
pub fn correlation_p(r: f64, n: usize) -> f64 {
    if n < 3 {
        return 1.0;
    }
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * df.sqrt() / (1.0 - r * r).sqrt();
    dist::t_two_tailed(t, df)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewObservations { needed: 3, got: x.len() });
    }
    check_finite(x)?;
    check_finite(y)?;
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::DegenerateSeries);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Ok(CorrelationResult { r, p: correlation_p(r, x.len()), n: x.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub n: usize,
    /// Mean of x - y.
    pub md: f64,
    /// Sample variance of the paired differences.
    pub var: f64,
    pub bias: f64,
    pub loa_low: f64,
    pub loa_high: f64,
}

/// Limits of agreement from a summarized mean difference and variance.
pub fn limits_of_agreement(md: f64, var: f64) -> (f64, f64) {
    let half = 1.96 * var.max(0.0).sqrt();
    (md - half, md + half)
}

pub fn bias_loa(x: &[f64], y: &[f64]) -> Result<AgreementResult> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFewObservations { needed: 2, got: x.len() });
    }
    check_finite(x)?;
    check_finite(y)?;
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let md = mean(&diffs);
    let var = sample_variance(&diffs);
    let (loa_low, loa_high) = limits_of_agreement(md, var);
    Ok(AgreementResult { n: diffs.len(), md, var, bias: md, loa_low, loa_high })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Df {
    /// Standard normal reference distribution.
    Normal,
    F { numerator: f64, denominator: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub statistic: f64,
    pub p: f64,
    pub df: Df,
    pub delta: f64,
}

/// Compare two independent correlations via the atanh transform.
/// `delta` is `r1 - r2`.
pub fn fisher_z_diff(r1: f64, n1: usize, r2: f64, n2: usize) -> Result<ComparisonResult> {
    for (r, n) in [(r1, n1), (r2, n2)] {
        if !r.is_finite() || r.abs() >= 1.0 {
            return Err(StatsError::DegenerateInput(format!("|r| must be < 1, got {r}")));
        }
        if n <= 3 {
            return Err(StatsError::DegenerateInput(format!("n must exceed 3, got {n}")));
        }
    }
    let se = (1.0 / (n1 - 3) as f64 + 1.0 / (n2 - 3) as f64).sqrt();
    let z = (r1.atanh() - r2.atanh()) / se;
    Ok(ComparisonResult { statistic: z, p: dist::normal_two_tailed(z), df: Df::Normal, delta: r1 - r2 })
}

/// Wald-type F test of equality of one regression coefficient across two
/// independently fitted samples: F = (b2 - b1)^2 / (se1^2 + se2^2) on
/// (1, df2). `delta` is `beta2 - beta1`.
pub fn coef_diff_f(beta1: f64, se1: f64, beta2: f64, se2: f64, df2: f64) -> Result<ComparisonResult> {
    if !(beta1.is_finite() && beta2.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    if !(se1 > 0.0 && se2 > 0.0 && se1.is_finite() && se2.is_finite()) {
        return Err(StatsError::DegenerateInput("standard errors must be positive".into()));
    }
    if !(df2 > 0.0 && df2.is_finite()) {
        return Err(StatsError::DegenerateInput(format!("df2 must be positive, got {df2}")));
    }
    let delta = beta2 - beta1;
    let f = delta * delta / (se1 * se1 + se2 * se2);
    Ok(ComparisonResult {
        statistic: f,
        p: dist::f_upper_tail(f, 1.0, df2),
        df: Df::F { numerator: 1.0, denominator: df2 },
        delta,
    })
}

/// Denominator df for comparing coefficients of two k-predictor models
/// fitted (with intercept) on n1 and n2 observations.
pub fn chow_df2(n1: usize, n2: usize, k: usize) -> f64 {
    n1 as f64 + n2 as f64 - 2.0 * (k as f64 + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientStability {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub runs: usize,
    pub predictors: Vec<CoefficientStability>,
}

/// Summarize one coefficient vector per run.
pub fn stability_summary(run_betas: &[Vec<f64>]) -> Result<StabilitySummary> {
    if run_betas.len() < 2 {
        return Err(StatsError::TooFewObservations { needed: 2, got: run_betas.len() });
    }
    let k = run_betas[0].len();
    if k == 0 {
        return Err(StatsError::EmptyInput);
    }
    for run in run_betas {
        if run.len() != k {
            return Err(StatsError::InconsistentPredictors { expected: k, got: run.len() });
        }
        check_finite(run)?;
    }
    let predictors = (0..k)
        .map(|j| {
            let col: Vec<f64> = run_betas.iter().map(|r| r[j]).collect();
            let d = descriptive(&col).expect("non-empty finite column");
            CoefficientStability {
                mean: d.mean,
                sd: d.sd,
                min: d.min,
                max: d.max,
                positive: col.iter().filter(|&&b| b > 0.0).count(),
                negative: col.iter().filter(|&&b| b < 0.0).count(),
                zero: col.iter().filter(|&&b| b == 0.0).count(),
            }
        })
        .collect();
    Ok(StabilitySummary { runs: run_betas.len(), predictors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn descriptive_single_value() {
        let d = descriptive(&[5.0]).unwrap();
        assert_eq!((d.mean, d.median, d.min, d.max, d.q1, d.q3, d.sd), (5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 0.0));
    }

    #[test]
    fn descriptive_symmetric_set() {
        let d = descriptive(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((d.mean, d.median, d.q1, d.q3), (3.0, 3.0, 2.0, 4.0));
    }

    #[test]
    fn descriptive_sd_oracle() {
        // deviations from 5: -3, -1, 1, 3 -> SS = 20, /3, sqrt
        let want = (20.0f64 / 3.0).sqrt();
        let d = descriptive(&[2.0, 4.0, 6.0, 8.0]).unwrap();
        assert!((d.sd - want).abs() < 1e-12);
        assert!((d.sd - 2.582).abs() < 1e-3);
        assert_eq!((d.mean, d.median), (5.0, 5.0));
        assert_eq!((d.q1, d.q3), (3.5, 6.5));
    }

    #[test]
    fn descriptive_rejects_empty_and_nan() {
        assert_eq!(descriptive(&[]), Err(StatsError::EmptyInput));
        assert_eq!(descriptive(&[1.0, f64::NAN]), Err(StatsError::NonFinite));
    }

    #[test]
    fn pearson_identity_and_errors() {
        let x = [1.0, 2.0, 4.0, 7.0];
        let c = pearson(&x, &x).unwrap();
        assert!((c.r - 1.0).abs() < 1e-15);
        assert_eq!(c.p, 0.0);
        assert_eq!(pearson(&x, &[1.0, 2.0]), Err(StatsError::LengthMismatch(4, 2)));
        assert_eq!(pearson(&x, &[3.0; 4]), Err(StatsError::DegenerateSeries));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(StatsError::TooFewObservations { .. })));
    }

    #[test]
    fn correlation_p_anchors() {
        let p = correlation_p(0.60, 25);
        assert!((0.0013..=0.0025).contains(&p), "p = {p}");
        assert!(correlation_p(0.64, 25) < 0.001);
    }

    #[test]
    fn bias_loa_oracles() {
        let a = bias_loa(&[3.0, 5.0], &[2.0, 2.0]).unwrap();
        assert_eq!((a.md, a.var), (2.0, 2.0));
        let half = 1.96 * 2f64.sqrt();
        assert!((a.loa_low - (2.0 - half)).abs() < 1e-12);
        assert!((a.loa_high - (2.0 + half)).abs() < 1e-12);
        assert!((a.loa_low + 0.77).abs() < 0.005 && (a.loa_high - 4.77).abs() < 0.005);

        let same = bias_loa(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((same.md, same.var, same.loa_low, same.loa_high), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn loa_from_rounded_table_values() {
        let (lo, hi) = limits_of_agreement(1.99, 0.26);
        assert!((lo - 0.99).abs() < 0.01 && (hi - 2.99).abs() < 0.01);
    }

    #[test]
    fn fisher_anchors() {
        let c = fisher_z_diff(-0.01, 181, -0.21, 307).unwrap();
        assert!((c.statistic - 2.153).abs() < 0.005, "z = {}", c.statistic);
        assert!((c.p - 0.031).abs() < 0.002);
        let c = fisher_z_diff(0.05, 181, -0.04, 307).unwrap();
        assert!((c.statistic - 0.954).abs() < 0.005);
        assert!((c.p - 0.340).abs() < 0.002);
        let c = fisher_z_diff(0.3, 40, 0.3, 40).unwrap();
        assert_eq!((c.statistic, c.p), (0.0, 1.0));
    }

    #[test]
    fn fisher_rejects_degenerate() {
        assert!(fisher_z_diff(1.0, 50, 0.1, 50).is_err());
        assert!(fisher_z_diff(0.1, 3, 0.1, 50).is_err());
    }

    #[test]
    fn coef_f_anchors() {
        let df2 = chow_df2(181, 307, 5);
        assert_eq!(df2, 476.0);
        let c = coef_diff_f(-0.25, 0.08, -0.00, 0.08, df2).unwrap();
        assert!((c.statistic - 4.883).abs() < 0.01);
        assert!((c.p - 0.027).abs() < 0.002);
        assert!((c.delta - 0.25).abs() < 1e-12);
        let c = coef_diff_f(0.21, 0.08, 0.00, 0.08, df2).unwrap();
        assert!((c.statistic - 3.445).abs() < 0.01);
        assert!((c.p - 0.063).abs() < 0.003);
        let c = coef_diff_f(0.4, 0.1, 0.4, 0.2, 10.0).unwrap();
        assert_eq!((c.statistic, c.p), (0.0, 1.0));
        assert!(coef_diff_f(0.1, 0.0, 0.2, 0.1, 10.0).is_err());
        assert!(coef_diff_f(0.1, 0.1, 0.2, 0.1, 0.0).is_err());
    }

    #[test]
    fn stability_anchor_and_edges() {
        let runs: Vec<Vec<f64>> = [0.096, 0.062, 0.138, 0.029, 0.069].iter().map(|&b| vec![b]).collect();
        let s = stability_summary(&runs).unwrap();
        let a = s.predictors[0];
        assert!((a.mean - 0.079).abs() < 0.001);
        assert!((a.sd - 0.041).abs() < 0.001);
        assert_eq!((a.min, a.max, a.positive, a.negative), (0.029, 0.138, 5, 0));

        let s = stability_summary(&[vec![-1.0], vec![1.0]]).unwrap();
        let p = s.predictors[0];
        assert_eq!((p.mean, p.min, p.max, p.positive, p.negative), (0.0, -1.0, 1.0, 1, 1));

        let s = stability_summary(&[vec![0.3, 0.0], vec![0.3, 0.0]]).unwrap();
        assert_eq!(s.predictors[0].sd, 0.0);
        assert_eq!(s.predictors[1].zero, 2);

        assert!(matches!(
            stability_summary(&[vec![1.0], vec![1.0, 2.0]]),
            Err(StatsError::InconsistentPredictors { .. })
        ));
        assert!(stability_summary(&[vec![1.0]]).is_err());
    }

    fn series(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (prop::collection::vec(-50.0f64..50.0, n), prop::collection::vec(-50.0f64..50.0, n))
    }

    proptest! {
        #[test]
        fn pearson_symmetric_and_affine_invariant(
            (x, y) in (3usize..30).prop_flat_map(series),
            a in 0.1f64..10.0, b in -5.0f64..5.0,
        ) {
            prop_assume!(sample_sd(&x) > 1e-6 && sample_sd(&y) > 1e-6);
            let r = pearson(&x, &y).unwrap().r;
            prop_assert!((pearson(&y, &x).unwrap().r - r).abs() < 1e-12);
            let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            prop_assert!((pearson(&xs, &y).unwrap().r - r).abs() < 1e-9);
            let xn: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
            prop_assert!((pearson(&xn, &y).unwrap().r + r).abs() < 1e-9);
        }

        #[test]
        fn fisher_antisymmetric(r1 in -0.95f64..0.95, r2 in -0.95f64..0.95, n1 in 4usize..500, n2 in 4usize..500) {
            let a = fisher_z_diff(r1, n1, r2, n2).unwrap();
            let b = fisher_z_diff(r2, n2, r1, n1).unwrap();
            prop_assert!((a.statistic + b.statistic).abs() < 1e-12);
            prop_assert!((a.p - b.p).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a.p));
        }

        #[test]
        fn coef_f_symmetric(b1 in -1.0f64..1.0, s1 in 0.01f64..0.5, b2 in -1.0f64..1.0, s2 in 0.01f64..0.5, df in 1.0f64..1000.0) {
            let a = coef_diff_f(b1, s1, b2, s2, df).unwrap();
            let b = coef_diff_f(b2, s2, b1, s1, df).unwrap();
            prop_assert!((a.statistic - b.statistic).abs() < 1e-12);
            prop_assert!((a.p - b.p).abs() < 1e-12);
        }

        #[test]
        fn descriptive_order_invariants(xs in prop::collection::vec(-100.0f64..100.0, 1..40)) {
            let d = descriptive(&xs).unwrap();
            prop_assert!(d.min <= d.q1 && d.q1 <= d.median && d.median <= d.q3 && d.q3 <= d.max);
            prop_assert!(d.min <= d.mean && d.mean <= d.max);
            prop_assert!(d.sd >= 0.0);
            prop_assert_eq!(d.sd == 0.0, d.min == d.max);
        }

        #[test]
        fn agreement_bias_inside_limits((x, y) in (2usize..30).prop_flat_map(series)) {
            let a = bias_loa(&x, &y).unwrap();
            prop_assert!(a.loa_low <= a.bias && a.bias <= a.loa_high);
            prop_assert_eq!(a.bias, a.md);
        }
    }
}
