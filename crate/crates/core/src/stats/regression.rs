use serde::{Deserialize, Serialize};

use super::{check_finite, mean, sample_sd, Result, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Ols,
    Ridge { lambda: f64 },
}

/// Standardized-coefficient regression fit. Predictors and outcome are
/// z-scored (n - 1 sd), so no intercept is estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub betas: Vec<f64>,
    /// Standard errors; present for OLS only.
    pub ses: Option<Vec<f64>>,
    pub r2: f64,
    pub n: usize,
    pub k: usize,
    pub method: Method,
}

impl RegressionResult {
    /// Residual degrees of freedom, n - k - 1.
    pub fn df_resid(&self) -> usize {
        self.n.saturating_sub(self.k + 1)
    }
}

struct Standardized {
    /// Column-major z-scored predictors.
    z: Vec<Vec<f64>>,
    zy: Vec<f64>,
}

fn standardize(columns: &[Vec<f64>], y: &[f64]) -> Result<Standardized> {
    if columns.is_empty() || y.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let n = y.len();
    for col in columns {
        if col.len() != n {
            return Err(StatsError::LengthMismatch(col.len(), n));
        }
        check_finite(col)?;
    }
    check_finite(y)?;
    if n < 2 {
        return Err(StatsError::TooFewObservations { needed: 2, got: n });
    }
    let zscore = |v: &[f64], idx: Option<usize>| -> Result<Vec<f64>> {
        let m = mean(v);
        let sd = sample_sd(v);
        if sd == 0.0 || !sd.is_finite() {
            return Err(match idx {
                Some(j) => StatsError::DegenerateColumn(j),
                None => StatsError::DegenerateSeries,
            });
        }
        Ok(v.iter().map(|x| (x - m) / sd).collect())
    };
    let z = columns
        .iter()
        .enumerate()
        .map(|(j, c)| zscore(c, Some(j)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Standardized { z, zy: zscore(y, None)? })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let k = a.len();
    let scale = (0..k).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut l = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let s = a[i][j] - (0..j).map(|p| l[i][p] * l[j][p]).sum::<f64>();
            if i == j {
                if s <= 1e-10 * scale {
                    return Err(StatsError::SingularDesign);
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let k = l.len();
    let mut y = vec![0.0; k];
    for i in 0..k {
        y[i] = (b[i] - (0..i).map(|p| l[i][p] * y[p]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        x[i] = (y[i] - (i + 1..k).map(|p| l[p][i] * x[p]).sum::<f64>()) / l[i][i];
    }
    x
}

struct Fit {
    betas: Vec<f64>,
    rss: f64,
    tss: f64,
    chol: Vec<Vec<f64>>,
}

fn fit(s: &Standardized, lambda: f64) -> Result<Fit> {
    let k = s.z.len();
    let mut gram = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let v = dot(&s.z[i], &s.z[j]);
            gram[i][j] = v;
            gram[j][i] = v;
        }
        gram[i][i] += lambda;
    }
    let rhs: Vec<f64> = s.z.iter().map(|c| dot(c, &s.zy)).collect();
    let chol = cholesky(&gram)?;
    let betas = cholesky_solve(&chol, &rhs);
    let rss = (0..s.zy.len())
        .map(|row| {
            let fitted: f64 = s.z.iter().zip(&betas).map(|(c, b)| c[row] * b).sum();
            let e = s.zy[row] - fitted;
            e * e
        })
        .sum::<f64>();
    let tss = dot(&s.zy, &s.zy);
    Ok(Fit { betas, rss, tss, chol })
}

/// Ordinary least squares on z-scored predictors (`columns`, one vector per
/// predictor) and outcome, with conventional standard errors
/// sqrt(sigma^2 diag((Z'Z)^-1)), sigma^2 = RSS / (n - k - 1).
pub fn ols_standardized(columns: &[Vec<f64>], y: &[f64]) -> Result<RegressionResult> {
    let n = y.len();
    let k = columns.len();
    if n <= k + 1 {
        return Err(StatsError::TooFewObservations { needed: k + 2, got: n });
    }
    let s = standardize(columns, y)?;
    let f = fit(&s, 0.0)?;
    let sigma2 = f.rss / (n - k - 1) as f64;
    let ses = (0..k)
        .map(|j| {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            let inv_col = cholesky_solve(&f.chol, &e);
            (sigma2 * inv_col[j]).max(0.0).sqrt()
        })
        .collect();
    Ok(RegressionResult {
        betas: f.betas,
        ses: Some(ses),
        r2: (1.0 - f.rss / f.tss).clamp(0.0, 1.0),
        n,
        k,
        method: Method::Ols,
    })
}

/// Ridge regression on z-scored data: solves (Z'Z + lambda I) b = Z'z_y.
/// The penalty is not divided by n.
pub fn ridge_standardized(columns: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<RegressionResult> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(StatsError::InvalidLambda(lambda));
    }
    let s = standardize(columns, y)?;
    let f = fit(&s, lambda)?;
    Ok(RegressionResult {
        betas: f.betas,
        ses: None,
        r2: (1.0 - f.rss / f.tss).clamp(0.0, 1.0),
        n: y.len(),
        k: columns.len(),
        method: Method::Ridge { lambda },
    })
}
