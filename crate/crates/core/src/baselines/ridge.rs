use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::tfidf::SparseRow;
use super::BaselineError;
use crate::corpus::Level;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RidgeConfig {
    pub alpha: f64,
    /// Fit an unpenalized intercept by centering rows and targets.
    pub fit_intercept: bool,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            fit_intercept: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub alpha: f64,
}

impl RidgeModel {
    pub fn decision(&self, row: &SparseRow) -> f64 {
        row.iter().map(|&(c, v)| self.weights[c] * v).sum::<f64>() + self.intercept
    }

    pub fn predict(&self, row: &SparseRow) -> Level {
        if self.decision(row) > 0.0 {
            Level::High
        } else {
            Level::Low
        }
    }
}

fn sparse_dot(a: &SparseRow, b: &SparseRow) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    s
}

fn dense_dot(row: &SparseRow, dense: &[f64]) -> f64 {
    row.iter().map(|&(c, v)| dense[c] * v).sum()
}

/// Solves a symmetric positive definite system, reporting (near-)singular
/// matrices instead of returning garbage.
fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>, BaselineError> {
    let chol = a.cholesky().ok_or(BaselineError::Singular)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    if lo.is_nan() || lo <= 0.0 || (lo / hi).powi(2) < 1e-13 {
        return Err(BaselineError::Singular);
    }
    Ok(chol.solve(&b))
}

/// Minimizes `‖Xw + b - y‖² + alpha‖w‖²` exactly. Uses the `d × d` normal
/// equations when there are no more columns than rows and the `n × n` kernel
/// form otherwise; both give the same minimizer.
pub fn train_ridge(rows: &[SparseRow], dims: usize, labels: &[f64], config: &RidgeConfig) -> Result<RidgeModel, BaselineError> {
    if rows.len() != labels.len() {
        return Err(BaselineError::ShapeMismatch(rows.len(), labels.len()));
    }
    if rows.is_empty() {
        return Err(BaselineError::EmptyCorpus);
    }
    let alpha = config.alpha;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(BaselineError::Config(format!("alpha {alpha} must be finite and >= 0")));
    }
    let n = rows.len();
    let mut mean = vec![0.0; dims];
    let mut y_mean = 0.0;
    if config.fit_intercept {
        for r in rows {
            for &(c, v) in r {
                mean[c] += v / n as f64;
            }
        }
        y_mean = labels.iter().sum::<f64>() / n as f64;
    }
    let yc = DVector::from_iterator(n, labels.iter().map(|y| y - y_mean));

    let weights: Vec<f64> = if dims <= n {
        let mut x = DMatrix::from_fn(n, dims, |_, j| -mean[j]);
        for (i, r) in rows.iter().enumerate() {
            for &(c, v) in r {
                x[(i, c)] += v;
            }
        }
        let xt = x.transpose();
        let mut a = &xt * &x;
        for j in 0..dims {
            a[(j, j)] += alpha;
        }
        solve_spd(a, &xt * yc)?.iter().copied().collect()
    } else {
        let mean_sq: f64 = mean.iter().map(|m| m * m).sum();
        let row_mean: Vec<f64> = rows.iter().map(|r| dense_dot(r, &mean)).collect();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = sparse_dot(&rows[i], &rows[j]) - row_mean[i] - row_mean[j] + mean_sq;
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(i, i)] += alpha;
        }
        let coef = solve_spd(k, yc)?;
        let total: f64 = coef.iter().sum();
        let mut w: Vec<f64> = mean.iter().map(|m| -m * total).collect();
        for (r, &c) in rows.iter().zip(coef.iter()) {
            for &(col, v) in r {
                w[col] += c * v;
            }
        }
        w
    };
    let intercept = y_mean - mean.iter().zip(&weights).map(|(m, w)| m * w).sum::<f64>();
    Ok(RidgeModel { weights, intercept, alpha })
}

/// `‖(XᵀX + alpha I)w - Xᵀy‖` for the (centered, when fitting an intercept)
/// training data. Dense; meant for checking small fits.
pub fn normal_equation_residual(rows: &[SparseRow], dims: usize, labels: &[f64], config: &RidgeConfig, model: &RidgeModel) -> f64 {
    let n = rows.len();
    let mut x = DMatrix::zeros(n, dims);
    for (i, r) in rows.iter().enumerate() {
        for &(c, v) in r {
            x[(i, c)] = v;
        }
    }
    let mut y = DVector::from_column_slice(labels);
    if config.fit_intercept {
        for j in 0..dims {
            let m = x.column(j).mean();
            x.column_mut(j).add_scalar_mut(-m);
        }
        let m = y.mean();
        y.add_scalar_mut(-m);
    }
    let w = DVector::from_column_slice(&model.weights);
    let xt = x.transpose();
    let lhs = &xt * (&x * &w) + &w * config.alpha;
    (lhs - xt * y).norm()
}
