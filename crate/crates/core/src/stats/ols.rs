//! Ordinary least squares with coefficient inference.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dist::{f_sf, t_two_sided_p};
use crate::error::{Error, Result};

/// Relative size below which a diagonal entry of R marks a dependent column.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r2: f64,
    pub adj_r2: f64,
    pub f_statistic: f64,
    pub f_p_value: f64,
    pub n: usize,
    pub df_model: usize,
    pub df_resid: usize,
    pub residuals: Vec<f64>,
}

/// Fits `y ≈ X β` by Householder QR. `x` must contain a column of ones.
pub fn ols(x: &DMatrix<f64>, y: &[f64]) -> Result<RegressionFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: y.len(),
        });
    }
    if n <= p {
        return Err(Error::InsufficientData(format!(
            "regression needs more rows ({n}) than columns ({p})"
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Validation("regression input is not finite".into()));
    }
    let has_intercept = x.column_iter().any(|c| c.iter().all(|&v| v == 1.0));
    if !has_intercept {
        return Err(Error::Validation("design matrix has no intercept column".into()));
    }

    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if let Some(col) = (0..p).find(|&i| r[(i, i)].abs() <= RANK_TOL * max_diag.max(f64::MIN_POSITIVE)) {
        return Err(Error::SingularDesign(format!(
            "design matrix is rank deficient (column {col} is linearly dependent)"
        )));
    }
    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SingularDesign("triangular solve failed".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::SingularDesign("triangular inverse failed".into()))?;

    let resid = &yv - x * &beta;
    let sse = resid.norm_squared();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();

    let df_model = p - 1;
    let df_resid = n - p;
    let sigma2 = sse / df_resid as f64;

    let mut std_errors = Vec::with_capacity(p);
    let mut t_values = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    for i in 0..p {
        // diag((RᵀR)⁻¹) = squared row norms of R⁻¹
        let se = (sigma2 * r_inv.row(i).norm_squared()).sqrt();
        let t = ratio(beta[i], se);
        std_errors.push(se);
        t_values.push(t);
        p_values.push(t_two_sided_p(t, df_resid as f64)?);
    }

    let r2 = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };
    let adj_r2 = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / df_resid as f64;
    let (f_statistic, f_p_value) = if df_model == 0 {
        (0.0, 1.0)
    } else {
        let ssr = (sst - sse).max(0.0);
        let f = ratio(ssr / df_model as f64, sigma2);
        (f, f_sf(f, df_model as f64, df_resid as f64)?)
    };

    Ok(RegressionFit {
        coefficients: beta.iter().copied().collect(),
        std_errors,
        t_values,
        p_values,
        r2,
        adj_r2,
        f_statistic,
        f_p_value,
        n,
        df_model,
        df_resid,
        residuals: resid.iter().copied().collect(),
    })
}

/// num / den with an exact zero residual variance mapped to ±∞ (or 0 when
/// the numerator is also zero).
fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        num.signum() * f64::INFINITY
    }
}

/// Divides a column by its maximum unless every value already lies in (0, 1).
pub fn normalize_by_max(column: &[f64]) -> Result<Vec<f64>> {
    if column.iter().any(|v| !v.is_finite()) {
        return Err(Error::Normalization("column contains non-finite values".into()));
    }
    if column.iter().all(|&v| v > 0.0 && v < 1.0) {
        return Ok(column.to_vec());
    }
    let max = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_nan() || max <= 0.0 {
        return Err(Error::Normalization(format!(
            "column maximum {max} is not positive"
        )));
    }
    Ok(column.iter().map(|v| v / max).collect())
}
