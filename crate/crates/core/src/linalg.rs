//! SVD-backed pseudoinverse and numerical rank.

use nalgebra::{DMatrix, SVD};

use crate::error::{HenError, Result};

const SVD_MAX_ITERS: usize = 10_000;

/// `max(rows, cols) · ε`, the conventional numerical-rank cutoff factor.
pub fn default_tol_factor(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON
}

fn svd(m: &DMatrix<f64>, vectors: bool) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(HenError::InvalidParameter(
            "matrix has non-finite entries".into(),
        ));
    }
    SVD::try_new(m.clone(), vectors, vectors, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or(HenError::SvdNotConverged)
}

pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let mut values: Vec<f64> = svd(m, false)?.singular_values.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Moore–Penrose pseudoinverse. Singular values `σ ≤ tol_factor · σ_max`
/// are treated as zero.
pub fn pseudoinverse(m: &DMatrix<f64>, tol_factor: f64) -> Result<DMatrix<f64>> {
    if tol_factor.is_nan() || tol_factor < 0.0 {
        return Err(HenError::InvalidParameter(
            "tol_factor must be non-negative".into(),
        ));
    }
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(DMatrix::zeros(cols, rows));
    }
    let decomposition = svd(m, true)?;
    let u = decomposition.u.as_ref().ok_or(HenError::SvdNotConverged)?;
    let v_t = decomposition.v_t.as_ref().ok_or(HenError::SvdNotConverged)?;
    let sigma = &decomposition.singular_values;
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let cutoff = tol_factor * sigma_max;

    let mut out = DMatrix::zeros(cols, rows);
    for (i, &s) in sigma.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        // out += v_i · u_iᵀ / σ_i
        let v_i = v_t.row(i).transpose();
        let u_i = u.column(i);
        out += (v_i * u_i.transpose()) / s;
    }
    Ok(out)
}

/// Number of singular values above `tol_factor · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, tol_factor: f64) -> Result<usize> {
    let values = singular_values(m)?;
    let sigma_max = values.first().copied().unwrap_or(0.0);
    if sigma_max == 0.0 {
        return Ok(0);
    }
    let cutoff = tol_factor * sigma_max;
    Ok(values.iter().filter(|&&s| s > cutoff).count())
}
