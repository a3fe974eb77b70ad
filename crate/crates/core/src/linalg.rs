//! Small dense linear-algebra helpers over `nalgebra` dynamic matrices.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a symmetric matrix counts as singular.
pub const SPD_RELATIVE_TOLERANCE: f64 = 1e-12;

/// Symmetric positive-definiteness test that is invariant to scaling:
/// `lambda_min > 1e-12 * lambda_max` and `lambda_max > 0`.
pub fn check_spd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "{what} is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateModel(format!("{what} has non-finite entries")));
    }
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || !(min > SPD_RELATIVE_TOLERANCE * max) {
        return Err(Error::DegenerateModel(format!(
            "{what} is not positive definite (eigenvalues in [{min:e}, {max:e}])"
        )));
    }
    Ok(())
}

/// Cholesky factor of a matrix already known (or required) to be SPD.
pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    check_spd(m, what)?;
    Cholesky::new(m.clone()).ok_or_else(|| Error::DegenerateModel(format!("{what}: Cholesky factorisation failed")))
}

/// `log det` from a Cholesky factor.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub fn symmetric_eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = m.clone().symmetric_eigen();
    (eig.eigenvalues.min(), eig.eigenvalues.max())
}

/// Operator norm induced by the Euclidean norm: `sqrt(lambda_max(M^T M))`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = m.transpose() * m;
    symmetric_eigen_range(&gram).1.max(0.0).sqrt()
}

/// Numerically stable `log(sum(exp(values)))`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalised weights `exp(v_i - logsumexp(v))`.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_row_iterator(nrows, ncols, rows.iter().flatten().copied()))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn check_len(x: &DVector<f64>, expected: usize, what: &str) -> Result<()> {
    if x.len() != expected {
        return Err(Error::Dimension(format!(
            "{what} has length {}, expected {expected}",
            x.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_check_is_scale_invariant() {
        let tiny = DMatrix::<f64>::identity(2, 2) * 1e-12;
        assert!(check_spd(&tiny, "tiny").is_ok());
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(check_spd(&singular, "s"), Err(Error::DegenerateModel(_))));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(check_spd(&indefinite, "i").is_err());
    }

    #[test]
    fn log_det_matches_determinant() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 0.15]);
        let chol = cholesky(&m, "m").unwrap();
        assert!((log_det(&chol) - m.determinant().ln()).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_of_shear() {
        // [[1,1],[0,1]]^T [[1,1],[0,1]] = [[1,1],[1,2]], lambda_max = (3 + sqrt 5) / 2.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let expected = ((3.0 + 5f64.sqrt()) / 2.0).sqrt();
        assert!((spectral_norm(&a) - expected).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_survives_large_offsets() {
        let v = [-1000.0, -1000.0];
        assert!((log_sum_exp(&v) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        let w = softmax(&[1e4, 1e4 + 2f64.ln()]);
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-12);
    }
}
