//! Linear Gaussian observation models `y = A x + n`, `n ~ N(0, sigma^2 I)`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::MatrixSpec;
use crate::linalg::{self, check_len};
use crate::provenance::sha256_hex;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ForwardFile", into = "ForwardFile")]
pub struct LinearForwardModel {
    matrix: DMatrix<f64>,
    sigma: f64,
}

/// An observed vector `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(DVector<f64>);

impl Observation {
    pub fn new(values: Vec<f64>) -> Self {
        Self(DVector::from_vec(values))
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<DVector<f64>> for Observation {
    fn from(v: DVector<f64>) -> Self {
        Self(v)
    }
}

impl LinearForwardModel {
    pub fn new(matrix: DMatrix<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise level sigma = {sigma} must be finite and > 0"
            )));
        }
        if matrix.is_empty() {
            return Err(Error::Dimension("forward matrix is empty".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("forward matrix has non-finite entries".into()));
        }
        Ok(Self { matrix, sigma })
    }

    /// `A = s I_d`.
    pub fn scaled_identity(d: usize, s: f64, sigma: f64) -> Result<Self> {
        Self::new(DMatrix::identity(d, d) * s, sigma)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `d`, the dimension of `x`.
    pub fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// `m`, the dimension of `y`.
    pub fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Same noise level, matrix multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(&self.matrix * s, self.sigma)
    }

    fn check(&self, y: &Observation, x: &DVector<f64>) -> Result<()> {
        check_len(y.values(), self.output_dim(), "observation")?;
        check_len(x, self.input_dim(), "state")
    }

    /// `grad_x log p(y | x) = A^T (y - A x) / sigma^2`
    pub fn likelihood_score(&self, y: &Observation, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(y, x)?;
        Ok(self.matrix.tr_mul(&(y.values() - &self.matrix * x)) / (self.sigma * self.sigma))
    }

    /// `-||y - A x||^2 / (2 sigma^2)`, without the normalising constant.
    pub fn log_likelihood(&self, y: &Observation, x: &DVector<f64>) -> Result<f64> {
        self.check(y, x)?;
        Ok(-(y.values() - &self.matrix * x).norm_squared() / (2.0 * self.sigma * self.sigma))
    }

    fn gram_eigen_range(&self) -> (f64, f64) {
        linalg::symmetric_eigen_range(&self.matrix.tr_mul(&self.matrix))
    }

    /// `L = lambda_max(A^T A) / sigma^2`, the Lipschitz constant of the score.
    pub fn lipschitz_constant(&self) -> f64 {
        self.gram_eigen_range().1.max(0.0) / (self.sigma * self.sigma)
    }

    /// `m = lambda_min(A^T A) / sigma^2`: the score satisfies
    /// `<s(x2) - s(x1), x2 - x1> <= -m ||x2 - x1||^2`. Zero when `A` is rank
    /// deficient, with the same relative tolerance as the SPD checks.
    pub fn concavity_constant(&self) -> f64 {
        let (low, high) = self.gram_eigen_range();
        if self.output_dim() < self.input_dim() || low <= linalg::SPD_RELATIVE_TOLERANCE * high {
            return 0.0;
        }
        low / (self.sigma * self.sigma)
    }

    pub fn content_hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("model serialises").as_bytes())
    }

    /// Reads the forward-model file format (TOML, or JSON for `.json`).
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
        } else {
            toml::from_str(&text).map_err(|e| Error::parse(path, e))
        }
    }
}

/// Spectral norm `||A1 - A2||`.
pub fn operator_distance(a1: &DMatrix<f64>, a2: &DMatrix<f64>) -> Result<f64> {
    if a1.shape() != a2.shape() {
        return Err(Error::Dimension(format!(
            "operators are {}x{} and {}x{}",
            a1.nrows(),
            a1.ncols(),
            a2.nrows(),
            a2.ncols()
        )));
    }
    Ok(linalg::spectral_norm(&(a1 - a2)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForwardFile {
    matrix: MatrixSpec,
    sigma: f64,
    /// Column count; required only when `matrix` is given flat.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_dim: Option<usize>,
}

impl TryFrom<ForwardFile> for LinearForwardModel {
    type Error = Error;

    fn try_from(file: ForwardFile) -> Result<Self> {
        let matrix = match (file.matrix, file.input_dim) {
            (MatrixSpec::Rows(rows), None) => linalg::matrix_from_rows(&rows, "forward matrix")?,
            (MatrixSpec::Rows(rows), Some(d)) => {
                let m = linalg::matrix_from_rows(&rows, "forward matrix")?;
                if m.ncols() != d {
                    return Err(Error::Dimension(format!(
                        "forward matrix has {} columns, input_dim = {d}",
                        m.ncols()
                    )));
                }
                m
            }
            (MatrixSpec::Flat(values), Some(d)) if d > 0 && values.len() % d == 0 => {
                DMatrix::from_row_slice(values.len() / d, d, &values)
            }
            (MatrixSpec::Flat(values), d) => {
                return Err(Error::Config(format!(
                    "flat forward matrix with {} entries needs a compatible input_dim (got {d:?})",
                    values.len()
                )))
            }
        };
        LinearForwardModel::new(matrix, file.sigma)
    }
}

impl From<LinearForwardModel> for ForwardFile {
    fn from(m: LinearForwardModel) -> Self {
        ForwardFile {
            matrix: MatrixSpec::Rows(linalg::matrix_to_rows(&m.matrix)),
            sigma: m.sigma,
            input_dim: None,
        }
    }
}
