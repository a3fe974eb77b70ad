//! Gaussian-mixture priors and their closed forms.
//!
//! A mixture `p(x) = sum_i w_i N(x; mu_i, Sigma_i)` admits exact expressions
//! for its log-density and score, for the posterior under a linear Gaussian
//! observation, and (see [`crate::denoiser`]) for the MMSE denoiser under
//! additive Gaussian noise of variance `eps`.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{LinearForwardModel, Observation};
use crate::linalg::{self, check_len};
use crate::provenance::sha256_hex;
use crate::samples::{Provenance, SampleSet};

/// Mixture weights must sum to one within this tolerance.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;
/// Covariances read from files must be symmetric within this tolerance.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct GaussianComponent {
    weight: f64,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    /// `-(d log(2 pi) + log det Sigma) / 2`
    log_norm: f64,
}

impl PartialEq for GaussianComponent {
    fn eq(&self, other: &Self) -> bool {
        self.weight == other.weight && self.mean == other.mean && self.covariance == other.covariance
    }
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "component weight {weight} must be finite and >= 0"
            )));
        }
        let d = mean.len();
        if d == 0 {
            return Err(Error::Dimension("component mean is empty".into()));
        }
        if covariance.shape() != (d, d) {
            return Err(Error::Dimension(format!(
                "covariance is {}x{}, mean has length {d}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > SYMMETRY_TOLERANCE {
            return Err(Error::DegenerateModel(format!(
                "covariance is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let chol = linalg::cholesky(&covariance, "component covariance")?;
        let log_norm = -0.5 * (d as f64 * (2.0 * PI).ln() + linalg::log_det(&chol));
        Ok(Self {
            weight,
            mean,
            covariance,
            chol,
            log_norm,
        })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `log N(x; mu, Sigma)`
    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let white = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&(x - &self.mean))
            .expect("triangular solve");
        self.log_norm - 0.5 * white.norm_squared()
    }

    /// `-Sigma^{-1} (x - mu)`
    fn score(&self, x: &DVector<f64>) -> DVector<f64> {
        -self.chol.solve(&(x - &self.mean))
    }

    pub(crate) fn precision(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureFile", into = "MixtureFile")]
pub struct GaussianMixture {
    dim: usize,
    components: Vec<GaussianComponent>,
}

impl GaussianMixture {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        let dim = components
            .first()
            .map(GaussianComponent::dim)
            .ok_or_else(|| Error::InvalidParameter("mixture needs at least one component".into()))?;
        if let Some(c) = components.iter().find(|c| c.dim() != dim) {
            return Err(Error::Dimension(format!(
                "component of dimension {} in a {dim}-dimensional mixture",
                c.dim()
            )));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { dim, components })
    }

    /// Single Gaussian `N(mean, covariance)`.
    pub fn single(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![GaussianComponent::new(1.0, mean, covariance)?])
    }

    /// The two-component crossed mixture used in the 2D denoiser-mismatch
    /// experiment: zero means, equal weights, covariances
    /// `[[2, 0.5], [0.5, 0.15]]` and `[[0.15, 0.5], [0.5, 2]]`.
    pub fn crossed_pair() -> Self {
        let zero = DVector::zeros(2);
        let first = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 0.15]);
        let second = DMatrix::from_row_slice(2, 2, &[0.15, 0.5, 0.5, 2.0]);
        Self::new(vec![
            GaussianComponent::new(0.5, zero.clone(), first).expect("SPD"),
            GaussianComponent::new(0.5, zero, second).expect("SPD"),
        ])
        .expect("valid mixture")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    /// Per-component `log w_i + log N(x; mu_i, Sigma_i)`; zero-weight
    /// components give `-inf`.
    fn component_log_terms(&self, x: &DVector<f64>) -> Vec<f64> {
        self.components.iter().map(|c| c.weight.ln() + c.log_pdf(x)).collect()
    }

    /// `log sum_i w_i N(x; mu_i, Sigma_i)` with a max-shift.
    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        check_len(x, self.dim, "point")?;
        Ok(linalg::log_sum_exp(&self.component_log_terms(x)))
    }

    /// Component responsibilities `P(i | x)`.
    pub fn responsibilities(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        check_len(x, self.dim, "point")?;
        Ok(linalg::softmax(&self.component_log_terms(x)))
    }

    /// Analytic `grad log p(x)`.
    pub fn score(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let resp = self.responsibilities(x)?;
        Ok(self
            .components
            .iter()
            .zip(resp)
            .filter(|(_, r)| *r > 0.0)
            .fold(DVector::zeros(self.dim), |acc, (c, r)| acc + c.score(x) * r))
    }

    pub fn mean(&self) -> DVector<f64> {
        self.components
            .iter()
            .fold(DVector::zeros(self.dim), |acc, c| acc + &c.mean * c.weight)
    }

    /// The law of `x + n` with `n ~ N(0, eps I)`: every covariance becomes
    /// `Sigma_i + eps I`.
    pub fn smoothed(&self, eps: f64) -> Result<GaussianMixture> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "smoothing variance {eps} must be finite and >= 0"
            )));
        }
        let eye = DMatrix::<f64>::identity(self.dim, self.dim);
        let components = self
            .components
            .iter()
            .map(|c| GaussianComponent::new(c.weight, c.mean.clone(), &c.covariance + &eye * eps))
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(components)
    }

    /// `n` i.i.d. draws: categorical component by weight, then `mu + L z`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleSet> {
        if n == 0 {
            return Err(Error::InvalidParameter("sample count must be >= 1".into()));
        }
        let weights = WeightedIndex::new(self.components.iter().map(|c| c.weight))
            .map_err(|e| Error::DegenerateModel(format!("mixture weights: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = SampleSet::with_capacity(self.dim, n);
        let mut z = DVector::zeros(self.dim);
        for k in 0..n {
            let c = &self.components[weights.sample(&mut rng)];
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            let x = &c.mean + c.chol.l_dirty().lower_triangle() * &z;
            out.push(k as u64, x.as_slice())?;
        }
        out.provenance = Provenance::Prior {
            mixture_hash: self.content_hash(),
            seed,
        };
        Ok(out)
    }

    /// Exact posterior under `y = A x + n`, `n ~ N(0, sigma^2 I)`.
    ///
    /// Component `i` has precision `S_i = Sigma_i^{-1} + A^T A / sigma^2`,
    /// mean `m_i = S_i^{-1} (Sigma_i^{-1} mu_i + A^T y / sigma^2)` and log-weight
    /// `log w_i + (m_i^T S_i m_i - mu_i^T Sigma_i^{-1} mu_i) / 2
    ///  - log det(I + Sigma_i A^T A / sigma^2) / 2` up to a shared constant;
    /// weights are normalised numerically instead of through `p(y)`.
    pub fn posterior(&self, fwd: &LinearForwardModel, y: &Observation) -> Result<PosteriorMixture> {
        if fwd.input_dim() != self.dim {
            return Err(Error::Dimension(format!(
                "forward model acts on dimension {}, prior has {}",
                fwd.input_dim(),
                self.dim
            )));
        }
        check_len(y.values(), fwd.output_dim(), "observation")?;
        let s2 = fwd.sigma() * fwd.sigma();
        let gram = fwd.matrix().transpose() * fwd.matrix() / s2;
        let data_term = fwd.matrix().transpose() * y.values() / s2;

        let mut log_weights = Vec::with_capacity(self.components.len());
        let mut parts = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let prior_precision = c.precision();
            let precision = &prior_precision + &gram;
            let precision = (&precision + precision.transpose()) * 0.5;
            let chol = linalg::cholesky(&precision, "posterior precision")?;
            let rhs = &prior_precision * &c.mean + &data_term;
            let mean = chol.solve(&rhs);
            // det(I + Sigma A^T A / s2) = det(Sigma) det(S).
            let log_det = linalg::log_det(&c.chol) + linalg::log_det(&chol);
            let log_w = c.weight.ln() + 0.5 * mean.dot(&(&precision * &mean))
                - 0.5 * c.mean.dot(&(&prior_precision * &c.mean))
                - 0.5 * log_det;
            log_weights.push(log_w);
            parts.push((mean, precision, chol));
        }
        let weights = linalg::softmax(&log_weights);
        let components = parts
            .into_iter()
            .zip(weights)
            .map(|((mean, precision, chol), weight)| PosteriorComponent {
                weight,
                mean,
                precision,
                chol,
            })
            .collect();
        Ok(PosteriorMixture {
            dim: self.dim,
            components,
        })
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("mixture serialises").as_bytes())
    }

    /// Reads the mixture file format (TOML, or JSON when the extension is `.json`).
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
        } else {
            toml::from_str(&text).map_err(|e| Error::parse(path, e))
        }
    }
}

/// Matrix given either as rows or as one flat row-major list.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub(crate) enum MatrixSpec {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

impl MatrixSpec {
    pub(crate) fn into_square(self, d: usize, what: &str) -> Result<DMatrix<f64>> {
        let m = match self {
            MatrixSpec::Rows(rows) => linalg::matrix_from_rows(&rows, what)?,
            MatrixSpec::Flat(values) => {
                if values.len() != d * d {
                    return Err(Error::Dimension(format!(
                        "{what}: {} entries, expected {}",
                        values.len(),
                        d * d
                    )));
                }
                DMatrix::from_row_slice(d, d, &values)
            }
        };
        if m.shape() != (d, d) {
            return Err(Error::Dimension(format!(
                "{what} is {}x{}, expected {d}x{d}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentFile {
    weight: f64,
    mean: Vec<f64>,
    covariance: MatrixSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MixtureFile {
    dimension: usize,
    components: Vec<ComponentFile>,
}

impl TryFrom<MixtureFile> for GaussianMixture {
    type Error = Error;

    fn try_from(file: MixtureFile) -> Result<Self> {
        let d = file.dimension;
        if d == 0 {
            return Err(Error::Config("mixture dimension must be positive".into()));
        }
        let components = file
            .components
            .into_iter()
            .enumerate()
            .map(|(k, c)| {
                if c.mean.len() != d {
                    return Err(Error::Dimension(format!(
                        "component {k}: mean has length {}, expected {d}",
                        c.mean.len()
                    )));
                }
                let cov = c.covariance.into_square(d, &format!("component {k} covariance"))?;
                GaussianComponent::new(c.weight, DVector::from_vec(c.mean), cov)
            })
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(components)
    }
}

impl From<GaussianMixture> for MixtureFile {
    fn from(m: GaussianMixture) -> Self {
        MixtureFile {
            dimension: m.dim,
            components: m
                .components
                .iter()
                .map(|c| ComponentFile {
                    weight: c.weight,
                    mean: c.mean.iter().copied().collect(),
                    covariance: MatrixSpec::Rows(linalg::matrix_to_rows(&c.covariance)),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PosteriorComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl PosteriorComponent {
    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// `p(x | y) = sum_i a_i N(x; m_i, S_i^{-1})`
#[derive(Clone, Debug)]
pub struct PosteriorMixture {
    dim: usize,
    components: Vec<PosteriorComponent>,
}

impl PosteriorMixture {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[PosteriorComponent] {
        &self.components
    }

    /// `sum_i a_i m_i`
    pub fn mean(&self) -> DVector<f64> {
        self.components
            .iter()
            .fold(DVector::zeros(self.dim), |acc, c| acc + &c.mean * c.weight)
    }

    /// Law of total covariance over the components.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mean = self.mean();
        self.components
            .iter()
            .fold(DMatrix::zeros(self.dim, self.dim), |acc, c| {
                let shift = &c.mean - &mean;
                acc + (c.covariance() + &shift * shift.transpose()) * c.weight
            })
    }

    /// As a prior-style mixture (covariances instead of precisions).
    pub fn to_mixture(&self) -> Result<GaussianMixture> {
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        let components = self
            .components
            .iter()
            .map(|c| {
                let cov = c.covariance();
                GaussianComponent::new(c.weight / total, c.mean.clone(), (&cov + cov.transpose()) * 0.5)
            })
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(components)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn standard(d: usize) -> GaussianMixture {
        GaussianMixture::single(DVector::zeros(d), DMatrix::identity(d, d)).unwrap()
    }

    fn identity_model(sigma: f64) -> LinearForwardModel {
        LinearForwardModel::new(DMatrix::identity(2, 2), sigma).unwrap()
    }

    #[test]
    fn log_density_of_standard_normal() {
        let g = standard(2);
        let mode = g.log_density(&DVector::from_vec(vec![0.0, 0.0])).unwrap();
        assert_relative_eq!(mode, -(2.0 * PI).ln(), epsilon = 1e-14);
        let off = g.log_density(&DVector::from_vec(vec![3.0, 4.0])).unwrap();
        assert_relative_eq!(off, -(2.0 * PI).ln() - 12.5, epsilon = 1e-13);
    }

    #[test]
    fn log_density_matches_direct_two_term_sum() {
        // Direct evaluation of each bivariate density from its 2x2 inverse and determinant.
        fn bivariate(x: [f64; 2], c: [[f64; 2]; 2]) -> f64 {
            let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
            let q = (c[1][1] * x[0] * x[0] - 2.0 * c[0][1] * x[0] * x[1] + c[0][0] * x[1] * x[1]) / det;
            (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
        }
        let x = [1.0, 1.0];
        let direct = 0.5 * bivariate(x, [[2.0, 0.5], [0.5, 0.15]]) + 0.5 * bivariate(x, [[0.15, 0.5], [0.5, 2.0]]);
        let value = GaussianMixture::crossed_pair()
            .log_density(&DVector::from_vec(x.to_vec()))
            .unwrap();
        assert_relative_eq!(value, direct.ln(), max_relative = 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = standard(2);
        assert!(matches!(g.log_density(&DVector::zeros(3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn rejects_bad_components() {
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            GaussianComponent::new(1.0, DVector::zeros(2), singular),
            Err(Error::DegenerateModel(_))
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(GaussianComponent::new(1.0, DVector::zeros(2), asym).is_err());
        assert!(GaussianComponent::new(-0.1, DVector::zeros(1), DMatrix::identity(1, 1)).is_err());
        let half = GaussianComponent::new(0.5, DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        assert!(GaussianMixture::new(vec![half]).is_err());
    }

    #[test]
    fn collapsed_gaussian_samples_sit_on_the_mean() {
        let g = GaussianMixture::single(DVector::from_vec(vec![5.0, 5.0]), DMatrix::identity(2, 2) * 1e-12).unwrap();
        let s = g.sample(3, 1).unwrap();
        assert_eq!(s.len(), 3);
        for p in s.iter() {
            assert!((p[0] - 5.0).abs() < 1e-4 && (p[1] - 5.0).abs() < 1e-4);
        }
    }

    #[test]
    fn standard_normal_sample_moments() {
        let n = 100_000;
        let s = standard(2).sample(n, 17).unwrap();
        let tol_mean = 4.0 / (n as f64).sqrt();
        let mut mean = [0.0; 2];
        for p in s.iter() {
            mean[0] += p[0] / n as f64;
            mean[1] += p[1] / n as f64;
        }
        assert!(mean[0].abs() < tol_mean.max(0.02) && mean[1].abs() < tol_mean.max(0.02));
        let mut cov = [[0.0; 2]; 2];
        for p in s.iter() {
            for a in 0..2 {
                for b in 0..2 {
                    cov[a][b] += (p[a] - mean[a]) * (p[b] - mean[b]) / n as f64;
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((cov[a][b] - target).abs() < 0.05, "cov[{a}][{b}] = {}", cov[a][b]);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_rejects_zero() {
        let g = GaussianMixture::crossed_pair();
        assert_eq!(g.sample(100, 5).unwrap(), g.sample(100, 5).unwrap());
        assert_ne!(g.sample(100, 5).unwrap(), g.sample(100, 6).unwrap());
        assert!(g.sample(0, 5).is_err());
    }

    #[test]
    fn conjugate_posterior() {
        let post = standard(2)
            .posterior(&identity_model(1.0), &Observation::new(vec![2.0, 4.0]))
            .unwrap();
        assert_eq!(post.components().len(), 1);
        let c = &post.components()[0];
        assert_relative_eq!(c.weight, 1.0);
        assert_relative_eq!(c.mean, DVector::from_vec(vec![1.0, 2.0]), epsilon = 1e-14);
        assert_relative_eq!(c.precision, DMatrix::identity(2, 2) * 2.0, epsilon = 1e-14);
    }

    #[test]
    fn uninformative_observation_returns_prior() {
        let mu = DVector::from_vec(vec![1.0, -2.0]);
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let prior = GaussianMixture::single(mu.clone(), sigma.clone()).unwrap();
        let fwd = LinearForwardModel::new(DMatrix::zeros(2, 2), 1.0).unwrap();
        let post = prior.posterior(&fwd, &Observation::new(vec![3.0, 3.0])).unwrap();
        let c = &post.components()[0];
        assert_relative_eq!(c.mean, mu, epsilon = 1e-12);
        assert_relative_eq!(c.precision, sigma.try_inverse().unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn posterior_weights_match_marginal_evidence() {
        // a_i is proportional to w_i N(y; A mu_i, sigma^2 I + A Sigma_i A^T).
        let prior = GaussianMixture::new(vec![
            GaussianComponent::new(
                0.3,
                DVector::from_vec(vec![1.0, 0.0]),
                DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]),
            )
            .unwrap(),
            GaussianComponent::new(
                0.7,
                DVector::from_vec(vec![-1.0, 2.0]),
                DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 2.0]),
            )
            .unwrap(),
        ])
        .unwrap();
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 0.0, 2.0, -1.0, 1.0]);
        let fwd = LinearForwardModel::new(a.clone(), 0.7).unwrap();
        let y = Observation::new(vec![0.5, 3.0, 1.0]);
        let post = prior.posterior(&fwd, &y).unwrap();

        let evidence: Vec<f64> = prior
            .components()
            .iter()
            .map(|c| {
                let cov = DMatrix::identity(3, 3) * 0.49 + &a * c.covariance() * a.transpose();
                let marginal = GaussianMixture::single(&a * c.mean(), cov).unwrap();
                c.weight() * marginal.log_density(y.values()).unwrap().exp()
            })
            .collect();
        let total: f64 = evidence.iter().sum();
        for (c, e) in post.components().iter().zip(&evidence) {
            assert_relative_eq!(c.weight, e / total, max_relative = 1e-10);
        }
    }

    #[test]
    fn posterior_consistency_identity() {
        let prior = GaussianMixture::crossed_pair();
        let fwd = identity_model(1.0);
        let y = Observation::new(vec![0.0, 8.0]);
        let post = prior.posterior(&fwd, &y).unwrap();
        let total: f64 = post.components().iter().map(|c| c.weight).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-10);
        for (pc, c) in post.components().iter().zip(prior.components()) {
            let lhs = &pc.precision * &pc.mean;
            let rhs = c.precision() * c.mean() + y.values();
            assert!((lhs - rhs).amax() < 1e-10);
        }
    }

    #[test]
    fn file_round_trip_and_flat_covariance() {
        let text = r#"
            dimension = 2
            [[components]]
            weight = 1.0
            mean = [0.0, 1.0]
            covariance = [2.0, 0.5, 0.5, 1.0]
        "#;
        let g: GaussianMixture = toml::from_str(text).unwrap();
        assert_eq!(g.components()[0].covariance()[(0, 1)], 0.5);
        let back: GaussianMixture = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);

        let asym = text.replace("0.5, 0.5", "0.5, 0.4");
        assert!(toml::from_str::<GaussianMixture>(&asym).is_err());
    }
}
