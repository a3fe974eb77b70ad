//! Denoisers: the exact MMSE denoiser of a Gaussian mixture, its thresholded
//! ("mismatched") variant, and a wrapper for arbitrary functions.
//!
//! For `z = x + n`, `n ~ N(0, eps I)` and `x ~ sum_i w_i N(mu_i, Sigma_i)`,
//! with `C_i = Sigma_i + eps I`:
//!
//! ```text
//! D(z)   = sum_i r_i(z) n_i(z)
//! n_i(z) = (Sigma_i^{-1} + I/eps)^{-1} (Sigma_i^{-1} mu_i + z/eps)
//!        = eps C_i^{-1} mu_i + Sigma_i C_i^{-1} z
//! r_i(z) ∝ w_i N(z; mu_i, C_i)
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gmm::GaussianMixture;
use crate::linalg::{self, check_len};

/// A map `R^d -> R^d` used in place of the prior score.
///
/// Implementations must be pure and reentrant; chains call them from many
/// threads at once.
pub trait Denoiser: Send + Sync {
    fn denoise(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Input/output dimension, when fixed.
    fn dim(&self) -> Option<usize> {
        None
    }

    /// Stable human-readable identity recorded in chain provenance.
    fn identity(&self) -> String;
}

impl fmt::Debug for dyn Denoiser {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.identity())
    }
}

#[derive(Clone, Debug)]
struct SmoothedComponent {
    /// `log w_i - (d log(2 pi) + log det C_i) / 2`
    log_scale: f64,
    mean: DVector<f64>,
    /// `C_i^{-1}`
    precision: DMatrix<f64>,
    /// `Sigma_i C_i^{-1}`
    gain: DMatrix<f64>,
    /// `eps C_i^{-1} mu_i`
    offset: DVector<f64>,
}

/// Exact `E[x | z]` for a Gaussian-mixture prior and noise variance `eps`.
#[derive(Clone, Debug)]
pub struct MmseDenoiser {
    eps: f64,
    dim: usize,
    mixture_hash: String,
    components: Vec<SmoothedComponent>,
}

impl MmseDenoiser {
    pub fn new(mixture: &GaussianMixture, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "denoiser noise variance eps = {eps} must be finite and > 0"
            )));
        }
        let d = mixture.dim();
        let eye = DMatrix::<f64>::identity(d, d);
        let mut components = Vec::new();
        for c in mixture.components().iter().filter(|c| c.weight() > 0.0) {
            let smoothed = c.covariance() + &eye * eps;
            let chol = linalg::cholesky(&smoothed, "smoothed covariance")?;
            let precision = chol.inverse();
            let gain = c.covariance() * &precision;
            let offset = &precision * c.mean() * eps;
            let log_scale = c.weight().ln() - 0.5 * (d as f64 * (2.0 * PI).ln() + linalg::log_det(&chol));
            components.push(SmoothedComponent {
                log_scale,
                mean: c.mean().clone(),
                precision,
                gain,
                offset,
            });
        }
        Ok(Self {
            eps,
            dim: d,
            mixture_hash: mixture.content_hash(),
            components,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn log_terms(&self, x: &DVector<f64>) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                let r = x - &c.mean;
                c.log_scale - 0.5 * r.dot(&(&c.precision * &r))
            })
            .collect()
    }

    /// `r_i(x)`, the posterior component probabilities given the noisy point.
    pub fn responsibilities(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        check_len(x, self.dim, "point")?;
        Ok(linalg::softmax(&self.log_terms(x)))
    }

    /// The per-component estimates `n_i(x)`.
    pub fn component_estimates(&self, x: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        check_len(x, self.dim, "point")?;
        Ok(self.components.iter().map(|c| &c.gain * x + &c.offset).collect())
    }

    /// `D(x)`, checking the dimension.
    pub fn try_denoise(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(x, self.dim, "point")?;
        Ok(self.denoise_unchecked(x))
    }

    fn denoise_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        let weights = linalg::softmax(&self.log_terms(x));
        self.components
            .iter()
            .zip(weights)
            .fold(DVector::zeros(self.dim), |acc, (c, r)| {
                if r > 0.0 {
                    acc + (&c.gain * x + &c.offset) * r
                } else {
                    acc
                }
            })
    }

    /// Tweedie score `(D(x) - x) / eps` of the smoothed prior.
    pub fn score(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok((self.try_denoise(x)? - x) / self.eps)
    }
}

impl Denoiser for MmseDenoiser {
    /// Panics if `x` has the wrong dimension; use [`MmseDenoiser::try_denoise`]
    /// for a checked call.
    fn denoise(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.dim, "denoiser input dimension");
        self.denoise_unchecked(x)
    }

    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn identity(&self) -> String {
        format!("mmse(eps={:?}, prior={})", self.eps, self.mixture_hash)
    }
}

/// `D^c(x) = D(x)` when `x[0] > c`, the zero vector otherwise (including
/// `x[0] == c`).
#[derive(Clone, Debug)]
pub struct MismatchedDenoiser {
    base: Arc<MmseDenoiser>,
    threshold: f64,
}

impl MismatchedDenoiser {
    pub fn new(base: Arc<MmseDenoiser>, threshold: f64) -> Self {
        Self { base, threshold }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn base(&self) -> &MmseDenoiser {
        &self.base
    }
}

impl Denoiser for MismatchedDenoiser {
    fn denoise(&self, x: &DVector<f64>) -> DVector<f64> {
        if x[0] > self.threshold {
            self.base.denoise(x)
        } else {
            DVector::zeros(x.len())
        }
    }

    fn dim(&self) -> Option<usize> {
        self.base.dim()
    }

    fn identity(&self) -> String {
        format!("mismatched(c={:?}, base={})", self.threshold, self.base.identity())
    }
}

/// Wraps a user function as a [`Denoiser`].
pub struct FnDenoiser<F> {
    name: String,
    dim: Option<usize>,
    f: F,
}

impl<F> FnDenoiser<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    pub fn new(name: impl Into<String>, dim: Option<usize>, f: F) -> Self {
        Self {
            name: name.into(),
            dim,
            f,
        }
    }
}

impl<F> Denoiser for FnDenoiser<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn denoise(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }

    fn dim(&self) -> Option<usize> {
        self.dim
    }

    fn identity(&self) -> String {
        self.name.clone()
    }
}

/// `D(x)` for `mixture` at noise variance `eps`.
pub fn exact_mmse_denoise(mixture: &GaussianMixture, eps: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    MmseDenoiser::new(mixture, eps)?.try_denoise(x)
}

/// `grad log p_eps(x)` through Tweedie's formula, `(D(x) - x) / eps`.
pub fn smoothed_prior_score(mixture: &GaussianMixture, eps: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    MmseDenoiser::new(mixture, eps)?.score(x)
}
