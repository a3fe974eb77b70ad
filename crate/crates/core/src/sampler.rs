//! The PnP-ULA chain.
//!
//! ```text
//! b(x)    = A^T (y - A x) / sigma^2 + (alpha / eps) (D(x) - x) + (1 / lambda) (P_S(x) - x)
//! x_{k+1} = x_k + delta b(x_k) + sqrt(2 delta) z_{k+1},   z ~ N(0, I)
//! ```

use std::fmt;
use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::forward::{LinearForwardModel, Observation};
use crate::linalg::check_len;
use crate::samples::{Provenance, SampleSet};

/// States with a coordinate beyond this magnitude count as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Convex compact set `S` for the projection term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Projection {
    /// Euclidean ball centred at the origin.
    Ball { radius: f64 },
    /// Axis-aligned box `[low, high]`.
    Box { low: Vec<f64>, high: Vec<f64> },
}

impl Projection {
    pub fn unit_box(d: usize) -> Self {
        Projection::Box {
            low: vec![0.0; d],
            high: vec![1.0; d],
        }
    }

    fn validate(&self, dim: Option<usize>) -> Result<()> {
        match self {
            Projection::Ball { radius } => {
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "projection radius {radius} must be finite and > 0"
                    )));
                }
            }
            Projection::Box { low, high } => {
                if low.len() != high.len() || low.is_empty() {
                    return Err(Error::Dimension(format!(
                        "box bounds have lengths {} and {}",
                        low.len(),
                        high.len()
                    )));
                }
                if let Some(d) = dim.filter(|&d| d != low.len()) {
                    return Err(Error::Dimension(format!(
                        "box has dimension {}, state has {d}",
                        low.len()
                    )));
                }
                if low
                    .iter()
                    .zip(high)
                    .any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite())
                {
                    return Err(Error::InvalidParameter(
                        "box needs finite bounds with low < high".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        match self {
            Projection::Ball { radius } => x.norm() <= *radius,
            Projection::Box { low, high } => x.iter().zip(low.iter().zip(high)).all(|(v, (l, h))| l <= v && v <= h),
        }
    }

    /// Euclidean projection onto `S`.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Projection::Ball { radius } => {
                let norm = x.norm();
                if norm <= *radius {
                    x.clone()
                } else {
                    x * (*radius / norm)
                }
            }
            Projection::Box { low, high } => DVector::from_iterator(
                x.len(),
                x.iter().zip(low.iter().zip(high)).map(|(v, (l, h))| v.clamp(*l, *h)),
            ),
        }
    }
}

/// Everything in the drift except the forward model and the observation.
#[derive(Clone)]
pub struct DriftConfig {
    eps: f64,
    alpha: f64,
    lambda: f64,
    projection: Projection,
    denoiser: Arc<dyn Denoiser>,
}

impl fmt::Debug for DriftConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftConfig")
            .field("eps", &self.eps)
            .field("alpha", &self.alpha)
            .field("lambda", &self.lambda)
            .field("projection", &self.projection)
            .field("denoiser", &self.denoiser.identity())
            .finish()
    }
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} = {value} must be finite and > 0"
        )))
    }
}

impl DriftConfig {
    pub fn new(eps: f64, alpha: f64, lambda: f64, projection: Projection, denoiser: Arc<dyn Denoiser>) -> Result<Self> {
        Self::check(eps, alpha, lambda, &projection, denoiser.dim())?;
        Ok(Self {
            eps,
            alpha,
            lambda,
            projection,
            denoiser,
        })
    }

    /// The checks made by [`DriftConfig::new`], without a denoiser.
    pub fn check(eps: f64, alpha: f64, lambda: f64, projection: &Projection, dim: Option<usize>) -> Result<()> {
        check_positive("eps", eps)?;
        check_positive("alpha", alpha)?;
        check_positive("lambda", lambda)?;
        projection.validate(dim)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn denoiser(&self) -> &Arc<dyn Denoiser> {
        &self.denoiser
    }

    /// Same configuration with another denoiser.
    pub fn with_denoiser(&self, denoiser: Arc<dyn Denoiser>) -> Result<Self> {
        Self::new(self.eps, self.alpha, self.lambda, self.projection.clone(), denoiser)
    }
}

/// The drift bound to one forward model and observation, with `A^T y / sigma^2`
/// and `A^T A / sigma^2` precomputed.
struct BoundDrift<'a> {
    config: &'a DriftConfig,
    data_term: DVector<f64>,
    gram: DMatrix<f64>,
}

impl<'a> BoundDrift<'a> {
    fn new(config: &'a DriftConfig, fwd: &LinearForwardModel, y: &Observation) -> Result<Self> {
        let d = fwd.input_dim();
        check_len(y.values(), fwd.output_dim(), "observation")?;
        if let Some(dd) = config.denoiser.dim().filter(|&dd| dd != d) {
            return Err(Error::Dimension(format!(
                "denoiser acts on dimension {dd}, forward model on {d}"
            )));
        }
        config.projection.validate(Some(d))?;
        let s2 = fwd.sigma() * fwd.sigma();
        Ok(Self {
            config,
            data_term: fwd.matrix().tr_mul(y.values()) / s2,
            gram: fwd.matrix().tr_mul(fwd.matrix()) / s2,
        })
    }

    /// Drift at `x` and whether the projection term is active there.
    fn eval(&self, x: &DVector<f64>) -> (DVector<f64>, bool) {
        let c = self.config;
        let mut b = &self.data_term - &self.gram * x;
        let residual = c.denoiser.denoise(x) - x;
        b.axpy(c.alpha / c.eps, &residual, 1.0);
        let active = !c.projection.contains(x);
        if active {
            let pull = c.projection.project(x) - x;
            b.axpy(1.0 / c.lambda, &pull, 1.0);
        }
        (b, active)
    }
}

/// `b(x)`.
pub fn drift(
    config: &DriftConfig,
    fwd: &LinearForwardModel,
    y: &Observation,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len(x, fwd.input_dim(), "state")?;
    Ok(BoundDrift::new(config, fwd, y)?.eval(x).0)
}

fn magnitude(x: &DVector<f64>) -> f64 {
    x.iter().fold(
        0.0f64,
        |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY },
    )
}

/// `x + delta b(x) + sqrt(2 delta) noise`, with caller-supplied standard normals.
pub fn ula_step(
    config: &DriftConfig,
    fwd: &LinearForwardModel,
    y: &Observation,
    x: &DVector<f64>,
    delta: f64,
    noise: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_positive("delta", delta)?;
    check_len(noise, x.len(), "noise")?;
    let b = drift(config, fwd, y, x)?;
    let next = x + b * delta + noise * (2.0 * delta).sqrt();
    let mag = magnitude(&next);
    if !mag.is_finite() {
        return Err(Error::Divergence {
            step: 1,
            delta,
            magnitude: mag,
        });
    }
    Ok(next)
}

/// Run length, retention and seeding of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainParams {
    pub delta: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "one")]
    pub thinning: usize,
    pub seed: u64,
    pub x0: Vec<f64>,
}

fn one() -> usize {
    1
}

impl ChainParams {
    pub fn new(delta: f64, n_steps: usize, seed: u64, x0: Vec<f64>) -> Self {
        Self {
            delta,
            n_steps,
            burn_in: 0,
            thinning: 1,
            seed,
            x0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("delta", self.delta)?;
        if self.n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be >= 1".into()));
        }
        if self.thinning == 0 {
            return Err(Error::InvalidParameter("thinning must be >= 1".into()));
        }
        if self.burn_in >= self.n_steps {
            return Err(Error::InvalidParameter(format!(
                "burn_in = {} leaves nothing of n_steps = {}",
                self.burn_in, self.n_steps
            )));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("x0 must be finite".into()));
        }
        Ok(())
    }

    /// Number of states a chain with these parameters keeps.
    pub fn retained(&self) -> usize {
        (self.n_steps - self.burn_in).div_ceil(self.thinning)
    }

    /// Whether the state after step `k` (1-based) is kept.
    fn keeps(&self, k: usize) -> bool {
        k > self.burn_in && (k - self.burn_in - 1).is_multiple_of(self.thinning)
    }
}

/// Provenance of a chain's sample set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub params: ChainParams,
    pub eps: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub projection: Projection,
    pub denoiser: String,
    pub forward: LinearForwardModel,
    pub forward_hash: String,
    pub observation: Vec<f64>,
    /// Steps at which the projection term was nonzero.
    pub projection_active_steps: u64,
    /// `max_step_size` with the denoiser Lipschitz constant taken as 0, i.e.
    /// an upper bound on the admissible step.
    pub delta_bound: f64,
}

/// Runs the chain from `params.x0` and keeps the states selected by burn-in
/// and thinning. Steps are numbered from 1 (the state after the first update).
pub fn run_chain(
    config: &DriftConfig,
    fwd: &LinearForwardModel,
    y: &Observation,
    params: &ChainParams,
) -> Result<SampleSet> {
    params.validate()?;
    let d = fwd.input_dim();
    if params.x0.len() != d {
        return Err(Error::Dimension(format!(
            "x0 has length {}, state dimension is {d}",
            params.x0.len()
        )));
    }
    let bound = BoundDrift::new(config, fwd, y)?;
    let delta_bound = max_step_size(config, fwd, 0.0);
    if params.delta > delta_bound {
        warn!(
            "step size {} exceeds the admissible bound {:.4e} (computed with denoiser Lipschitz constant 0)",
            params.delta, delta_bound
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let scale = (2.0 * params.delta).sqrt();
    let mut x = DVector::from_column_slice(&params.x0);
    let mut out = SampleSet::with_capacity(d, params.retained());
    let mut active_steps = 0u64;
    for k in 1..=params.n_steps {
        let (b, active) = bound.eval(&x);
        active_steps += u64::from(active);
        x.axpy(params.delta, &b, 1.0);
        for v in x.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += scale * z;
        }
        let mag = magnitude(&x);
        if !(mag <= DIVERGENCE_THRESHOLD) {
            return Err(Error::Divergence {
                step: k,
                delta: params.delta,
                magnitude: mag,
            });
        }
        if params.keeps(k) {
            out.push(k as u64, x.as_slice())?;
        }
    }
    out.provenance = Provenance::Chain(Box::new(ChainMeta {
        params: params.clone(),
        eps: config.eps,
        alpha: config.alpha,
        lambda: config.lambda,
        projection: config.projection.clone(),
        denoiser: config.denoiser.identity(),
        forward: fwd.clone(),
        forward_hash: fwd.content_hash(),
        observation: y.values().iter().copied().collect(),
        projection_active_steps: active_steps,
        delta_bound,
    }));
    Ok(out)
}

/// `(1/3) (L + (M + 1)/eps + 1/lambda)^{-1}` with `L` from the forward model
/// and `M` a Lipschitz constant (or estimate) of the denoiser.
pub fn max_step_size(config: &DriftConfig, fwd: &LinearForwardModel, denoiser_lipschitz: f64) -> f64 {
    step_size_bound(fwd.lipschitz_constant(), denoiser_lipschitz, config.eps, config.lambda)
}

/// `(1/3) (l + (m + 1)/eps + 1/lambda)^{-1}`.
pub fn step_size_bound(l: f64, m: f64, eps: f64, lambda: f64) -> f64 {
    1.0 / (3.0 * (l + (m + 1.0) / eps + 1.0 / lambda))
}

/// `lambda = 1 / (2 (2/sigma^2 + alpha/eps^2))` and
/// `delta = 1 / (3 (1/sigma^2 + 1/lambda + alpha/eps^2))`.
pub fn recommended_params(sigma: f64, alpha: f64, eps: f64) -> Result<(f64, f64)> {
    check_positive("sigma", sigma)?;
    check_positive("alpha", alpha)?;
    check_positive("eps", eps)?;
    let s2 = sigma * sigma;
    let prior = alpha / (eps * eps);
    let lambda = 1.0 / (2.0 * (2.0 / s2 + prior));
    let delta = 1.0 / (3.0 * (1.0 / s2 + 1.0 / lambda + prior));
    Ok((lambda, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{FnDenoiser, MmseDenoiser};
    use crate::gmm::GaussianMixture;
    use approx::assert_relative_eq;

    fn v(values: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(values)
    }

    fn identity_denoiser() -> Arc<dyn Denoiser> {
        Arc::new(FnDenoiser::new("identity", Some(2), |x: &DVector<f64>| x.clone()))
    }

    fn zero_denoiser() -> Arc<dyn Denoiser> {
        Arc::new(FnDenoiser::new("zero", Some(2), |x: &DVector<f64>| {
            DVector::zeros(x.len())
        }))
    }

    fn id_model() -> LinearForwardModel {
        LinearForwardModel::scaled_identity(2, 1.0, 1.0).unwrap()
    }

    #[test]
    fn projections() {
        let ball = Projection::Ball { radius: 1.0 };
        assert_eq!(ball.project(&v(&[0.3, 0.4])), v(&[0.3, 0.4]));
        assert_relative_eq!(ball.project(&v(&[3.0, 4.0])), v(&[0.6, 0.8]), epsilon = 1e-15);
        let unit = Projection::unit_box(2);
        assert_eq!(unit.project(&v(&[-0.5, 0.7])), v(&[0.0, 0.7]));
        assert!(Projection::Ball { radius: 0.0 }.validate(None).is_err());
        assert!(Projection::Box {
            low: vec![0.0],
            high: vec![0.0]
        }
        .validate(None)
        .is_err());
        assert!(unit.validate(Some(3)).is_err());
    }

    #[test]
    fn drift_examples() {
        let y = Observation::new(vec![1.0, -2.0]);
        let cfg = DriftConfig::new(0.1, 1.0, 1.0, Projection::Ball { radius: 10.0 }, identity_denoiser()).unwrap();
        let x = v(&[1.0, -2.0]);
        assert_eq!(drift(&cfg, &id_model(), &y, &x).unwrap(), v(&[0.0, 0.0]));

        let cfg = DriftConfig::new(0.1, 1.0, 1.0, Projection::Ball { radius: 10.0 }, zero_denoiser()).unwrap();
        let x = v(&[0.5, 0.5]);
        let b = drift(&cfg, &id_model(), &y, &x).unwrap();
        let expected = id_model().likelihood_score(&y, &x).unwrap() + (DVector::zeros(2) - &x) / 0.1;
        assert_relative_eq!(b, expected, epsilon = 1e-14);

        // Outside the unit ball with a vanishing score: only the projection term remains.
        let cfg = DriftConfig::new(0.1, 1.0, 0.5, Projection::Ball { radius: 1.0 }, identity_denoiser()).unwrap();
        let x = v(&[2.0, 0.0]);
        let b = drift(&cfg, &id_model(), &Observation::new(vec![2.0, 0.0]), &x).unwrap();
        assert_relative_eq!(b, v(&[-2.0, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn step_examples() {
        let y = Observation::new(vec![1.0, -2.0]);
        let cfg = DriftConfig::new(0.1, 1.0, 1.0, Projection::Ball { radius: 10.0 }, identity_denoiser()).unwrap();
        let zero = DVector::zeros(2);
        assert_eq!(
            ula_step(&cfg, &id_model(), &y, &v(&[1.0, -2.0]), 0.05, &zero).unwrap(),
            v(&[1.0, -2.0])
        );
        let x = v(&[0.0, 0.0]);
        let b = drift(&cfg, &id_model(), &y, &x).unwrap();
        assert_eq!(ula_step(&cfg, &id_model(), &y, &x, 0.05, &zero).unwrap(), &x + b * 0.05);
        let noise = v(&[1.0, -1.0]);
        let stepped = ula_step(&cfg, &id_model(), &y, &x, 0.02, &noise).unwrap();
        assert_relative_eq!(stepped, v(&[0.02 + 0.2, -0.04 - 0.2]), epsilon = 1e-15);
    }

    #[test]
    fn paper_setup_single_step() {
        let mix = GaussianMixture::crossed_pair();
        let den = Arc::new(MmseDenoiser::new(&mix, 0.05).unwrap());
        let cfg = DriftConfig::new(0.05, 0.3, 1.0, Projection::Ball { radius: 20.0 }, den).unwrap();
        let y = Observation::new(vec![0.0, 8.0]);
        let x = DVector::zeros(2);
        // D(0) = 0 for zero-mean components, so only the data term acts at the origin.
        let b = drift(&cfg, &id_model(), &y, &x).unwrap();
        assert_relative_eq!(b, v(&[0.0, 8.0]), epsilon = 1e-14);
        let next = ula_step(&cfg, &id_model(), &y, &x, 0.05, &DVector::zeros(2)).unwrap();
        assert_relative_eq!(next, v(&[0.0, 0.4]), epsilon = 1e-14);
    }

    #[test]
    fn divergence_is_reported() {
        let blowup: Arc<dyn Denoiser> = Arc::new(FnDenoiser::new("blowup", Some(2), |x: &DVector<f64>| x * 1e6));
        let cfg = DriftConfig::new(0.1, 1.0, 1e9, Projection::Ball { radius: 1e15 }, blowup).unwrap();
        let params = ChainParams::new(0.5, 1000, 1, vec![1.0, 1.0]);
        match run_chain(&cfg, &id_model(), &Observation::new(vec![0.0, 0.0]), &params) {
            Err(Error::Divergence { step, delta, .. }) => {
                assert!((1..1000).contains(&step));
                assert_eq!(delta, 0.5);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn retention_and_single_step() {
        let mix = GaussianMixture::crossed_pair();
        let den = Arc::new(MmseDenoiser::new(&mix, 0.05).unwrap());
        let cfg = DriftConfig::new(0.05, 0.3, 1.0, Projection::Ball { radius: 20.0 }, den).unwrap();
        let y = Observation::new(vec![0.0, 8.0]);

        let mut params = ChainParams::new(0.01, 1, 42, vec![0.0, 0.0]);
        let one = run_chain(&cfg, &id_model(), &y, &params).unwrap();
        assert_eq!(one.len(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let noise = DVector::from_fn(2, |_, _| StandardNormal.sample(&mut rng));
        let expected = ula_step(&cfg, &id_model(), &y, &DVector::zeros(2), 0.01, &noise).unwrap();
        assert_eq!(one.vector(0), expected);

        params.n_steps = 100;
        params.burn_in = 10;
        params.thinning = 7;
        let kept = run_chain(&cfg, &id_model(), &y, &params).unwrap();
        assert_eq!(kept.len(), params.retained());
        assert_eq!(kept.steps().first(), Some(&11));
        assert!(kept.steps().windows(2).all(|w| w[1] - w[0] == 7));
        assert!(*kept.steps().last().unwrap() <= 100);

        params.burn_in = 100;
        assert!(run_chain(&cfg, &id_model(), &y, &params).is_err());
    }

    #[test]
    fn chains_are_deterministic() {
        let den = Arc::new(MmseDenoiser::new(&GaussianMixture::crossed_pair(), 0.05).unwrap());
        let cfg = DriftConfig::new(0.05, 0.3, 1.0, Projection::Ball { radius: 20.0 }, den).unwrap();
        let y = Observation::new(vec![0.0, 8.0]);
        let params = ChainParams::new(0.05, 2000, 9, vec![0.0, 0.0]);
        let a = run_chain(&cfg, &id_model(), &y, &params).unwrap();
        let b = run_chain(&cfg, &id_model(), &y, &params).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a, b);
    }

    #[test]
    fn step_size_formulas() {
        let cfg = DriftConfig::new(1.0, 1.0, 1.0, Projection::Ball { radius: 1.0 }, identity_denoiser()).unwrap();
        assert_relative_eq!(max_step_size(&cfg, &id_model(), 1.0), 1.0 / 12.0, epsilon = 1e-15);
        let zero_a = LinearForwardModel::new(DMatrix::zeros(2, 2), 1.0).unwrap();
        assert_relative_eq!(max_step_size(&cfg, &zero_a, 0.0), 1.0 / 6.0, epsilon = 1e-15);

        let (lambda, delta) = recommended_params(1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(lambda, 1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(delta, 1.0 / 24.0, epsilon = 1e-15);

        let (sigma, eps) = (1.0 / 255.0, 5.0 / 255.0);
        let (lambda, delta) = recommended_params(sigma, 1.0, eps).unwrap();
        // 1/sigma^2 = 65025, 1/eps^2 = 2601.
        assert_relative_eq!(lambda, 1.0 / (2.0 * (2.0 * 65025.0 + 2601.0)), max_relative = 1e-12);
        assert_relative_eq!(
            delta,
            1.0 / (3.0 * (65025.0 + 2.0 * (2.0 * 65025.0 + 2601.0) + 2601.0)),
            max_relative = 1e-12
        );
    }

    #[test]
    fn recommended_lambda_meets_contraction_hypothesis() {
        // Single Gaussian N(0, I): the MMSE denoiser is x / (1 + eps), so M = 1 / (1 + eps).
        for eps in [0.05, 0.5, 1.0] {
            let fwd = id_model();
            let (lambda, _) = recommended_params(fwd.sigma(), 1.0, eps).unwrap();
            let m = 1.0 / (1.0 + eps);
            let lhs = 2.0 * lambda * (fwd.lipschitz_constant() + (m + 1.0) / eps - fwd.concavity_constant().min(0.0));
            assert!(lhs <= 1.0, "eps = {eps}: {lhs}");
        }
    }
}
