//! Distances between functions and between sample clouds, plus simple
//! moment and regularity diagnostics.

use nalgebra::DVector;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{self, CostMatrix};
use crate::error::{Error, Result};
use crate::provenance::derive_seed;
use crate::samples::SampleSet;

/// Largest cloud accepted by [`wasserstein1_exact`].
pub const EXACT_TRANSPORT_LIMIT: usize = 4096;
/// Offset of the near-coincident pairs in [`lipschitz_estimate`].
pub const LIPSCHITZ_PERTURBATION: f64 = 1e-4;

/// Root-mean-square distance between two functions over a sample set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudometricReport {
    pub value: f64,
    pub n_points: usize,
    /// `"posterior-ref"` or `"prior"`.
    pub integrating_distribution: String,
    /// Delta-method standard error treating the points as independent;
    /// optimistic for correlated chain samples.
    pub std_error: f64,
}

fn l2_pseudometric<F1, F2>(f1: F1, f2: F2, samples: &SampleSet, label: &str) -> Result<PseudometricReport>
where
    F1: Fn(&DVector<f64>) -> DVector<f64>,
    F2: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = samples.len();
    if n == 0 {
        return Err(Error::InsufficientData("pseudometric needs at least one sample".into()));
    }
    let squares: Vec<f64> = samples.vectors().map(|x| (f1(&x) - f2(&x)).norm_squared()).collect();
    let mean = squares.iter().sum::<f64>() / n as f64;
    let value = mean.sqrt();
    let std_error = if n > 1 && value > 0.0 {
        let var = squares.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt() / (2.0 * value)
    } else {
        0.0
    };
    Ok(PseudometricReport {
        value,
        n_points: n,
        integrating_distribution: label.to_string(),
        std_error,
    })
}

/// `sqrt(E ||f1(X) - f2(X)||^2)` with `X` the reference chain's samples.
pub fn posterior_l2<F1, F2>(f1: F1, f2: F2, reference_samples: &SampleSet) -> Result<PseudometricReport>
where
    F1: Fn(&DVector<f64>) -> DVector<f64>,
    F2: Fn(&DVector<f64>) -> DVector<f64>,
{
    l2_pseudometric(f1, f2, reference_samples, "posterior-ref")
}

/// As [`posterior_l2`], integrating over prior samples instead.
pub fn prior_l2<F1, F2>(f1: F1, f2: F2, prior_samples: &SampleSet) -> Result<PseudometricReport>
where
    F1: Fn(&DVector<f64>) -> DVector<f64>,
    F2: Fn(&DVector<f64>) -> DVector<f64>,
{
    l2_pseudometric(f1, f2, prior_samples, "prior")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportMethod {
    ExactAssignment,
    SubsampleAverage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportEstimate {
    pub value: f64,
    pub method: TransportMethod,
    /// Points per cloud entering each assignment.
    pub n_used: usize,
    /// Standard error across repeats; zero for exact or single-repeat results.
    pub std_error: f64,
}

fn check_clouds(a: &SampleSet, b: &SampleSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "clouds have dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("transport between empty clouds".into()));
    }
    Ok(())
}

/// Optimal assignment cost between two equal-size clouds, divided by `n`.
pub fn wasserstein1_exact(a: &SampleSet, b: &SampleSet) -> Result<TransportEstimate> {
    check_clouds(a, b)?;
    if a.len() != b.len() {
        return Err(Error::SizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n > EXACT_TRANSPORT_LIMIT {
        return Err(Error::Budget {
            n,
            limit: EXACT_TRANSPORT_LIMIT,
        });
    }
    let costs = CostMatrix::from_fn(n, |i, j| {
        a.point(i)
            .iter()
            .zip(b.point(j))
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt()
    });
    let plan = assignment::solve(&costs);
    Ok(TransportEstimate {
        value: costs.total(&plan) / n as f64,
        method: TransportMethod::ExactAssignment,
        n_used: n,
        std_error: 0.0,
    })
}

fn subsample(set: &SampleSet, n_sub: usize, rng: &mut ChaCha8Rng) -> SampleSet {
    let mut picked = index::sample(rng, set.len(), n_sub).into_vec();
    picked.sort_unstable();
    set.select(&picked)
}

/// Mean of exact W1 over `n_repeats` pairs of uniform subsamples (without
/// replacement) of size `n_sub`. Repeat `r` draws from a generator seeded by
/// `derive_seed(seed, r, "subsample")`, so results do not depend on thread
/// scheduling.
pub fn wasserstein1_estimate(
    a: &SampleSet,
    b: &SampleSet,
    n_sub: usize,
    n_repeats: usize,
    seed: u64,
) -> Result<TransportEstimate> {
    check_clouds(a, b)?;
    if n_sub == 0 || n_repeats == 0 {
        return Err(Error::InvalidParameter("n_sub and n_repeats must be >= 1".into()));
    }
    if n_sub > a.len().min(b.len()) {
        return Err(Error::InsufficientData(format!(
            "n_sub = {n_sub} exceeds cloud sizes {} and {}",
            a.len(),
            b.len()
        )));
    }
    if n_sub > EXACT_TRANSPORT_LIMIT {
        return Err(Error::Budget {
            n: n_sub,
            limit: EXACT_TRANSPORT_LIMIT,
        });
    }
    let values = (0..n_repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r as u64, "subsample"));
            let sa = subsample(a, n_sub, &mut rng);
            let sb = subsample(b, n_sub, &mut rng);
            wasserstein1_exact(&sa, &sb).map(|t| t.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    let std_error = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0) / r).sqrt()
    } else {
        0.0
    };
    Ok(TransportEstimate {
        value: mean,
        method: TransportMethod::SubsampleAverage,
        n_used: n_sub,
        std_error,
    })
}

/// Regular 2D histogram grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramGrid {
    pub low: [f64; 2],
    pub high: [f64; 2],
    pub bins: [usize; 2],
}

impl HistogramGrid {
    pub fn new(low: [f64; 2], high: [f64; 2], bins: [usize; 2]) -> Result<Self> {
        if (0..2).any(|k| !(low[k] < high[k]) || !low[k].is_finite() || !high[k].is_finite() || bins[k] == 0) {
            return Err(Error::InvalidParameter(
                "histogram grid needs finite low < high and >= 1 bin per axis".into(),
            ));
        }
        Ok(Self { low, high, bins })
    }

    /// Cell index, or `None` outside the grid (the upper edge belongs to the last cell).
    fn cell(&self, p: &[f64]) -> Option<usize> {
        let mut index = 0;
        for k in 0..2 {
            if !(p[k] >= self.low[k] && p[k] <= self.high[k]) {
                return None;
            }
            let t = (p[k] - self.low[k]) / (self.high[k] - self.low[k]);
            let b = ((t * self.bins[k] as f64) as usize).min(self.bins[k] - 1);
            index = index * self.bins[k] + b;
        }
        Some(index)
    }

    fn histogram(&self, s: &SampleSet) -> Vec<f64> {
        let cells = self.bins[0] * self.bins[1];
        // The final entry collects every point outside the grid.
        let mut counts = vec![0.0; cells + 1];
        for p in s.iter() {
            counts[self.cell(p).unwrap_or(cells)] += 1.0;
        }
        let n = s.len() as f64;
        counts.iter_mut().for_each(|c| *c /= n);
        counts
    }
}

/// Total variation between the two empirical laws after binning:
/// half the L1 distance between normalised histograms. Mass outside the grid
/// is pooled into a single extra cell.
pub fn tv_histogram(a: &SampleSet, b: &SampleSet, grid: &HistogramGrid) -> Result<f64> {
    for s in [a, b] {
        if s.dim() != 2 {
            return Err(Error::UnsupportedDimension(s.dim()));
        }
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("histogram of an empty cloud".into()));
    }
    let (ha, hb) = (grid.histogram(a), grid.histogram(b));
    let tv = 0.5 * ha.iter().zip(&hb).map(|(p, q)| (p - q).abs()).sum::<f64>();
    Ok(tv.clamp(0.0, 1.0))
}

/// Sample mean.
pub fn mmse_estimate(s: &SampleSet) -> Result<DVector<f64>> {
    if s.is_empty() {
        return Err(Error::InsufficientData("mean of an empty sample set".into()));
    }
    let mut mean = DVector::zeros(s.dim());
    for p in s.iter() {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    Ok(mean / s.len() as f64)
}

/// Total variance `E ||x||^2 - ||E x||^2`, evaluated as the mean squared
/// distance to the sample mean.
pub fn variance_estimate(s: &SampleSet) -> Result<f64> {
    let mean = mmse_estimate(s)?;
    let total: f64 = s
        .iter()
        .map(|p| p.iter().zip(mean.iter()).map(|(v, m)| (v - m) * (v - m)).sum::<f64>())
        .sum();
    Ok(total / s.len() as f64)
}

/// Largest difference quotient `||f(x1) - f(x2)|| / ||x1 - x2||` over random
/// pairs of sample points and over pairs `(x, x + 1e-4 u)` with `u` a random
/// unit vector. A lower bound on the Lipschitz constant.
pub fn lipschitz_estimate<F>(f: F, domain_samples: &SampleSet, n_pairs: usize, seed: u64) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if n_pairs == 0 {
        return Err(Error::InvalidParameter("n_pairs must be >= 1".into()));
    }
    if domain_samples.is_empty() {
        return Err(Error::InsufficientData("Lipschitz estimate needs sample points".into()));
    }
    let n = domain_samples.len();
    let d = domain_samples.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quotient = |x1: &DVector<f64>, x2: &DVector<f64>| {
        let gap = (x1 - x2).norm();
        if gap > 0.0 {
            (f(x1) - f(x2)).norm() / gap
        } else {
            0.0
        }
    };
    let mut best = 0.0f64;
    for _ in 0..n_pairs {
        let x1 = domain_samples.vector(rng.random_range(0..n));
        let x2 = domain_samples.vector(rng.random_range(0..n));
        best = best.max(quotient(&x1, &x2));

        let u = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = u.norm();
        if norm > 0.0 {
            best = best.max(quotient(&x1, &(&x1 + u * (LIPSCHITZ_PERTURBATION / norm))));
        }
    }
    Ok(best)
}

fn check_pairs(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::SizeMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "correlation needs >= 3 pairs, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("correlation inputs must be finite".into()));
    }
    Ok(())
}

/// Pearson correlation coefficient.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pairs(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateInput("correlation with a constant sequence".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1; ties share their average rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut out = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = rank;
        }
        start = end;
    }
    out
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pairs(xs, ys)?;
    pearson_r(&ranks(xs), &ranks(ys))
}
