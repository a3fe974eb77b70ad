//! Denoiser-mismatch and forward-model-shift sweeps.
//!
//! Every sweep runs a reference chain, an independent replicate of it (the
//! same-distribution bias floor for W1), and one chain per grid point. Seeds
//! come from `derive_seed(master, index, tag)` so adding grid points never
//! changes existing ones. Chains run on a pool of `workers` threads; rows are
//! collected in grid order.

use std::sync::Arc;

use log::info;
use nalgebra::DVector;
use rayon::prelude::*;

use crate::denoiser::{Denoiser, MismatchedDenoiser, MmseDenoiser};
use crate::error::{Error, Result};
use crate::experiment::config::{ExperimentKind, ExperimentSpec, SCHEMA_VERSION};
use crate::experiment::results::{
    ChainRecord, Correlations, NamedChain, RowStatus, SweepResult, SweepRow, SweepSummary,
};
use crate::forward::{operator_distance, LinearForwardModel, Observation};
use crate::metrics::{self, HistogramGrid, TransportEstimate};
use crate::provenance::derive_seed;
use crate::sampler::{run_chain, DriftConfig};
use crate::samples::{Provenance, SampleSet};

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

/// Seeds used by a sweep with master seed `master`.
#[derive(Clone, Copy, Debug)]
pub struct SeedPlan {
    pub master: u64,
}

impl SeedPlan {
    pub fn reference(self) -> u64 {
        derive_seed(self.master, 0, "reference")
    }

    pub fn floor(self) -> u64 {
        derive_seed(self.master, 0, "floor")
    }

    pub fn floor_metric(self) -> u64 {
        derive_seed(self.master, 0, "floor-metric")
    }

    pub fn prior(self) -> u64 {
        derive_seed(self.master, 0, "prior")
    }

    pub fn chain(self, index: usize) -> u64 {
        derive_seed(self.master, index as u64, "chain")
    }

    pub fn metric(self, index: usize) -> u64 {
        derive_seed(self.master, index as u64, "metric")
    }
}

pub fn chain_record(name: &str, samples: &SampleSet) -> ChainRecord {
    let projection_active_steps = match &samples.provenance {
        Provenance::Chain(meta) => meta.projection_active_steps,
        _ => 0,
    };
    ChainRecord {
        name: name.to_string(),
        content_hash: samples.content_hash(),
        retained: samples.len(),
        projection_active_steps,
    }
}

/// Reference bounding box padded by a quarter of its extent on every side.
fn default_window(reference: &SampleSet) -> [[f64; 2]; 2] {
    let mut low = [f64::INFINITY; 2];
    let mut high = [f64::NEG_INFINITY; 2];
    for p in reference.iter() {
        for k in 0..2 {
            low[k] = low[k].min(p[k]);
            high[k] = high[k].max(p[k]);
        }
    }
    for k in 0..2 {
        let pad = ((high[k] - low[k]) * 0.25).max(1.0);
        low[k] -= pad;
        high[k] += pad;
    }
    [low, high]
}

struct MetricContext<'a> {
    spec: &'a ExperimentSpec,
    seeds: SeedPlan,
    reference: &'a SampleSet,
    prior_samples: &'a SampleSet,
    grid: Option<HistogramGrid>,
}

impl<'a> MetricContext<'a> {
    fn new(spec: &'a ExperimentSpec, reference: &'a SampleSet, prior_samples: &'a SampleSet) -> Result<Self> {
        let grid = if reference.dim() == 2 {
            let [low, high] = spec.metrics.tv_window.unwrap_or_else(|| default_window(reference));
            Some(HistogramGrid::new(low, high, spec.metrics.tv_bins)?)
        } else {
            None
        };
        Ok(Self {
            spec,
            seeds: SeedPlan { master: spec.seed },
            reference,
            prior_samples,
            grid,
        })
    }

    fn w1(&self, other: &SampleSet, seed: u64) -> Result<TransportEstimate> {
        metrics::wasserstein1_estimate(
            self.reference,
            other,
            self.spec.metrics.n_sub,
            self.spec.metrics.n_repeats,
            seed,
        )
    }

    /// Row for grid point `index`, comparing `f_ref` and `f_point` (the
    /// reference and perturbed drift components) and the two chains.
    fn row<F1, F2>(&self, index: usize, axis: f64, chain: &SampleSet, f_ref: F1, f_point: F2) -> Result<SweepRow>
    where
        F1: Fn(&DVector<f64>) -> DVector<f64> + Copy,
        F2: Fn(&DVector<f64>) -> DVector<f64> + Copy,
    {
        let d1_posterior = metrics::posterior_l2(f_ref, f_point, self.reference)?.value;
        let d1_prior = metrics::prior_l2(f_ref, f_point, self.prior_samples)?.value;
        let w1 = self.w1(chain, self.seeds.metric(index))?;
        let tv = self
            .grid
            .as_ref()
            .map(|g| metrics::tv_histogram(self.reference, chain, g))
            .transpose()?;
        Ok(SweepRow {
            axis,
            d1_posterior: Some(d1_posterior),
            d1_prior: Some(d1_prior),
            w1: Some(w1.value),
            w1_stderr: Some(w1.std_error),
            tv,
            mmse: Some(metrics::mmse_estimate(chain)?.iter().copied().collect()),
            variance: Some(metrics::variance_estimate(chain)?),
            op_dist: None,
            status: RowStatus::Ok,
        })
    }
}

struct PointOutcome {
    row: SweepRow,
    chain: Option<SampleSet>,
}

fn finish(
    spec: &ExperimentSpec,
    reference: SampleSet,
    floor: SampleSet,
    bias_floor: TransportEstimate,
    outcomes: Vec<PointOutcome>,
) -> SweepResult {
    let mut rows = Vec::with_capacity(outcomes.len());
    let mut named = vec![
        NamedChain {
            name: "reference".into(),
            samples: reference,
        },
        NamedChain {
            name: "floor".into(),
            samples: floor,
        },
    ];
    for (i, o) in outcomes.into_iter().enumerate() {
        rows.push(o.row);
        if let Some(chain) = o.chain {
            named.push(NamedChain {
                name: format!("point_{i:03}"),
                samples: chain,
            });
        }
    }
    let records: Vec<ChainRecord> = named.iter().map(|c| chain_record(&c.name, &c.samples)).collect();
    let failures = rows.iter().filter(|r| !r.is_ok()).count();
    let summary = SweepSummary {
        schema_version: SCHEMA_VERSION,
        kind: spec.kind,
        dimension: named[0].samples.dim(),
        correlations: Correlations::from_rows(&rows),
        bias_floor,
        failures,
        reference: records[0].clone(),
        chains: records,
        spec: spec.clone(),
    };
    if !spec.save_chains {
        named.clear();
    }
    SweepResult {
        rows,
        summary,
        chains: named,
    }
}

fn point_failure(axis: f64, index: usize, e: &Error) -> PointOutcome {
    log::warn!("sweep point {index} (axis = {axis}) failed: {e}");
    PointOutcome {
        row: SweepRow::failed(axis, e.to_string()),
        chain: None,
    }
}

/// Runs the sweep selected by `spec.kind`.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepResult> {
    match spec.kind {
        ExperimentKind::DenoiserSweep => run_denoiser_sweep(spec),
        ExperimentKind::ForwardSweep => run_forward_sweep(spec),
        ExperimentKind::ChainRun => Err(Error::Config("chain-run is not a sweep".into())),
    }
}

/// Reference and replicate chains with `config`, then the bias floor.
fn reference_pair(
    spec: &ExperimentSpec,
    config: &DriftConfig,
    fwd: &LinearForwardModel,
    y: &Observation,
) -> Result<(SampleSet, SampleSet)> {
    let seeds = SeedPlan { master: spec.seed };
    let d = fwd.input_dim();
    let (reference, floor) = rayon::join(
        || run_chain(config, fwd, y, &spec.chain.params(seeds.reference(), d)),
        || run_chain(config, fwd, y, &spec.chain.params(seeds.floor(), d)),
    );
    Ok((reference?, floor?))
}

/// Mismatched-denoiser sweep over the threshold `c`.
pub fn run_denoiser_sweep(spec: &ExperimentSpec) -> Result<SweepResult> {
    if spec.kind != ExperimentKind::DenoiserSweep {
        return Err(Error::Config(format!(
            "expected a denoiser-sweep spec, got {}",
            spec.kind.as_str()
        )));
    }
    spec.validate()?;
    let prior = spec.prior()?;
    let fwd = spec.forward()?;
    let y = spec.observation();
    let grid = spec.sweep.as_ref().expect("validated").grid()?;
    let seeds = SeedPlan { master: spec.seed };
    let d = prior.dim();
    let exact = Arc::new(MmseDenoiser::new(prior, spec.drift.eps)?);
    let base = DriftConfig::new(
        spec.drift.eps,
        spec.drift.alpha,
        spec.drift.lambda,
        spec.drift.projection.clone(),
        exact.clone(),
    )?;

    thread_pool(spec.workers)?.install(|| {
        info!("denoiser sweep: reference chains");
        let (reference, floor) = reference_pair(spec, &base, fwd, &y)?;
        let prior_samples = prior.sample(spec.metrics.prior_samples, seeds.prior())?;
        let ctx = MetricContext::new(spec, &reference, &prior_samples)?;
        let bias_floor = ctx.w1(&floor, seeds.floor_metric())?;

        info!("denoiser sweep: {} grid points", grid.len());
        let outcomes: Vec<PointOutcome> = grid
            .par_iter()
            .enumerate()
            .map(|(i, &c)| {
                let mismatched = MismatchedDenoiser::new(exact.clone(), c);
                let outcome = base
                    .with_denoiser(Arc::new(mismatched.clone()))
                    .and_then(|cfg| run_chain(&cfg, fwd, &y, &spec.chain.params(seeds.chain(i), d)))
                    .and_then(|chain| {
                        let row = ctx.row(i, c, &chain, |x| exact.denoise(x), |x| mismatched.denoise(x))?;
                        Ok(PointOutcome {
                            row,
                            chain: Some(chain),
                        })
                    });
                outcome.unwrap_or_else(|e| point_failure(c, i, &e))
            })
            .collect();
        Ok(finish(spec, reference, floor, bias_floor, outcomes))
    })
}

/// Forward-model sweep over the scale `s` of `A(s) = s A`, with the
/// reference chain at `s*`. Posterior- and prior-L2 compare the likelihood
/// scores of `A(s*)` and `A(s)`; `op_dist` is `||A(s) - A(s*)||`.
pub fn run_forward_sweep(spec: &ExperimentSpec) -> Result<SweepResult> {
    if spec.kind != ExperimentKind::ForwardSweep {
        return Err(Error::Config(format!(
            "expected a forward-sweep spec, got {}",
            spec.kind.as_str()
        )));
    }
    spec.validate()?;
    let prior = spec.prior()?;
    let base_fwd = spec.forward()?;
    let y = spec.observation();
    let sweep = spec.sweep.as_ref().expect("validated");
    let grid = sweep.grid()?;
    let s_ref = sweep.reference.expect("validated");
    let seeds = SeedPlan { master: spec.seed };
    let d = prior.dim();
    let exact = Arc::new(MmseDenoiser::new(prior, spec.drift.eps)?);
    let config = DriftConfig::new(
        spec.drift.eps,
        spec.drift.alpha,
        spec.drift.lambda,
        spec.drift.projection.clone(),
        exact,
    )?;
    let fwd_ref = base_fwd.scaled(s_ref)?;

    thread_pool(spec.workers)?.install(|| {
        info!("forward sweep: reference chains at s* = {s_ref}");
        let (reference, floor) = reference_pair(spec, &config, &fwd_ref, &y)?;
        let prior_samples = prior.sample(spec.metrics.prior_samples, seeds.prior())?;
        let ctx = MetricContext::new(spec, &reference, &prior_samples)?;
        let bias_floor = ctx.w1(&floor, seeds.floor_metric())?;
        let ref_score = |x: &DVector<f64>| fwd_ref.likelihood_score(&y, x).expect("dimensions validated");

        info!("forward sweep: {} grid points", grid.len());
        let outcomes: Vec<PointOutcome> = grid
            .par_iter()
            .enumerate()
            .map(|(i, &s)| {
                let outcome = base_fwd.scaled(s).and_then(|fwd_s| {
                    let chain = run_chain(&config, &fwd_s, &y, &spec.chain.params(seeds.chain(i), d))?;
                    let score = |x: &DVector<f64>| fwd_s.likelihood_score(&y, x).expect("dimensions validated");
                    let mut row = ctx.row(i, s, &chain, ref_score, score)?;
                    row.op_dist = Some(operator_distance(fwd_s.matrix(), fwd_ref.matrix())?);
                    Ok(PointOutcome {
                        row,
                        chain: Some(chain),
                    })
                });
                outcome.unwrap_or_else(|e| point_failure(s, i, &e))
            })
            .collect();
        Ok(finish(spec, reference, floor, bias_floor, outcomes))
    })
}
