//! A single chain with diagnostics against the closed-form posterior.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::denoiser::{Denoiser, MismatchedDenoiser, MmseDenoiser};
use crate::error::{Error, Result};
use crate::experiment::config::{DenoiserSpec, ExperimentKind, ExperimentSpec, SCHEMA_VERSION};
use crate::experiment::results::{ChainRecord, Manifest, ManifestEntry, MANIFEST_FILE, SUMMARY_FILE};
use crate::experiment::sweep::{chain_record, SeedPlan};
use crate::metrics;
use crate::provenance::{derive_seed, sha256_hex};
use crate::sampler::{max_step_size, run_chain, DriftConfig};
use crate::samples::{sidecar_path, SampleSet};

pub const CHAIN_FILE: &str = "chain.csv";
/// Pairs used for the denoiser Lipschitz estimate.
const LIPSCHITZ_PAIRS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRunSummary {
    pub schema_version: u32,
    pub chain: ChainRecord,
    pub mmse: Vec<f64>,
    pub variance: f64,
    /// Mean of the exact posterior under the (unsmoothed) prior.
    pub posterior_mean: Vec<f64>,
    /// Trace of the exact posterior covariance.
    pub posterior_variance: f64,
    /// Sampled lower bound on the denoiser's Lipschitz constant over the chain.
    pub denoiser_lipschitz_estimate: f64,
    /// Step-size bound evaluated with that estimate.
    pub delta_bound: f64,
    pub spec: ExperimentSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainRunResult {
    pub summary: ChainRunSummary,
    pub samples: SampleSet,
}

pub fn run_chain_experiment(spec: &ExperimentSpec) -> Result<ChainRunResult> {
    if spec.kind != ExperimentKind::ChainRun {
        return Err(Error::Config(format!(
            "expected a chain-run spec, got {}",
            spec.kind.as_str()
        )));
    }
    spec.validate()?;
    let prior = spec.prior()?;
    let fwd = spec.forward()?;
    let y = spec.observation();
    let exact = Arc::new(MmseDenoiser::new(prior, spec.drift.eps)?);
    let denoiser: Arc<dyn Denoiser> = match spec.drift.denoiser {
        DenoiserSpec::Exact => exact,
        DenoiserSpec::Mismatched { threshold } => Arc::new(MismatchedDenoiser::new(exact, threshold)),
    };
    let config = DriftConfig::new(
        spec.drift.eps,
        spec.drift.alpha,
        spec.drift.lambda,
        spec.drift.projection.clone(),
        denoiser.clone(),
    )?;
    let seed = SeedPlan { master: spec.seed }.reference();
    let samples = run_chain(&config, fwd, &y, &spec.chain.params(seed, prior.dim()))?;

    let posterior = prior.posterior(fwd, &y)?;
    let lipschitz = metrics::lipschitz_estimate(
        |x| denoiser.denoise(x),
        &samples,
        LIPSCHITZ_PAIRS,
        derive_seed(spec.seed, 0, "lipschitz"),
    )?;
    let summary = ChainRunSummary {
        schema_version: SCHEMA_VERSION,
        chain: chain_record("chain", &samples),
        mmse: metrics::mmse_estimate(&samples)?.iter().copied().collect(),
        variance: metrics::variance_estimate(&samples)?,
        posterior_mean: posterior.mean().iter().copied().collect(),
        posterior_variance: posterior.covariance().trace(),
        denoiser_lipschitz_estimate: lipschitz,
        delta_bound: max_step_size(&config, fwd, lipschitz),
        spec: spec.clone(),
    };
    Ok(ChainRunResult { summary, samples })
}

/// Writes `chain.csv` (+ sidecar), `summary.json` and `manifest.json`.
pub fn write_chain_run(result: &ChainRunResult, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    result.samples.save(&dir.join(CHAIN_FILE))?;
    let summary = serde_json::to_string_pretty(&result.summary).expect("summary serialises");
    let summary_path = dir.join(SUMMARY_FILE);
    fs::write(&summary_path, &summary).map_err(|e| Error::io(&summary_path, e))?;

    let mut files = Vec::new();
    let sidecar = sidecar_path(Path::new(CHAIN_FILE));
    for rel in [CHAIN_FILE, &sidecar.to_string_lossy(), SUMMARY_FILE] {
        let path = dir.join(rel);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        files.push(ManifestEntry {
            path: rel.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
    }
    let manifest = Manifest { files };
    let path = dir.join(MANIFEST_FILE);
    fs::write(
        &path,
        serde_json::to_string_pretty(&manifest).expect("manifest serialises"),
    )
    .map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
