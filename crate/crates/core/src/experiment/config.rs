//! Declarative experiment configuration.
//!
//! A spec is a TOML (or JSON) document. Model entries are either inline
//! tables in the model file format or `{ path = "..." }` references resolved
//! relative to the spec's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::forward::{LinearForwardModel, Observation};
use crate::gmm::GaussianMixture;
use crate::sampler::{ChainParams, DriftConfig, Projection};

/// Version of the `summary.json` layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    DenoiserSweep,
    ForwardSweep,
    ChainRun,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::DenoiserSweep => "denoiser-sweep",
            ExperimentKind::ForwardSweep => "forward-sweep",
            ExperimentKind::ChainRun => "chain-run",
        }
    }
}

/// A model given inline or by file reference.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelRef<T> {
    File(PathBuf),
    Inline(T),
}

impl<T: LoadModel> ModelRef<T> {
    fn resolve(&mut self, base: &Path) -> Result<()> {
        if let ModelRef::File(path) = self {
            let full = if path.is_absolute() {
                path.clone()
            } else {
                base.join(&*path)
            };
            *self = ModelRef::Inline(T::load_model(&full)?);
        }
        Ok(())
    }

    fn get(&self, what: &str) -> Result<&T> {
        match self {
            ModelRef::Inline(m) => Ok(m),
            ModelRef::File(p) => Err(Error::Config(format!(
                "{what} file {} has not been loaded",
                p.display()
            ))),
        }
    }
}

/// Model types that can be read from their file format.
pub trait LoadModel: Sized {
    fn load_model(path: &Path) -> Result<Self>;
}

impl LoadModel for GaussianMixture {
    fn load_model(path: &Path) -> Result<Self> {
        GaussianMixture::load(path)
    }
}

impl LoadModel for LinearForwardModel {
    fn load_model(path: &Path) -> Result<Self> {
        LinearForwardModel::load(path)
    }
}

impl<T: Serialize> Serialize for ModelRef<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct FileRef<'a> {
            path: &'a Path,
        }
        match self {
            ModelRef::File(path) => FileRef { path }.serialize(s),
            ModelRef::Inline(m) => m.serialize(s),
        }
    }
}

impl<'de, T: DeserializeOwned> Deserialize<'de> for ModelRef<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let value = serde_json::Value::deserialize(d)?;
        if let Some(obj) = value.as_object() {
            if obj.len() == 1 {
                if let Some(path) = obj.get("path") {
                    let path = path
                        .as_str()
                        .ok_or_else(|| D::Error::custom("model `path` must be a string"))?;
                    return Ok(ModelRef::File(PathBuf::from(path)));
                }
            }
        }
        serde_json::from_value(value)
            .map(ModelRef::Inline)
            .map_err(D::Error::custom)
    }
}

/// Denoiser used by `chain-run`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DenoiserSpec {
    #[default]
    Exact,
    Mismatched {
        threshold: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    pub eps: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub lambda: f64,
    #[serde(default = "default_projection")]
    pub projection: Projection,
    #[serde(default)]
    pub denoiser: DenoiserSpec,
}

fn default_alpha() -> f64 {
    1.0
}

/// The ball used for the 2D mixture experiments.
fn default_projection() -> Projection {
    Projection::Ball { radius: 20.0 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub delta: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    /// Defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

fn default_thinning() -> usize {
    1
}

impl ChainSpec {
    pub fn params(&self, seed: u64, dim: usize) -> ChainParams {
        ChainParams {
            delta: self.delta,
            n_steps: self.n_steps,
            burn_in: self.burn_in,
            thinning: self.thinning,
            seed,
            x0: self.x0.clone().unwrap_or_else(|| vec![0.0; dim]),
        }
    }
}

/// What a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Threshold `c` of the mismatched denoiser.
    Threshold,
    /// Scale `s` of the forward operator, `A(s) = s A`.
    Scale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Linspace {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Linspace {
    /// `count` evenly spaced values; the last equals `stop` exactly.
    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.start],
            n => (0..n)
                .map(|i| {
                    if i + 1 == n {
                        self.stop
                    } else {
                        self.start + (self.stop - self.start) * i as f64 / (n - 1) as f64
                    }
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linspace: Option<Linspace>,
    /// Reference value on the axis (the scale `s*` of forward sweeps).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
}

impl SweepSpec {
    pub fn grid(&self) -> Result<Vec<f64>> {
        let grid = match (&self.values, &self.linspace) {
            (Some(v), None) => v.clone(),
            (None, Some(l)) => l.values(),
            _ => {
                return Err(Error::Config(
                    "sweep needs exactly one of `values` or `linspace`".into(),
                ))
            }
        };
        if grid.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(
                "sweep grid must be finite and strictly increasing".into(),
            ));
        }
        Ok(grid)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    #[serde(default = "default_n_sub")]
    pub n_sub: usize,
    #[serde(default = "default_n_repeats")]
    pub n_repeats: usize,
    /// Fresh prior draws for the prior-L2 pseudometric.
    #[serde(default = "default_prior_samples")]
    pub prior_samples: usize,
    /// Histogram bins per axis for the TV diagnostic (2D only).
    #[serde(default = "default_tv_bins")]
    pub tv_bins: [usize; 2],
    /// Histogram window; defaults to the reference chain's bounding box
    /// padded by a quarter of its extent on each side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tv_window: Option<[[f64; 2]; 2]>,
}

fn default_n_sub() -> usize {
    2048
}

fn default_n_repeats() -> usize {
    8
}

fn default_prior_samples() -> usize {
    100_000
}

fn default_tv_bins() -> [usize; 2] {
    [100, 100]
}

impl Default for MetricSpec {
    fn default() -> Self {
        Self {
            n_sub: default_n_sub(),
            n_repeats: default_n_repeats(),
            prior_samples: default_prior_samples(),
            tv_bins: default_tv_bins(),
            tv_window: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub prior: ModelRef<GaussianMixture>,
    pub forward: ModelRef<LinearForwardModel>,
    pub observation: Vec<f64>,
    pub drift: DriftSpec,
    pub chain: ChainSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub metrics: MetricSpec,
    /// Write every chain's samples next to the results.
    #[serde(default = "default_save_chains")]
    pub save_chains: bool,
}

fn default_workers() -> usize {
    1
}

fn default_save_chains() -> bool {
    true
}

/// Command-line replacements for spec keys.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub n_steps: Option<usize>,
    pub n_sub: Option<usize>,
    pub n_repeats: Option<usize>,
}

impl ExperimentSpec {
    /// Parses a spec (TOML, or JSON for `.json`), loads every referenced
    /// model file relative to the spec's directory, and validates the result.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: ExperimentSpec = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?
        } else {
            toml::from_str(&text).map_err(|e| Error::parse(path, e))?
        };
        spec.resolve(path.parent().unwrap_or(Path::new(".")))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Parses TOML text whose model references are relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.resolve(base)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Replaces file references by the models they name.
    pub fn resolve(&mut self, base: &Path) -> Result<()> {
        self.prior.resolve(base)?;
        self.forward.resolve(base)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.out = Some(v.clone());
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
        if let Some(v) = o.n_steps {
            self.chain.n_steps = v;
        }
        if let Some(v) = o.n_sub {
            self.metrics.n_sub = v;
        }
        if let Some(v) = o.n_repeats {
            self.metrics.n_repeats = v;
        }
        self.validate()
    }

    pub fn prior(&self) -> Result<&GaussianMixture> {
        self.prior.get("prior")
    }

    pub fn forward(&self) -> Result<&LinearForwardModel> {
        self.forward.get("forward model")
    }

    pub fn observation(&self) -> Observation {
        Observation::new(self.observation.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let prior = self.prior()?;
        let fwd = self.forward()?;
        let d = prior.dim();
        if fwd.input_dim() != d {
            return Err(Error::Config(format!(
                "forward model acts on dimension {}, prior has {d}",
                fwd.input_dim()
            )));
        }
        if self.observation.len() != fwd.output_dim() {
            return Err(Error::Config(format!(
                "observation has length {}, forward model produces {}",
                self.observation.len(),
                fwd.output_dim()
            )));
        }
        let dr = &self.drift;
        DriftConfig::check(dr.eps, dr.alpha, dr.lambda, &dr.projection, Some(d))
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        self.chain
            .params(0, d)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.chain.x0.as_ref().is_some_and(|x| x.len() != d) {
            return Err(Error::Config(format!("chain.x0 must have length {d}")));
        }
        let m = &self.metrics;
        if m.n_sub == 0 || m.n_repeats == 0 || m.prior_samples == 0 || m.tv_bins.contains(&0) {
            return Err(Error::Config("metric sizes must be >= 1".into()));
        }
        match (self.kind, &self.sweep) {
            (ExperimentKind::ChainRun, _) => {}
            (_, None) => return Err(Error::Config(format!("{} needs a [sweep] section", self.kind.as_str()))),
            (kind, Some(sweep)) => {
                sweep.grid()?;
                let expected = match kind {
                    ExperimentKind::DenoiserSweep => SweepAxis::Threshold,
                    _ => SweepAxis::Scale,
                };
                if sweep.axis != expected {
                    return Err(Error::Config(format!("{} sweeps the {expected:?} axis", kind.as_str())));
                }
                if kind == ExperimentKind::ForwardSweep && sweep.reference.is_none_or(|r| !r.is_finite()) {
                    return Err(Error::Config(
                        "forward sweeps need a finite sweep.reference scale".into(),
                    ));
                }
                if m.n_sub > self.chain.params(0, d).retained() {
                    return Err(Error::Config(format!(
                        "metrics.n_sub = {} exceeds the {} retained chain states",
                        m.n_sub,
                        self.chain.params(0, d).retained()
                    )));
                }
            }
        }
        Ok(())
    }
}
