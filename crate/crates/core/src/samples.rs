//! Ordered collections of d-dimensional samples with provenance.
//!
//! Persisted as `step,x_0,...,x_{d-1}` CSV plus a JSON sidecar holding the
//! provenance record.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provenance::sha256_hex;
use crate::sampler::ChainMeta;

/// Where a sample set came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Unspecified,
    Prior { mixture_hash: String, seed: u64 },
    Chain(Box<ChainMeta>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    dim: usize,
    steps: Vec<u64>,
    data: Vec<f64>,
    pub provenance: Provenance,
}

impl SampleSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            steps: Vec::new(),
            data: Vec::new(),
            provenance: Provenance::Unspecified,
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self {
            dim,
            steps: Vec::with_capacity(n),
            data: Vec::with_capacity(n * dim),
            provenance: Provenance::Unspecified,
        }
    }

    /// Builds a set from points, numbering them 0, 1, 2, ...
    pub fn from_points<I, P>(dim: usize, points: I) -> Result<Self>
    where
        I: IntoIterator<Item = P>,
        P: AsRef<[f64]>,
    {
        let mut set = Self::new(dim);
        for (k, p) in points.into_iter().enumerate() {
            set.push(k as u64, p.as_ref())?;
        }
        Ok(set)
    }

    pub fn push(&mut self, step: u64, point: &[f64]) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::Dimension(format!(
                "sample has length {}, set dimension is {}",
                point.len(),
                self.dim
            )));
        }
        self.steps.push(step);
        self.data.extend_from_slice(point);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[u64] {
        &self.steps
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(self.point(i))
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // `chunks_exact(0)` panics; a zero-dimensional set has no coordinates.
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn vectors(&self) -> impl ExactSizeIterator<Item = DVector<f64>> + '_ {
        self.iter().map(DVector::from_column_slice)
    }

    /// New set holding the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> SampleSet {
        let mut out = SampleSet::with_capacity(self.dim, indices.len());
        for &i in indices {
            out.steps.push(self.steps[i]);
            out.data.extend_from_slice(self.point(i));
        }
        out
    }

    /// Applies `f` to every point.
    pub fn map(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<SampleSet> {
        let mut out = SampleSet::with_capacity(self.dim, self.len());
        for (step, p) in self.steps.iter().zip(self.iter()) {
            out.push(*step, &f(p))?;
        }
        Ok(out)
    }

    /// SHA-256 over the canonical CSV encoding.
    pub fn content_hash(&self) -> String {
        sha256_hex(self.to_csv().as_bytes())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * (8 + 24 * self.dim));
        out.push_str("step");
        for k in 0..self.dim {
            let _ = write!(out, ",x_{k}");
        }
        out.push('\n');
        for (step, p) in self.steps.iter().zip(self.iter()) {
            let _ = write!(out, "{step}");
            for v in p {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, source: &Path) -> Result<SampleSet> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::parse(source, "empty sample file"))?;
        let columns: Vec<&str> = header.split(',').collect();
        if columns.first() != Some(&"step") || columns.iter().skip(1).enumerate().any(|(k, c)| *c != format!("x_{k}")) {
            return Err(Error::parse(source, format!("unexpected header `{header}`")));
        }
        let dim = columns.len() - 1;
        let mut set = SampleSet::new(dim);
        let mut point = Vec::with_capacity(dim);
        for (lineno, line) in lines.enumerate() {
            let mut fields = line.split(',');
            let step: u64 = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(source, format!("line {}: bad step", lineno + 2)))?;
            point.clear();
            for field in fields {
                point.push(
                    field
                        .parse::<f64>()
                        .map_err(|e| Error::parse(source, format!("line {}: {e}", lineno + 2)))?,
                );
            }
            set.push(step, &point)
                .map_err(|e| Error::parse(source, format!("line {}: {e}", lineno + 2)))?;
        }
        Ok(set)
    }

    /// Writes `<path>` (CSV) and `<path>.meta.json` (provenance).
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))?;
        let meta_path = sidecar_path(path);
        let meta = serde_json::to_string_pretty(&self.provenance).map_err(|e| Error::parse(&meta_path, e))?;
        fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))
    }

    pub fn load(path: &Path) -> Result<SampleSet> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut set = SampleSet::from_csv(&text, path)?;
        let meta_path = sidecar_path(path);
        if meta_path.exists() {
            let meta = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
            set.provenance = serde_json::from_str(&meta).map_err(|e| Error::parse(&meta_path, e))?;
        }
        Ok(set)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}
