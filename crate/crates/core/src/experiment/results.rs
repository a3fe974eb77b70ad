//! Sweep results and their on-disk layout.
//!
//! ```text
//! <dir>/sweep.csv          one row per sweep point
//! <dir>/summary.json       correlations, bias floor, resolved spec
//! <dir>/chains/*.csv       chain samples (+ .meta.json sidecars)
//! <dir>/manifest.json      every file above with its SHA-256
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::config::{ExperimentKind, ExperimentSpec, SCHEMA_VERSION};
use crate::metrics::{pearson_r, spearman_rho, TransportEstimate};
use crate::provenance::sha256_hex;
use crate::samples::{sidecar_path, SampleSet};

pub const SWEEP_FILE: &str = "sweep.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHAIN_DIR: &str = "chains";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", content = "message", rename_all = "kebab-case")]
pub enum RowStatus {
    Ok,
    Failed(String),
}

/// Metrics for one sweep point; `None` where the point failed.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub axis: f64,
    pub d1_posterior: Option<f64>,
    pub d1_prior: Option<f64>,
    pub w1: Option<f64>,
    pub w1_stderr: Option<f64>,
    pub tv: Option<f64>,
    pub mmse: Option<Vec<f64>>,
    pub variance: Option<f64>,
    /// Operator distance to the reference model (forward sweeps only).
    pub op_dist: Option<f64>,
    pub status: RowStatus,
}

impl SweepRow {
    pub fn failed(axis: f64, message: String) -> Self {
        Self {
            axis,
            d1_posterior: None,
            d1_prior: None,
            w1: None,
            w1_stderr: None,
            tv: None,
            mmse: None,
            variance: None,
            op_dist: None,
            status: RowStatus::Failed(message),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RowStatus::Ok
    }
}

/// Provenance of one chain written with the results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub name: String,
    pub content_hash: String,
    pub retained: usize,
    pub projection_active_steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    /// Pearson r between posterior-L2 and W1.
    pub pearson_posterior_w1: Option<f64>,
    /// Pearson r between prior-L2 and W1.
    pub pearson_prior_w1: Option<f64>,
    /// Spearman rank correlation between the operator distance and W1.
    pub spearman_op_dist_w1: Option<f64>,
}

impl Correlations {
    /// Computed from the successful rows; `None` when fewer than three
    /// usable pairs exist or one side is constant.
    pub fn from_rows(rows: &[SweepRow]) -> Self {
        fn pairs(rows: &[SweepRow], x: impl Fn(&SweepRow) -> Option<f64>) -> (Vec<f64>, Vec<f64>) {
            rows.iter()
                .filter(|r| r.is_ok())
                .filter_map(|r| Some((x(r)?, r.w1?)))
                .unzip()
        }
        let (a, w) = pairs(rows, |r| r.d1_posterior);
        let pearson_posterior_w1 = pearson_r(&a, &w).ok();
        let (b, w) = pairs(rows, |r| r.d1_prior);
        let pearson_prior_w1 = pearson_r(&b, &w).ok();
        let (c, w) = pairs(rows, |r| r.op_dist);
        let spearman_op_dist_w1 = spearman_rho(&c, &w).ok();
        Self {
            pearson_posterior_w1,
            pearson_prior_w1,
            spearman_op_dist_w1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub dimension: usize,
    pub correlations: Correlations,
    /// W1 between the reference chain and an independent replicate of it.
    pub bias_floor: TransportEstimate,
    pub failures: usize,
    pub reference: ChainRecord,
    pub chains: Vec<ChainRecord>,
    /// Fully resolved spec (models inline): enough to re-create the run.
    pub spec: ExperimentSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedChain {
    pub name: String,
    pub samples: SampleSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary: SweepSummary,
    /// Empty when the spec disables chain output.
    pub chains: Vec<NamedChain>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn find(&self, path: &str) -> Option<&ManifestEntry> {
        self.files.iter().find(|e| e.path == path)
    }
}

fn fmt_opt(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        write!(out, "{v:?}").expect("writing to a String");
    }
}

/// The `sweep.csv` text. Floats use Rust's shortest round-trip formatting;
/// missing values are empty fields. Forward sweeps append an `op_dist` column.
pub fn sweep_csv(rows: &[SweepRow], dim: usize, with_op_dist: bool) -> String {
    let mut out = String::from("axis,d1_posterior,d1_prior,w1,w1_stderr,tv");
    for k in 0..dim {
        write!(out, ",mmse_{k}").expect("writing to a String");
    }
    out.push_str(",variance,status");
    if with_op_dist {
        out.push_str(",op_dist");
    }
    out.push('\n');
    for r in rows {
        write!(out, "{:?}", r.axis).expect("writing to a String");
        for v in [r.d1_posterior, r.d1_prior, r.w1, r.w1_stderr, r.tv] {
            out.push(',');
            fmt_opt(&mut out, v);
        }
        for k in 0..dim {
            out.push(',');
            fmt_opt(&mut out, r.mmse.as_ref().map(|m| m[k]));
        }
        out.push(',');
        fmt_opt(&mut out, r.variance);
        out.push(',');
        match &r.status {
            RowStatus::Ok => out.push_str("ok"),
            RowStatus::Failed(msg) => {
                let clean: String = msg
                    .chars()
                    .map(|c| if matches!(c, ',' | '\n' | '\r') { ';' } else { c })
                    .collect();
                write!(out, "failed: {clean}").expect("writing to a String");
            }
        }
        if with_op_dist {
            out.push(',');
            fmt_opt(&mut out, r.op_dist);
        }
        out.push('\n');
    }
    out
}

/// Inverse of [`sweep_csv`].
pub fn parse_sweep_csv(text: &str, source: &Path) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::parse(source, "empty file"))?
        .split(',')
        .collect();
    let dim = header.iter().filter(|h| h.starts_with("mmse_")).count();
    let with_op_dist = header.last() == Some(&"op_dist");
    let expected = sweep_csv(&[], dim, with_op_dist);
    if expected.trim_end() != header.join(",") {
        return Err(Error::parse(
            source,
            format!("unexpected header {:?}", header.join(",")),
        ));
    }
    let width = header.len();
    let mut rows = Vec::new();
    for (line_no, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::parse(
                source,
                format!("row {}: {} fields, expected {width}", line_no + 1, fields.len()),
            ));
        }
        let num = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|e| Error::parse(source, format!("row {}: {e}", line_no + 1)))
            }
        };
        let axis = num(fields[0])?.ok_or_else(|| Error::parse(source, "missing axis value"))?;
        let mmse: Vec<Option<f64>> = fields[6..6 + dim].iter().map(|f| num(f)).collect::<Result<_>>()?;
        let status_field = fields[7 + dim];
        let status = if status_field == "ok" {
            RowStatus::Ok
        } else if let Some(msg) = status_field.strip_prefix("failed: ") {
            RowStatus::Failed(msg.to_string())
        } else {
            return Err(Error::parse(
                source,
                format!("row {}: bad status {status_field:?}", line_no + 1),
            ));
        };
        rows.push(SweepRow {
            axis,
            d1_posterior: num(fields[1])?,
            d1_prior: num(fields[2])?,
            w1: num(fields[3])?,
            w1_stderr: num(fields[4])?,
            tv: num(fields[5])?,
            mmse: mmse.into_iter().collect(),
            variance: num(fields[6 + dim])?,
            op_dist: if with_op_dist { num(fields[8 + dim])? } else { None },
            status,
        });
    }
    Ok(rows)
}

fn write_file(dir: &Path, rel: &str, bytes: &[u8], manifest: &mut Vec<ManifestEntry>) -> Result<()> {
    let path = dir.join(rel);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    manifest.push(ManifestEntry {
        path: rel.to_string(),
        sha256: sha256_hex(bytes),
        bytes: bytes.len() as u64,
    });
    Ok(())
}

fn hash_existing(dir: &Path, rel: &str, manifest: &mut Vec<ManifestEntry>) -> Result<()> {
    let path = dir.join(rel);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    manifest.push(ManifestEntry {
        path: rel.to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    });
    Ok(())
}

/// Writes the result layout into `dir` (created if needed) and returns the manifest.
pub fn write_results(result: &SweepResult, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let with_op_dist = result.summary.kind == ExperimentKind::ForwardSweep;
    let csv = sweep_csv(&result.rows, result.summary.dimension, with_op_dist);
    write_file(dir, SWEEP_FILE, csv.as_bytes(), &mut files)?;
    let summary = serde_json::to_string_pretty(&result.summary).expect("summary serialises");
    write_file(dir, SUMMARY_FILE, summary.as_bytes(), &mut files)?;
    if !result.chains.is_empty() {
        let chain_dir = dir.join(CHAIN_DIR);
        fs::create_dir_all(&chain_dir).map_err(|e| Error::io(&chain_dir, e))?;
        for chain in &result.chains {
            let rel = format!("{CHAIN_DIR}/{}.csv", chain.name);
            chain.samples.save(&dir.join(&rel))?;
            hash_existing(dir, &rel, &mut files)?;
            let sidecar = sidecar_path(Path::new(&rel));
            hash_existing(dir, &sidecar.to_string_lossy(), &mut files)?;
        }
    }
    let manifest = Manifest { files };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reads a directory written by [`write_results`], checking every file
/// against the manifest and the summary correlations against the rows.
pub fn read_results(dir: &Path) -> Result<SweepResult> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::parse(&manifest_path, e))?;
    for entry in &manifest.files {
        let path = dir.join(&entry.path);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::parse(&path, "content does not match the manifest hash"));
        }
    }

    let csv_path = dir.join(SWEEP_FILE);
    let csv = fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let rows = parse_sweep_csv(&csv, &csv_path)?;
    let summary_path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
    let summary: SweepSummary = serde_json::from_str(&text).map_err(|e| Error::parse(&summary_path, e))?;
    if summary.schema_version != SCHEMA_VERSION {
        return Err(Error::parse(
            &summary_path,
            format!("schema version {} is not supported", summary.schema_version),
        ));
    }
    if Correlations::from_rows(&rows) != summary.correlations {
        return Err(Error::parse(&summary_path, "correlations disagree with sweep.csv"));
    }

    let mut chains = Vec::new();
    for entry in manifest
        .files
        .iter()
        .filter(|e| e.path.starts_with(CHAIN_DIR) && e.path.ends_with(".csv"))
    {
        let name = PathBuf::from(&entry.path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        chains.push(NamedChain {
            name,
            samples: SampleSet::load(&dir.join(&entry.path))?,
        });
    }
    Ok(SweepResult { rows, summary, chains })
}
