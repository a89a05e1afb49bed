//! The dataset CSV and its resumable generator.
//!
//! A dataset file is the run header (see [`crate::run_config`]) followed by
//! a plain CSV table with one row per grid point, in grid order. Rows are
//! appended and flushed one at a time, so an interrupted run leaves every
//! finished row on disk; resuming skips rows whose key and sampling settings
//! match and recomputes the rest.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use pqcexpr_core::catalog::CatalogError;
use pqcexpr_core::dataset::{
    elementary_counts, enumerate_grid, grid_instance, DatasetError, ExpressibilityRecord, GridPoint,
};
use pqcexpr_core::expressibility::ExprError;
use pqcexpr_core::{gate_counts, SamplingConfig};
use serde::{Deserialize, Serialize};

use crate::catalog_file::Catalog;
use crate::run_config::RunConfig;
use crate::sampling::estimate_parallel;

pub const CSV_HEADER: &str = "template_id,n_qubits,n_layers,rx,ry,rz,frz,h,cnot,cz,n_params,kl_mean,kl_std,S,B,R,seed";

#[derive(Debug, thiserror::Error)]
pub enum DatasetFileError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: expected CSV header `{CSV_HEADER}`, found `{found}`", path.display())]
    BadHeader { path: PathBuf, found: String },
    #[error("{}: line {line}: {message}", path.display())]
    CorruptRow { path: PathBuf, line: u64, message: String },
    #[error("{}: line {line} is incomplete (interrupted write); rerun `dataset --resume` to repair it", path.display())]
    Truncated { path: PathBuf, line: u64 },
    #[error("{}: line {line}: {message}; delete the file or run without --resume", path.display())]
    ConfigMismatch { path: PathBuf, line: u64, message: String },
    #[error(transparent)]
    Grid(#[from] DatasetError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("template {template_id} on {n_qubits} qubits: {source}")]
    Estimate { template_id: u32, n_qubits: usize, source: ExprError },
    #[error("dataset config: {0}")]
    Sampling(ExprError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetFileError + '_ {
    move |source| DatasetFileError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    template_id: u32,
    n_qubits: usize,
    n_layers: usize,
    rx: usize,
    ry: usize,
    rz: usize,
    frz: usize,
    h: usize,
    cnot: usize,
    cz: usize,
    n_params: usize,
    kl_mean: f64,
    kl_std: f64,
    #[serde(rename = "S")]
    samples: usize,
    #[serde(rename = "B")]
    bins: usize,
    #[serde(rename = "R")]
    reps: usize,
    seed: u64,
}

impl From<&ExpressibilityRecord> for CsvRow {
    fn from(r: &ExpressibilityRecord) -> Self {
        let [rx, ry, rz, frz, h, cnot, cz] = r.counts;
        CsvRow {
            template_id: r.template_id,
            n_qubits: r.n_qubits,
            n_layers: r.n_layers,
            rx,
            ry,
            rz,
            frz,
            h,
            cnot,
            cz,
            n_params: r.n_params,
            kl_mean: r.kl_mean,
            kl_std: r.kl_std,
            samples: r.config.n_pairs,
            bins: r.config.n_bins,
            reps: r.config.n_repetitions,
            seed: r.config.master_seed,
        }
    }
}

impl CsvRow {
    fn into_record(self) -> Result<ExpressibilityRecord, String> {
        if !(self.kl_mean.is_finite() && self.kl_mean >= 0.0) {
            return Err(format!("kl_mean {} is not a finite non-negative number", self.kl_mean));
        }
        if !(self.kl_std.is_finite() && self.kl_std >= 0.0) {
            return Err(format!("kl_std {} is not a finite non-negative number", self.kl_std));
        }
        Ok(ExpressibilityRecord {
            template_id: self.template_id,
            n_qubits: self.n_qubits,
            n_layers: self.n_layers,
            counts: [self.rx, self.ry, self.rz, self.frz, self.h, self.cnot, self.cz],
            n_params: self.n_params,
            kl_mean: self.kl_mean,
            kl_std: self.kl_std,
            config: SamplingConfig {
                n_pairs: self.samples,
                n_bins: self.bins,
                n_repetitions: self.reps,
                master_seed: self.seed,
            },
        })
    }
}

/// One CSV data line, newline included.
pub fn format_row(record: &ExpressibilityRecord) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.serialize(CsvRow::from(record)).expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}

/// Full file contents for `records`.
pub fn format_dataset(config: &RunConfig, records: &[ExpressibilityRecord]) -> String {
    let mut out = config.header();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format_row(r));
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub config: Option<RunConfig>,
    /// Records with the 1-based file line they came from.
    pub rows: Vec<(u64, ExpressibilityRecord)>,
    /// Line number of an unterminated final line, which was ignored.
    pub truncated: Option<u64>,
}

impl DatasetFile {
    pub fn records(&self) -> Vec<ExpressibilityRecord> {
        self.rows.iter().map(|(_, r)| r.clone()).collect()
    }
}

/// Parses dataset text. An unterminated final line is reported in
/// `truncated` rather than parsed.
pub fn parse_dataset(text: &str, path: &Path) -> Result<DatasetFile, DatasetFileError> {
    let (body, truncated) = match text.rfind('\n') {
        _ if text.is_empty() || text.ends_with('\n') => (text, None),
        Some(nl) => (&text[..=nl], Some(text[..=nl].matches('\n').count() as u64 + 1)),
        None => ("", Some(1)),
    };
    let config = match RunConfig::from_header(body) {
        Some(Ok(c)) => Some(c),
        Some(Err(e)) => {
            let line = body.lines().position(|l| l.starts_with("# config ")).unwrap_or(0) as u64 + 1;
            return Err(DatasetFileError::CorruptRow {
                path: path.into(),
                line,
                message: format!("unreadable run header: {e}"),
            });
        }
        None => None,
    };
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(body.as_bytes());
    let headers = reader.headers().map_err(|e| DatasetFileError::CorruptRow {
        path: path.into(),
        line: e.position().map_or(1, |p| p.line()),
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        if truncated.is_some() && headers.is_empty() {
            return Err(DatasetFileError::Truncated { path: path.into(), line: truncated.unwrap_or(1) });
        }
        return Err(DatasetFileError::BadHeader { path: path.into(), found: headers.iter().collect::<Vec<_>>().join(",") });
    }
    let headers = headers.clone();
    let mut rows = Vec::new();
    for result in reader.records() {
        let raw = result.map_err(|e| DatasetFileError::CorruptRow {
            path: path.into(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = raw.position().map_or(0, |p| p.line());
        let corrupt = |message: String| DatasetFileError::CorruptRow { path: path.into(), line, message };
        let row: CsvRow = raw.deserialize(Some(&headers)).map_err(|e| corrupt(e.to_string()))?;
        rows.push((line, row.into_record().map_err(corrupt)?));
    }
    Ok(DatasetFile { config, rows, truncated })
}

/// Reads a complete dataset file; a truncated final line is an error.
pub fn read_dataset(path: &Path) -> Result<DatasetFile, DatasetFileError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file = parse_dataset(&text, path)?;
    if let Some(line) = file.truncated {
        return Err(DatasetFileError::Truncated { path: path.into(), line });
    }
    Ok(file)
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), DatasetFileError> {
    crate::atomic::write_atomic(path, contents).map_err(io_err(path))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Progress {
    pub done: usize,
    pub total: usize,
    pub point: GridPoint,
    pub kl_mean: f64,
    pub reused: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerateSummary {
    pub records: Vec<ExpressibilityRecord>,
    pub computed: usize,
    pub reused: usize,
}

/// Loads the rows of an earlier run that can be reused for `plan`.
fn checkpoint(
    path: &Path,
    catalog: &Catalog,
    sampling: &SamplingConfig,
    plan: &[GridPoint],
) -> Result<BTreeMap<GridPoint, ExpressibilityRecord>, DatasetFileError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(BTreeMap::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    if text.trim().is_empty() {
        return Ok(BTreeMap::new());
    }
    let file = match parse_dataset(&text, path) {
        Err(DatasetFileError::Truncated { .. }) => return Ok(BTreeMap::new()),
        other => other?,
    };
    let mut kept = BTreeMap::new();
    for (line, record) in file.rows {
        let mismatch = |message: String| DatasetFileError::ConfigMismatch { path: path.into(), line, message };
        if record.config != *sampling {
            return Err(mismatch(format!(
                "row was sampled with S={} B={} R={} seed={}, this run uses S={} B={} R={} seed={}",
                record.config.n_pairs,
                record.config.n_bins,
                record.config.n_repetitions,
                record.config.master_seed,
                sampling.n_pairs,
                sampling.n_bins,
                sampling.n_repetitions,
                sampling.master_seed
            )));
        }
        let point = record.point();
        if plan.binary_search(&point).is_err() {
            return Err(mismatch(format!(
                "template {} at n={}, L={} is outside the requested grid",
                point.template_id, point.n_qubits, point.n_layers
            )));
        }
        let template = catalog.get(point.template_id).expect("planned template exists");
        let instance = grid_instance(template, &point)?;
        if elementary_counts(&gate_counts(&instance)) != record.counts || instance.n_params() != record.n_params {
            return Err(mismatch("gate counts differ from the current catalog".into()));
        }
        if kept.insert(point, record).is_some() {
            return Err(DatasetFileError::CorruptRow { path: path.into(), line, message: "duplicate grid point".into() });
        }
    }
    Ok(kept)
}

/// Computes one record per grid point of `run` and writes them to `path`.
/// Estimation runs on the current rayon pool.
pub fn generate(
    catalog: &Catalog,
    run: &RunConfig,
    path: &Path,
    resume: bool,
    mut progress: impl FnMut(&Progress),
) -> Result<GenerateSummary, DatasetFileError> {
    let sampling = run.sampling();
    sampling.validate().map_err(DatasetFileError::Sampling)?;
    let plan = enumerate_grid(catalog.templates(), &run.filter())?;
    let mut kept = if resume { checkpoint(path, catalog, &sampling, &plan)? } else { BTreeMap::new() };
    let reused = kept.len();

    let prefix: Vec<ExpressibilityRecord> = plan.iter().map_while(|p| kept.get(p).cloned()).collect();
    write_atomic(path, &format_dataset(run, &prefix))?;
    let mut file: File = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;

    let total = plan.len();
    let mut computed = 0;
    let mut in_order = true;
    for (done, point) in plan.iter().enumerate() {
        if let Some(r) = kept.get(point) {
            if done >= prefix.len() {
                in_order = false;
            }
            progress(&Progress { done: done + 1, total, point: *point, kl_mean: r.kl_mean, reused: true });
            continue;
        }
        let template = catalog.get(point.template_id).expect("planned template exists");
        let instance = grid_instance(template, point)?;
        let estimate = estimate_parallel(&instance, &sampling).map_err(|source| DatasetFileError::Estimate {
            template_id: point.template_id,
            n_qubits: point.n_qubits,
            source,
        })?;
        let record = ExpressibilityRecord::new(&instance, &estimate);
        file.write_all(format_row(&record).as_bytes()).map_err(io_err(path))?;
        file.flush().map_err(io_err(path))?;
        progress(&Progress { done: done + 1, total, point: *point, kl_mean: record.kl_mean, reused: false });
        kept.insert(*point, record);
        computed += 1;
    }
    drop(file);

    let records: Vec<ExpressibilityRecord> = plan.iter().map(|p| kept[p].clone()).collect();
    if !in_order {
        write_atomic(path, &format_dataset(run, &records))?;
    }
    Ok(GenerateSummary { records, computed, reused })
}
