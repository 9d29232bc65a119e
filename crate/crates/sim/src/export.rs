//! Delimited-text results and their metadata sidecar.
//!
//! `results.csv` holds one [`StudyRow`] per line under the header
//! `instance_id,policy,batch_id,realized_cost,expected_cost,load`.
//! `results.csv.meta.json` records the seed, the scenario, the sampled
//! instances and the crate version.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Result, SimError};
use crate::study::{InstanceRecord, StudyResults, StudyRow};

pub const HEADER: [&str; 6] = ["instance_id", "policy", "batch_id", "realized_cost", "expected_cost", "load"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsMeta {
    pub seed: u64,
    pub version: String,
    pub rows: usize,
    pub scenario: ScenarioConfig,
    pub instances: Vec<InstanceRecord>,
    /// Content hash of the configuration file the study was run from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
}

impl ResultsMeta {
    pub fn of(results: &StudyResults) -> Self {
        ResultsMeta {
            seed: results.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            rows: results.rows.len(),
            scenario: results.config.clone(),
            instances: results.instances.clone(),
            config_digest: None,
        }
    }
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io { path: path.to_owned(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> SimError + '_ {
    move |source| SimError::Csv { path: path.to_owned(), source }
}

/// Writes rows to `path` (header always present, even with no rows).
pub fn write_rows(rows: &[StudyRow], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    w.write_record(HEADER).map_err(csv_err(path))?;
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes the CSV and its metadata sidecar.
pub fn export_results(results: &StudyResults, path: &Path) -> Result<()> {
    export_with_meta(results, &ResultsMeta::of(results), path)
}

/// Writes the CSV and a caller-built metadata sidecar.
pub fn export_with_meta(results: &StudyResults, meta_doc: &ResultsMeta, path: &Path) -> Result<()> {
    write_rows(&results.rows, path)?;
    let meta = meta_path(path);
    let file = File::create(&meta).map_err(io_err(&meta))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, meta_doc).map_err(|source| SimError::Json { path: meta.clone(), source })?;
    out.write_all(b"\n").map_err(io_err(&meta))?;
    out.flush().map_err(io_err(&meta))
}

/// Calls `f` on each row in file order without holding the file in memory.
pub fn for_each_row(path: &Path, mut f: impl FnMut(StudyRow)) -> Result<()> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = r.headers().map_err(csv_err(path))?.clone();
    if headers.iter().ne(HEADER) {
        return Err(SimError::Config(format!("{}: unexpected header {:?}", path.display(), headers)));
    }
    for row in r.deserialize() {
        f(row.map_err(csv_err(path))?);
    }
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<StudyRow>> {
    let mut rows = Vec::new();
    for_each_row(path, |r| rows.push(r))?;
    Ok(rows)
}

pub fn read_meta(path: &Path) -> Result<ResultsMeta> {
    let meta = meta_path(path);
    let text = std::fs::read_to_string(&meta).map_err(io_err(&meta))?;
    serde_json::from_str(&text).map_err(|source| SimError::Json { path: meta, source })
}
