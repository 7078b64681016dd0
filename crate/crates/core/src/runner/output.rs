use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

/// Identifier written into every result file.
pub const SCHEMA_NAME: &str = "hierex-result";
pub const SCHEMA_VERSION: u32 = 1;

/// The JSON Schema for result records, as shipped in `schema/`.
pub const SCHEMA_JSON: &str = include_str!("../../../../schema/result-v1.json");

/// One reported number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    /// Exact or limiting value the estimate is compared against, if any.
    pub oracle: Option<f64>,
}

impl Statistic {
    pub fn new(name: impl Into<String>, estimate: f64, std_error: f64, oracle: Option<f64>) -> Self {
        Self {
            name: name.into(),
            estimate,
            std_error,
            oracle,
        }
    }

    pub fn exact(name: impl Into<String>, value: f64) -> Self {
        Self::new(name, value, 0.0, None)
    }
}

/// Statistics for one ladder entry, one bridge length, or a summary across
/// them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub label: String,
    /// `N` for tree entries, `n` for bridge entries, absent for summaries.
    pub size: Option<u32>,
    pub alpha: Option<f64>,
    pub statistics: Vec<Statistic>,
}

impl Entry {
    pub fn statistic(&self, name: &str) -> Option<&Statistic> {
        self.statistics.iter().find(|s| s.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub wall_clock_seconds: f64,
    /// Gaussian variables drawn: tree nodes times replicates, or bridge
    /// increments.
    pub draws: u64,
    pub started_unix_seconds: u64,
    pub threads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub entries: Vec<Entry>,
    pub run_info: RunInfo,
}

impl ExperimentResult {
    pub fn entry(&self, label: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.label == label)
    }
}

/// The statistics block alone, as compact JSON. Identical configs give
/// identical strings regardless of thread count or timing.
pub fn statistics_json(result: &ExperimentResult) -> String {
    serde_json::to_string(&result.entries).expect("entries serialize")
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header {
        schema: String,
        schema_version: u32,
        config: ExperimentConfig,
        config_hash: String,
    },
    Entry(Entry),
    RunInfo(RunInfo),
}

/// Writes the result as JSON lines: a header, one line per entry, then the
/// run information.
pub fn write_jsonl(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let mut line = |record: &Record| -> Result<()> {
        serde_json::to_writer(&mut w, record)?;
        w.write_all(b"\n")?;
        Ok(())
    };
    line(&Record::Header {
        schema: SCHEMA_NAME.into(),
        schema_version: result.schema_version,
        config: result.config.clone(),
        config_hash: result.config_hash.clone(),
    })?;
    for e in &result.entries {
        line(&Record::Entry(e.clone()))?;
    }
    line(&Record::RunInfo(result.run_info.clone()))?;
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<ExperimentResult> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut header = None;
    let mut entries = Vec::new();
    let mut run_info = None;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line)? {
            Record::Header {
                schema,
                schema_version,
                config,
                config_hash,
            } => {
                if schema != SCHEMA_NAME || schema_version != SCHEMA_VERSION {
                    return Err(Error::Degenerate(format!(
                        "unsupported result schema {schema} v{schema_version}"
                    )));
                }
                header = Some((schema_version, config, config_hash));
            }
            Record::Entry(e) => entries.push(e),
            Record::RunInfo(r) => run_info = Some(r),
        }
    }
    let (schema_version, config, config_hash) =
        header.ok_or(Error::Empty("result header"))?;
    Ok(ExperimentResult {
        schema_version,
        config,
        config_hash,
        entries,
        run_info: run_info.ok_or(Error::Empty("result run_info"))?,
    })
}

/// One row of the plot table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    #[serde(rename = "N")]
    pub size: Option<u32>,
    pub alpha: Option<f64>,
    pub statistic: String,
    pub estimate: f64,
    pub std_error: f64,
    pub oracle: Option<f64>,
}

pub const PLOT_COLUMNS: [&str; 6] = ["N", "alpha", "statistic", "estimate", "std_error", "oracle"];

pub fn plot_rows(result: &ExperimentResult) -> Vec<PlotRow> {
    result
        .entries
        .iter()
        .flat_map(|e| {
            e.statistics.iter().map(|s| PlotRow {
                size: e.size,
                alpha: e.alpha,
                statistic: s.name.clone(),
                estimate: s.estimate,
                std_error: s.std_error,
                oracle: s.oracle,
            })
        })
        .collect()
}

/// Writes one CSV row per (entry, statistic). The header is always present.
pub fn emit_plot_data(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(PLOT_COLUMNS)?;
    for row in plot_rows(result) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_plot_data(path: &Path) -> Result<Vec<PlotRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != PLOT_COLUMNS {
        return Err(Error::Degenerate(format!("unexpected plot header {header:?}")));
    }
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Files written for one run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunFiles {
    pub dir: PathBuf,
    pub result: PathBuf,
    pub plot: PathBuf,
}

/// Writes `result.jsonl` and `plot.csv` into a fresh
/// `<out>/<hash prefix>/run-<unix seconds>[-k]/` directory. Existing runs are
/// never touched.
pub fn persist(result: &ExperimentResult, out: &Path) -> Result<RunFiles> {
    let parent = out.join(&result.config_hash[..16]);
    fs::create_dir_all(&parent)?;
    let stamp = result.run_info.started_unix_seconds;
    let mut suffix = 0u32;
    let dir = loop {
        let name = if suffix == 0 {
            format!("run-{stamp}")
        } else {
            format!("run-{stamp}-{suffix}")
        };
        let candidate = parent.join(name);
        match fs::create_dir(&candidate) {
            Ok(()) => break candidate,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => suffix += 1,
            Err(e) => return Err(e.into()),
        }
    };
    let files = RunFiles {
        result: dir.join("result.jsonl"),
        plot: dir.join("plot.csv"),
        dir,
    };
    write_jsonl(result, &files.result)?;
    emit_plot_data(result, &files.plot)?;
    Ok(files)
}

pub(crate) fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
