//! Result files: CSV, a JSON-lines mirror, and plot data.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{ExperimentResult, ResultCell};
use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 8] = [
    "sweep_param",
    "sweep_value",
    "design",
    "architecture",
    "mean_se_bps_hz",
    "stderr",
    "n_trials",
    "n_degenerate",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Jsonl,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Jsonl => "jsonl",
        }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_error(path, e))
}

/// Writes one row per cell. An empty slice still produces the header.
pub fn emit_results(cells: &[ResultCell], path: &Path, format: OutputFormat) -> Result<()> {
    let mut out = create(path)?;
    match format {
        OutputFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(&mut out);
            w.write_record(CSV_COLUMNS).map_err(|e| io_error(path, e))?;
            for c in cells {
                w.serialize(c).map_err(|e| io_error(path, e))?;
            }
            w.flush().map_err(|e| io_error(path, e))?;
        }
        OutputFormat::Jsonl => {
            for c in cells {
                let line = serde_json::to_string(c).map_err(|e| io_error(path, e))?;
                writeln!(out, "{line}").map_err(|e| io_error(path, e))?;
            }
        }
    }
    out.flush().map_err(|e| io_error(path, e))
}

pub fn read_results(path: &Path, format: OutputFormat) -> Result<Vec<ResultCell>> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    match format {
        OutputFormat::Csv => {
            let mut r = csv::Reader::from_reader(file);
            let header: Vec<String> = r
                .headers()
                .map_err(|e| io_error(path, e))?
                .iter()
                .map(str::to_string)
                .collect();
            if header != CSV_COLUMNS {
                return Err(io_error(path, format!("unexpected header {header:?}")));
            }
            r.deserialize()
                .map(|row| row.map_err(|e| io_error(path, e)))
                .collect()
        }
        OutputFormat::Jsonl => BufReader::new(file)
            .lines()
            .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
            .map(|l| {
                let l = l.map_err(|e| io_error(path, e))?;
                serde_json::from_str(&l).map_err(|e| io_error(path, e))
            })
            .collect(),
    }
}

/// One point of one plotted curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub x: f64,
    /// `design/architecture`.
    pub series: String,
    pub y: f64,
    pub stderr: f64,
}

pub fn plot_points(result: &ExperimentResult) -> Vec<PlotPoint> {
    result
        .cells
        .iter()
        .map(|c| PlotPoint {
            x: c.sweep_value,
            series: format!("{}/{}", c.design, c.architecture),
            y: c.mean_se_bps_hz,
            stderr: c.stderr,
        })
        .collect()
}

/// Plot data as CSV with columns `x, series, y, stderr`.
pub fn write_plot_data(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for p in plot_points(result) {
            w.serialize(p).map_err(|e| io_error(path, e))?;
        }
        w.flush().map_err(|e| io_error(path, e))?;
    }
    out.flush().map_err(|e| io_error(path, e))
}

/// Writes `<name>.<ext>` and `<name>_plot.csv` into `dir` and returns the
/// paths written.
pub fn write_experiment(
    result: &ExperimentResult,
    dir: &Path,
    format: OutputFormat,
) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let table = dir.join(format!("{}.{}", result.name, format.extension()));
    let plot = dir.join(format!("{}_plot.csv", result.name));
    emit_results(&result.cells, &table, format)?;
    write_plot_data(result, &plot)?;
    Ok(vec![table, plot])
}
