//! CSV and JSON result files.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use stecho::analysis::{QuadraticFit, SteHeRatio};
use stecho::bloch::SignalTrace;

use crate::config::{PointParams, SCHEMA_VERSION};
use crate::experiment::{FitOutcome, PointResult};
use crate::CliError;

pub const TRACES_HEADER: [&str; 5] = ["point", "t", "s_re", "s_im", "s_mag"];
pub const ECHOES_HEADER: [&str; 8] = ["point", "sequence", "echo_index", "t", "amp", "phase", "s_re", "s_im"];
pub const SUMMARY_HEADER: [&str; 18] = [
    "point",
    "sequence",
    "tau",
    "t1",
    "gradient",
    "b1_sigma",
    "n",
    "fit_status",
    "a_s",
    "a_l",
    "t_l",
    "tail_pct",
    "tail_present",
    "residual_rms",
    "ste_amp",
    "he_amp",
    "ste_he_ratio",
    "ste_phase_sign",
];

/// Float with 17 significant digits, which round-trips every `f64`.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub struct CsvFile {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvFile {
    /// Create or truncate `path` and write `header`.
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, CliError> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut f = Self { path: path.to_path_buf(), writer: csv::Writer::from_writer(file) };
        f.record(header.iter().map(|s| s.to_string()))?;
        Ok(f)
    }

    /// Open `path` for appending rows after an existing header.
    pub fn append(path: &Path) -> Result<Self, CliError> {
        let file = OpenOptions::new().append(true).open(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self { path: path.to_path_buf(), writer: csv::WriterBuilder::new().has_headers(false).from_writer(file) })
    }

    pub fn record(&mut self, fields: impl IntoIterator<Item = String>) -> Result<(), CliError> {
        self.writer.write_record(fields).map_err(|e| CliError::csv(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

pub fn write_trace(out: &mut CsvFile, point: usize, trace: &SignalTrace) -> Result<(), CliError> {
    for s in &trace.samples {
        out.record([point.to_string(), num(s.t), num(s.s.re), num(s.s.im), num(s.s.norm())])?;
    }
    Ok(())
}

pub fn write_echoes(out: &mut CsvFile, r: &PointResult) -> Result<(), CliError> {
    let seq = r.params.sequence_name();
    for e in &r.train.entries {
        out.record([
            r.params.index.to_string(),
            seq.clone(),
            e.index.to_string(),
            num(e.t),
            num(e.amplitude.norm()),
            num(e.amplitude.arg()),
            num(e.amplitude.re),
            num(e.amplitude.im),
        ])?;
    }
    Ok(())
}

pub fn summary_row(r: &PointResult) -> Vec<String> {
    let p = &r.params;
    let fit = r.fit.fit();
    vec![
        p.index.to_string(),
        p.sequence_name(),
        opt(p.tau),
        opt(p.t1),
        num(p.gradient),
        num(p.b1_sigma),
        p.n.map(|n| n.to_string()).unwrap_or_default(),
        r.fit.status().to_string(),
        opt(fit.map(|f| f.a_s)),
        opt(fit.map(|f| f.a_l)),
        opt(fit.map(|f| f.t_l)),
        opt(fit.map(|f| f.tail_percent())),
        fit.map(|f| f.tail_present().to_string()).unwrap_or_default(),
        opt(fit.map(|f| f.residual_rms)),
        opt(r.ste_he.map(|s| s.ste_amp)),
        opt(r.ste_he.map(|s| s.he_amp)),
        opt(r.ste_he.map(|s| s.ratio)),
        r.ste_he.map(|s| s.phase_sign.to_string()).unwrap_or_default(),
    ]
}

/// Per-point entry of `fits.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointFit {
    pub point: usize,
    pub sequence: String,
    pub tau: Option<f64>,
    pub t1: Option<f64>,
    pub gradient: f64,
    pub b1_sigma: f64,
    pub n: Option<usize>,
    pub echoes: usize,
    pub fit: FitOutcome,
    pub ste_he: Option<SteHeRatio>,
}

impl PointFit {
    pub fn new(r: &PointResult) -> Self {
        let p: &PointParams = &r.params;
        Self {
            point: p.index,
            sequence: p.sequence_name(),
            tau: p.tau,
            t1: p.t1,
            gradient: p.gradient,
            b1_sigma: p.b1_sigma,
            n: p.n,
            echoes: r.train.entries.len(),
            fit: r.fit.clone(),
            ste_he: r.ste_he,
        }
    }
}

/// `ratio = a·G² + b` over the gradient axis at fixed other parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientLaw {
    pub sequence: String,
    pub tau: Option<f64>,
    pub t1: Option<f64>,
    pub b1_sigma: f64,
    pub gradients: Vec<f64>,
    pub ratios: Vec<f64>,
    #[serde(flatten)]
    pub fit: QuadraticFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitsFile<'a> {
    pub schema_version: u32,
    pub kind: &'a str,
    pub name: Option<&'a str>,
    pub points: &'a [PointFit],
    pub gradient_laws: &'a [GradientLaw],
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let tmp = path.with_extension("json.tmp");
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    {
        let mut f = File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
        f.write_all(text.as_bytes()).map_err(|e| CliError::io(&tmp, e))?;
        f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_fits(path: &Path, kind: &str, name: Option<&str>, points: &[PointFit], laws: &[GradientLaw]) -> Result<(), CliError> {
    write_json(path, &FitsFile { schema_version: SCHEMA_VERSION, kind, name, points, gradient_laws: laws })
}

/// Columns of a CSV file by header name.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::csv(path, e))?;
        let header = rdr.headers().map_err(|e| CliError::csv(path, e))?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec.map_err(|e| CliError::csv(path, e))?.iter().map(str::to_string).collect());
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn has(&self, names: &[&str]) -> bool {
        names.iter().all(|n| self.column(n).is_some())
    }

    /// Numeric value of column `col` in `row`; empty cells are `None`.
    pub fn value(&self, row: usize, col: usize) -> Result<Option<f64>, CliError> {
        let cell = self.rows[row][col].trim();
        if cell.is_empty() {
            return Ok(None);
        }
        cell.parse()
            .map(Some)
            .map_err(|_| CliError::Input(format!("row {}, column `{}`: `{cell}` is not a number", row + 2, self.header[col])))
    }
}
