//! `run` and `sweep`: evaluate grid points and write result files.
//!
//! Sweep rows are written in grid order as soon as each batch of points
//! completes, so an interrupted sweep leaves a valid prefix that `--resume`
//! continues. Timestamps live only in the metadata sidecar; every other file
//! depends on the config alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stecho::analysis::fit_quadratic_gradient;

use crate::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::experiment::{compute_point, FitOutcome, PointResult};
use crate::output::{
    summary_row, write_echoes, write_fits, write_json, write_trace, CsvFile, GradientLaw, PointFit, Table, ECHOES_HEADER,
    SUMMARY_HEADER, TRACES_HEADER,
};
use crate::plots;
use crate::CliError;

pub const TRACES_CSV: &str = "traces.csv";
pub const ECHOES_CSV: &str = "echoes.csv";
pub const SUMMARY_CSV: &str = "sweep_summary.csv";
pub const FITS_JSON: &str = "fits.json";
pub const SWEEP_META: &str = "sweep_meta.json";
pub const RUN_META: &str = "run_meta.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
    pub resume: bool,
    /// Stop after this many newly computed points, leaving a resumable sweep.
    pub stop_after: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: std::thread::available_parallelism().map_or(1, |n| n.get()), resume: false, stop_after: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Interrupted,
    Complete,
    Failed,
}

/// Metadata sidecar of a run or sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub schema_version: u32,
    pub name: Option<String>,
    pub fingerprint: String,
    pub total_points: usize,
    pub completed_points: usize,
    pub workers: usize,
    pub status: Status,
    pub started_at: String,
    pub updated_at: String,
    pub finished_at: Option<String>,
    pub error: Option<String>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub out_dir: PathBuf,
    pub points: usize,
    pub computed: usize,
    pub not_converged: usize,
    pub complete: bool,
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Evaluate a config with a single grid point.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path, opts: &RunOptions) -> Result<Report, CliError> {
    let grid = cfg.grid();
    if grid.len() != 1 {
        return Err(CliError::Config {
            path: "sweep".into(),
            message: format!("defines {} grid points; use `stecho sweep`", grid.len()),
        });
    }
    prepare_dir(out_dir)?;
    let meta_path = out_dir.join(RUN_META);
    let mut meta = Meta {
        schema_version: SCHEMA_VERSION,
        name: cfg.name.clone(),
        fingerprint: cfg.fingerprint(),
        total_points: 1,
        completed_points: 0,
        workers: opts.workers,
        status: Status::Running,
        started_at: now(),
        updated_at: now(),
        finished_at: None,
        error: None,
    };
    write_json(&meta_path, &meta)?;

    let result = pool(opts.workers)?.install(|| compute_point(cfg, &grid[0]));
    let r = match result {
        Ok(r) => r,
        Err(e) => {
            meta.status = Status::Failed;
            meta.error = Some(e.to_string());
            meta.updated_at = now();
            write_json(&meta_path, &meta)?;
            return Err(e);
        }
    };

    if cfg.output.traces {
        if let Some(trace) = &r.trace {
            let mut f = CsvFile::create(&out_dir.join(TRACES_CSV), &TRACES_HEADER)?;
            write_trace(&mut f, 0, trace)?;
            f.flush()?;
        }
    }
    let mut echoes = CsvFile::create(&out_dir.join(ECHOES_CSV), &ECHOES_HEADER)?;
    write_echoes(&mut echoes, &r)?;
    echoes.flush()?;
    write_fits(&out_dir.join(FITS_JSON), "run", cfg.name.as_deref(), &[PointFit::new(&r)], &[])?;
    if cfg.output.plots {
        plots::run_plots(out_dir, &r)?;
    }

    meta.completed_points = 1;
    meta.status = Status::Complete;
    meta.updated_at = now();
    meta.finished_at = Some(meta.updated_at.clone());
    write_json(&meta_path, &meta)?;
    let not_converged = usize::from(matches!(r.fit, FitOutcome::NotConverged { .. }));
    Ok(Report { out_dir: out_dir.to_path_buf(), points: 1, computed: 1, not_converged, complete: true })
}

/// Rows already in `echoes.csv` for points below `keep`, rewritten so a
/// partially written batch is discarded.
fn truncate_echoes(path: &Path, keep: usize) -> Result<(), CliError> {
    let table = Table::read(path)?;
    let col = table.column("point").ok_or_else(|| CliError::Input(format!("{}: no `point` column", path.display())))?;
    let mut f = CsvFile::create(path, &ECHOES_HEADER)?;
    for row in &table.rows {
        let point: usize = row[col].parse().map_err(|_| CliError::Input(format!("{}: bad point `{}`", path.display(), row[col])))?;
        if point < keep {
            f.record(row.iter().cloned())?;
        }
    }
    f.flush()
}

#[derive(Deserialize)]
struct StoredFits {
    points: Vec<serde_json::Value>,
}

fn gradient_laws(results: &[PointFit]) -> Vec<GradientLaw> {
    let mut groups: BTreeMap<(String, u64, u64, u64), Vec<&PointFit>> = BTreeMap::new();
    for p in results.iter().filter(|p| p.ste_he.is_some()) {
        let key = (
            p.sequence.clone(),
            p.tau.unwrap_or(0.0).to_bits(),
            p.t1.unwrap_or(0.0).to_bits(),
            p.b1_sigma.to_bits(),
        );
        groups.entry(key).or_default().push(p);
    }
    let mut laws = Vec::new();
    for members in groups.values() {
        let pts: Vec<(f64, f64)> = members.iter().map(|p| (p.gradient, p.ste_he.expect("filtered").ratio)).collect();
        if let Ok(fit) = fit_quadratic_gradient(&pts) {
            let first = members[0];
            laws.push(GradientLaw {
                sequence: first.sequence.clone(),
                tau: first.tau,
                t1: first.t1,
                b1_sigma: first.b1_sigma,
                gradients: pts.iter().map(|p| p.0).collect(),
                ratios: pts.iter().map(|p| p.1).collect(),
                fit,
            });
        }
    }
    laws
}

/// Evaluate every grid point of a config on a pool of `opts.workers`
/// threads.
pub fn sweep(cfg: &ExperimentConfig, out_dir: &Path, opts: &RunOptions) -> Result<Report, CliError> {
    prepare_dir(out_dir)?;
    let grid = cfg.grid();
    let meta_path = out_dir.join(SWEEP_META);
    let summary_path = out_dir.join(SUMMARY_CSV);
    let echoes_path = out_dir.join(ECHOES_CSV);
    let fits_path = out_dir.join(FITS_JSON);
    let fingerprint = cfg.fingerprint();

    let mut done = 0;
    let mut fits: Vec<PointFit> = Vec::new();
    let mut stored: Vec<serde_json::Value> = Vec::new();
    let mut started_at = now();
    let resuming = opts.resume && meta_path.exists();
    if resuming {
        let text = std::fs::read_to_string(&meta_path).map_err(|e| CliError::io(&meta_path, e))?;
        let old: Meta = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", meta_path.display())))?;
        if old.fingerprint != fingerprint {
            return Err(CliError::Config {
                path: "<root>".into(),
                message: format!("{} was written by a different config; use a fresh output directory", out_dir.display()),
            });
        }
        started_at = old.started_at;
        done = if summary_path.exists() { Table::read(&summary_path)?.rows.len() } else { 0 };
        if fits_path.exists() {
            let text = std::fs::read_to_string(&fits_path).map_err(|e| CliError::io(&fits_path, e))?;
            let f: StoredFits = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", fits_path.display())))?;
            stored = f.points;
        }
        if stored.len() < done {
            done = stored.len();
        }
        stored.truncate(done);
        if done > 0 {
            let table = Table::read(&summary_path)?;
            let mut f = CsvFile::create(&summary_path, &SUMMARY_HEADER)?;
            for row in table.rows.iter().take(done) {
                f.record(row.iter().cloned())?;
            }
            f.flush()?;
        }
        if echoes_path.exists() {
            truncate_echoes(&echoes_path, done)?;
        } else {
            CsvFile::create(&echoes_path, &ECHOES_HEADER)?.flush()?;
        }
        if done == 0 {
            CsvFile::create(&summary_path, &SUMMARY_HEADER)?.flush()?;
        }
    } else {
        CsvFile::create(&summary_path, &SUMMARY_HEADER)?.flush()?;
        CsvFile::create(&echoes_path, &ECHOES_HEADER)?.flush()?;
    }

    let mut meta = Meta {
        schema_version: SCHEMA_VERSION,
        name: cfg.name.clone(),
        fingerprint,
        total_points: grid.len(),
        completed_points: done,
        workers: opts.workers,
        status: Status::Running,
        started_at,
        updated_at: now(),
        finished_at: None,
        error: None,
    };
    write_json(&meta_path, &meta)?;

    let mut summary = CsvFile::append(&summary_path)?;
    let mut echoes = CsvFile::append(&echoes_path)?;
    let workers = opts.workers.max(1);
    let pool = pool(workers)?;
    let limit = opts.stop_after.map_or(grid.len(), |k| (done + k).min(grid.len()));
    let mut computed = 0;
    let mut not_converged = 0;

    while done < limit {
        let batch = &grid[done..(done + workers).min(limit)];
        let out: Vec<Result<PointResult, CliError>> = pool.install(|| batch.par_iter().map(|p| compute_point(cfg, p)).collect());
        for r in out {
            let r = match r {
                Ok(r) => r,
                Err(e) => {
                    meta.status = Status::Failed;
                    meta.error = Some(e.to_string());
                    meta.updated_at = now();
                    write_json(&meta_path, &meta)?;
                    return Err(e);
                }
            };
            summary.record(summary_row(&r))?;
            write_echoes(&mut echoes, &r)?;
            summary.flush()?;
            echoes.flush()?;
            if matches!(r.fit, FitOutcome::NotConverged { .. }) {
                not_converged += 1;
            }
            let pf = PointFit::new(&r);
            stored.push(serde_json::to_value(&pf).map_err(|e| CliError::Runtime(e.to_string()))?);
            fits.push(pf);
            done += 1;
            computed += 1;
        }
        write_json(
            &fits_path,
            &serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "kind": "sweep",
                "name": cfg.name,
                "points": stored,
                "gradient_laws": [],
            }),
        )?;
        meta.completed_points = done;
        meta.updated_at = now();
        write_json(&meta_path, &meta)?;
    }

    let complete = done == grid.len();
    if complete {
        // Gradient laws need every point; recover earlier ones from disk.
        let all: Vec<PointFit> = if fits.len() == grid.len() {
            fits
        } else {
            reload_point_fits(&stored, &grid)?
        };
        let laws = gradient_laws(&all);
        write_fits(&fits_path, "sweep", cfg.name.as_deref(), &all, &laws)?;
        if cfg.output.plots {
            plots::sweep_plots(out_dir)?;
        }
        meta.status = Status::Complete;
        meta.finished_at = Some(now());
    } else {
        meta.status = Status::Interrupted;
    }
    meta.updated_at = now();
    write_json(&meta_path, &meta)?;
    Ok(Report { out_dir: out_dir.to_path_buf(), points: grid.len(), computed, not_converged, complete })
}

/// Rebuild per-point fits of earlier sessions from the stored JSON, which
/// holds every float in round-trip form.
fn reload_point_fits(
    stored: &[serde_json::Value],
    grid: &[crate::config::PointParams],
) -> Result<Vec<PointFit>, CliError> {
    let mut out = Vec::with_capacity(stored.len());
    for (v, p) in stored.iter().zip(grid) {
        let ste_he = match v.get("ste_he") {
            Some(serde_json::Value::Null) | None => None,
            Some(s) => Some(serde_json::from_value(s.clone()).map_err(|e| CliError::Input(format!("stored ste_he: {e}")))?),
        };
        let fit = stored_fit(v.get("fit"))?;
        let echoes = v.get("echoes").and_then(|e| e.as_u64()).unwrap_or(0) as usize;
        out.push(PointFit {
            point: p.index,
            sequence: p.sequence_name(),
            tau: p.tau,
            t1: p.t1,
            gradient: p.gradient,
            b1_sigma: p.b1_sigma,
            n: p.n,
            echoes,
            fit,
            ste_he,
        });
    }
    Ok(out)
}

fn stored_fit(v: Option<&serde_json::Value>) -> Result<FitOutcome, CliError> {
    let v = v.ok_or_else(|| CliError::Input("stored point has no fit".into()))?;
    let status = v.get("status").and_then(|s| s.as_str()).unwrap_or("");
    let message = || v.get("message").and_then(|m| m.as_str()).unwrap_or("").to_string();
    Ok(match status {
        "fitted" => {
            let fit: stecho::FitResult =
                serde_json::from_value(v.clone()).map_err(|e| CliError::Input(format!("stored fit: {e}")))?;
            FitOutcome::Fitted { tail_fraction: fit.tail_fraction(), tail_percent: fit.tail_percent(), fit }
        }
        "not_converged" => FitOutcome::NotConverged { message: message() },
        _ => FitOutcome::Skipped { message: message() },
    })
}

/// Fit of one echo train loaded from `echoes.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefitEntry {
    pub point: usize,
    pub sequence: String,
    pub echoes: usize,
    pub t_short: f64,
    pub fit: FitOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefitFile<'a> {
    pub schema_version: u32,
    pub kind: &'a str,
    pub source: String,
    pub points: &'a [RefitEntry],
}

/// Refit echo trains of an `echoes.csv` file with `T_s` fixed at `t_short`,
/// optionally restricted to one grid point.
pub fn refit(path: &Path, t_short: f64, only: Option<usize>) -> Result<Vec<RefitEntry>, CliError> {
    let table = Table::read(path)?;
    let need = |name: &str| table.column(name).ok_or_else(|| CliError::Input(format!("{}: missing column `{name}`", path.display())));
    let (pc, sc, tc, ac) = (need("point")?, need("sequence")?, need("t")?, need("amp")?);
    let mut trains: BTreeMap<usize, (String, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (i, row) in table.rows.iter().enumerate() {
        let point: usize =
            row[pc].parse().map_err(|_| CliError::Input(format!("{}: row {}: bad point `{}`", path.display(), i + 2, row[pc])))?;
        if only.is_some_and(|o| o != point) {
            continue;
        }
        let (Some(t), Some(a)) = (table.value(i, tc)?, table.value(i, ac)?) else { continue };
        let e = trains.entry(point).or_insert_with(|| (row[sc].clone(), Vec::new(), Vec::new()));
        e.1.push(t);
        e.2.push(a);
    }
    if let Some(o) = only {
        if !trains.contains_key(&o) {
            return Err(CliError::Input(format!("{}: no echoes for point {o}", path.display())));
        }
    }
    Ok(trains
        .into_iter()
        .map(|(point, (sequence, t, a))| {
            let tau = if t.len() > 1 { 0.5 * (t[1] - t[0]) } else { 0.5 * t.first().copied().unwrap_or(0.0) };
            let train = stecho::EchoTrain::from_magnitudes(&t, &a, tau, &sequence);
            let fit = if t.len() < 6 {
                FitOutcome::Skipped { message: format!("{} echoes, need at least 6", t.len()) }
            } else {
                FitOutcome::from_result(stecho::analysis::fit_double_exponential(&train, t_short))
            };
            RefitEntry { point, sequence, echoes: t.len(), t_short, fit }
        })
        .collect())
}
