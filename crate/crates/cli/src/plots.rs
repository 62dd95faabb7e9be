//! Figures built from result tables.

use std::collections::BTreeMap;
use std::path::Path;

use stecho::analysis::fit_quadratic_gradient;

use crate::experiment::PointResult;
use crate::output::Table;
use crate::runner::{ECHOES_CSV, SUMMARY_CSV};
use crate::svg::{Plot, Series, Style};
use crate::CliError;

fn save(path: &Path, plot: &Plot) -> Result<(), CliError> {
    std::fs::write(path, plot.render()).map_err(|e| CliError::io(path, e))
}

pub fn run_plots(out_dir: &Path, r: &PointResult) -> Result<(), CliError> {
    let label = r.params.sequence_name();
    if let Some(trace) = &r.trace {
        let mut p = Plot::new(format!("{label} signal"), "t (ms)", "|s| / M0");
        p.push(Series::new(label.clone(), trace.samples.iter().map(|s| (1e3 * s.t, s.s.norm())).collect(), Style::Markers));
        save(&out_dir.join("traces.svg"), &p)?;
    }
    let mut p = Plot::new(format!("{label} echo amplitudes"), "t (ms)", "|echo| / M0").log_y(true);
    p.push(Series::new(label, r.train.entries.iter().map(|e| (1e3 * e.t, e.amplitude.norm())).collect(), Style::Markers));
    if let Some(fit) = r.fit.fit() {
        let model = r.train.entries.iter().map(|e| (1e3 * e.t, fit.model(e.t))).collect();
        p.push(Series::new(format!("fit, tail {:.2}%", fit.tail_percent()), model, Style::Line));
    }
    save(&out_dir.join("echoes.svg"), &p)
}

pub fn sweep_plots(out_dir: &Path) -> Result<(), CliError> {
    save(&out_dir.join("decays.svg"), &echoes_plot(&Table::read(&out_dir.join(ECHOES_CSV))?)?)?;
    save(&out_dir.join("summary.svg"), &summary_plot(&Table::read(&out_dir.join(SUMMARY_CSV))?)?)
}

fn required(table: &Table, name: &str) -> Result<usize, CliError> {
    table.column(name).ok_or_else(|| CliError::Input(format!("missing column `{name}`")))
}

/// Rows grouped by the string key built from `key_cols`, in first-seen order.
fn groups(table: &Table, key_cols: &[usize]) -> Vec<(String, Vec<usize>)> {
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, row) in table.rows.iter().enumerate() {
        let key: Vec<&str> = key_cols.iter().map(|&c| row[c].as_str()).collect();
        let key = key.join(" ");
        if !rows.contains_key(&key) {
            order.push(key.clone());
        }
        rows.entry(key).or_default().push(i);
    }
    order.into_iter().map(|k| { let v = rows.remove(&k).unwrap_or_default(); (k, v) }).collect()
}

fn xy(table: &Table, rows: &[usize], x: usize, y: usize, x_scale: f64) -> Result<Vec<(f64, f64)>, CliError> {
    let mut out = Vec::with_capacity(rows.len());
    for &r in rows {
        if let (Some(a), Some(b)) = (table.value(r, x)?, table.value(r, y)?) {
            out.push((x_scale * a, b));
        }
    }
    Ok(out)
}

fn short(v: &str) -> String {
    v.parse::<f64>().map_or_else(|_| v.to_string(), |x| format!("{x}"))
}

/// Echo magnitude against time, one series per grid point.
pub fn echoes_plot(table: &Table) -> Result<Plot, CliError> {
    let (point, seq, t, amp) = (required(table, "point")?, required(table, "sequence")?, required(table, "t")?, required(table, "amp")?);
    let mut p = Plot::new("Echo amplitudes", "t (ms)", "|echo| / M0").log_y(true);
    for (_, rows) in groups(table, &[point]) {
        let first = &table.rows[rows[0]];
        p.push(Series::new(format!("{} #{}", first[seq], first[point]), xy(table, &rows, t, amp, 1e3)?, Style::LineAndMarkers));
    }
    Ok(p)
}

/// Signal magnitude against time, one series per grid point.
pub fn traces_plot(table: &Table) -> Result<Plot, CliError> {
    let (point, t, mag) = (required(table, "point")?, required(table, "t")?, required(table, "s_mag")?);
    let mut p = Plot::new("Signal", "t (ms)", "|s| / M0");
    for (key, rows) in groups(table, &[point]) {
        p.push(Series::new(format!("#{key}"), xy(table, &rows, t, mag, 1e3)?, Style::Markers));
    }
    Ok(p)
}

/// Stimulated/Hahn echo ratio against gradient with quadratic fits when the
/// summary has ratios, otherwise tail percentage against τ per gradient.
pub fn summary_plot(table: &Table) -> Result<Plot, CliError> {
    let ratio = required(table, "ste_he_ratio")?;
    let has_ratio = table.rows.iter().any(|r| !r[ratio].is_empty());
    let (seq, tau, t1, g, sigma, n) = (
        required(table, "sequence")?,
        required(table, "tau")?,
        required(table, "t1")?,
        required(table, "gradient")?,
        required(table, "b1_sigma")?,
        required(table, "n")?,
    );
    if has_ratio {
        let mut p = Plot::new("Stimulated / Hahn echo", "G (G/cm)", "STE / HE");
        for (_, rows) in groups(table, &[seq, tau, t1, sigma]) {
            let first = &table.rows[rows[0]];
            let label = format!("{} τ={}s t1={}s σ={}", first[seq], short(&first[tau]), short(&first[t1]), short(&first[sigma]));
            let pts = xy(table, &rows, g, ratio, 1.0)?;
            if let Ok(f) = fit_quadratic_gradient(&pts) {
                let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(x, _)| (a.min(x), b.max(x)));
                let curve = (0..=60).map(|k| lo + (hi - lo) * k as f64 / 60.0).map(|x| (x, f.eval(x))).collect();
                p.push(Series::new(label.clone(), pts, Style::Markers));
                p.push(Series::new(format!("aG²+b, r²={:.4}", f.r_squared), curve, Style::Line));
            } else {
                p.push(Series::new(label, pts, Style::LineAndMarkers));
            }
        }
        Ok(p)
    } else {
        let tail = required(table, "tail_pct")?;
        let mut p = Plot::new("Tail fraction", "τ (µs)", "A_l / A_s (%)");
        for (_, rows) in groups(table, &[seq, g, sigma, n]) {
            let first = &table.rows[rows[0]];
            let label = format!("{} G={} σ={}", first[seq], short(&first[g]), short(&first[sigma]));
            p.push(Series::new(label, xy(table, &rows, tau, tail, 1e6)?, Style::LineAndMarkers));
        }
        Ok(p)
    }
}

/// Pick the figure for a result table by its columns.
pub fn plot_table(table: &Table, log_y: Option<bool>) -> Result<Plot, CliError> {
    let plot = if table.has(&["fit_status", "tail_pct"]) {
        summary_plot(table)?
    } else if table.has(&["echo_index", "amp"]) {
        echoes_plot(table)?
    } else if table.has(&["s_mag"]) {
        traces_plot(table)?
    } else {
        return Err(CliError::Input(format!("unrecognized table with columns {}", table.header.join(", "))));
    };
    Ok(match log_y {
        Some(on) => plot.log_y(on),
        None => plot,
    })
}
