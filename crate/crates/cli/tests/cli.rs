use std::path::{Path, PathBuf};
use std::process::Command;

use stecho_cli::config::ExperimentConfig;
use stecho_cli::units;
use stecho_cli::runner::{self, RunOptions, ECHOES_CSV, FITS_JSON, SUMMARY_CSV, SWEEP_META};

const SMALL_SWEEP: &str = r#"{
  "schema_version": 1,
  "name": "small",
  "seed": 3,
  "sample": { "n_isochromats": 1500, "b1_profile": [1.0, 0.0, -0.3], "b1_sigma": 0.05 },
  "sequence": { "builtin": "CPMG1", "tau": "200us", "n": 30 },
  "sweep": { "tau": ["100us", "200us"], "gradient": ["0 G/cm", "10 G/cm", "20 G/cm"] }
}"#;

fn stecho() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stecho"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

#[test]
fn shipped_configs_validate() {
    let names = ["fig1", "fig4", "fig5", "fig6", "fig7", "fig9", "fig10"];
    for name in names {
        let cfg = ExperimentConfig::load(&configs_dir().join(format!("{name}.json"))).unwrap();
        assert_eq!(cfg.name.as_deref(), Some(name));
        assert_eq!(cfg.sample.t2.map(|s| s.0), Some(units::parse_time("1.8ms").unwrap()));
        assert_eq!(cfg.sample.t1.map(|s| s.0), Some(units::parse_time("200ms").unwrap()));
        assert!(cfg.grid().iter().all(|p| (0.0..=30.0).contains(&p.gradient)));
    }
}

#[test]
fn config_survives_serialization() {
    let cfg = ExperimentConfig::parse(SMALL_SWEEP).unwrap();
    let text = serde_json::to_string_pretty(&cfg).unwrap();
    let back = ExperimentConfig::parse(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.fingerprint(), cfg.fingerprint());
}

#[test]
fn resumed_sweep_matches_uninterrupted_run() {
    let cfg = ExperimentConfig::parse(SMALL_SWEEP).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let (full, part) = (tmp.path().join("full"), tmp.path().join("part"));

    let report = runner::sweep(&cfg, &full, &RunOptions { workers: 2, ..Default::default() }).unwrap();
    assert!(report.complete);
    assert_eq!(report.points, 6);

    let first = runner::sweep(&cfg, &part, &RunOptions { workers: 2, resume: false, stop_after: Some(3) }).unwrap();
    assert!(!first.complete);
    let meta = read(&part.join(SWEEP_META));
    assert!(meta.contains("\"interrupted\""), "{meta}");
    let second = runner::sweep(&cfg, &part, &RunOptions { workers: 3, resume: true, stop_after: None }).unwrap();
    assert!(second.complete);
    assert_eq!(second.computed, 6 - first.computed);

    for file in [SUMMARY_CSV, ECHOES_CSV, FITS_JSON] {
        assert_eq!(read(&full.join(file)), read(&part.join(file)), "{file} differs after resume");
    }
}

#[test]
fn resume_refuses_a_changed_config() {
    let cfg = ExperimentConfig::parse(SMALL_SWEEP).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    runner::sweep(&cfg, tmp.path(), &RunOptions { workers: 1, resume: false, stop_after: Some(1) }).unwrap();
    let changed = ExperimentConfig::parse(&SMALL_SWEEP.replace("\"seed\": 3", "\"seed\": 4")).unwrap();
    assert!(runner::sweep(&changed, tmp.path(), &RunOptions { workers: 1, resume: true, stop_after: None }).is_err());
}

#[test]
fn rerun_is_identical_apart_from_metadata() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write(tmp.path(), "small.json", SMALL_SWEEP);
    for out in ["a", "b"] {
        let st = stecho().args(["sweep"]).arg(&cfg_path).arg("-o").arg(tmp.path().join(out)).output().unwrap().status;
        assert!(st.success());
    }
    for file in [SUMMARY_CSV, ECHOES_CSV, FITS_JSON, "decays.svg", "summary.svg"] {
        assert_eq!(read(&tmp.path().join("a").join(file)), read(&tmp.path().join("b").join(file)), "{file}");
    }
}

#[test]
fn csv_floats_carry_seventeen_digits() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(SMALL_SWEEP).unwrap();
    runner::sweep(&cfg, tmp.path(), &RunOptions { workers: 1, ..Default::default() }).unwrap();
    let mut rdr = csv::Reader::from_path(tmp.path().join(ECHOES_CSV)).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, ["point", "sequence", "echo_index", "t", "amp", "phase", "s_re", "s_im"]);
    let row = rdr.records().next().unwrap().unwrap();
    let mantissa = row[4].split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{}", &row[4]);
    let fits: serde_json::Value = serde_json::from_str(&read(&tmp.path().join(FITS_JSON))).unwrap();
    assert_eq!(fits["schema_version"], 1);
}

#[test]
fn run_writes_trace_echoes_fits_and_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{
      "schema_version": 1,
      "sample": { "n_isochromats": 1000 },
      "sequence": { "builtin": "CPMG2", "tau": "200us", "n": 10, "window": { "width": "100us", "dwell": "10us" } },
      "gradient": "5 G/cm"
    }"#;
    let cfg_path = write(tmp.path(), "one.json", cfg);
    let out = tmp.path().join("out");
    let st = stecho().arg("run").arg(&cfg_path).arg("-o").arg(&out).output().unwrap().status;
    assert_eq!(st.code(), Some(0));
    for f in ["traces.csv", "echoes.csv", "fits.json", "run_meta.json", "traces.svg", "echoes.svg"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let traces = read(&out.join("traces.csv"));
    assert!(traces.starts_with("point,t,s_re,s_im,s_mag\n"));
    assert_eq!(traces.lines().count(), 1 + 20 * 11);
}

#[test]
fn run_rejects_a_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write(tmp.path(), "grid.json", SMALL_SWEEP);
    let out = stecho().arg("run").arg(&cfg_path).arg("-o").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stecho sweep"));
}

#[test]
fn invalid_config_exits_with_validation_code_and_field_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (SMALL_SWEEP.replace("\"200us\", \"n\"", "\"200 parsecs\", \"n\""), "sequence.tau"),
        (SMALL_SWEEP.replace("\"10 G/cm\"", "\"-10 G/cm\""), "sweep.gradient[1]"),
        (SMALL_SWEEP.replace("\"seed\": 3", "\"seed\": 3, \"colour\": 1"), "colour"),
        (SMALL_SWEEP.replace("\"schema_version\": 1", "\"schema_version\": 9"), "schema_version"),
    ];
    for (i, (text, path)) in cases.iter().enumerate() {
        let cfg_path = write(tmp.path(), &format!("bad{i}.json"), text);
        let out = stecho().arg("sweep").arg(&cfg_path).arg("-o").arg(tmp.path().join("o")).output().unwrap();
        assert_eq!(out.status.code(), Some(1), "case {i}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(path), "case {i}: {err}");
    }
}

#[test]
fn usage_errors_exit_with_validation_code() {
    assert_eq!(stecho().arg("frobnicate").output().unwrap().status.code(), Some(1));
    assert_eq!(stecho().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn malformed_program_reports_location() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(tmp.path(), "bad.pp", "p(90, x) d(200us)\np(180, y d(200us)\n");
    let out = stecho().arg("parse").arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("syntax error at line 2, column"), "{err}");
}

#[test]
fn parse_prints_canonical_form_and_timeline() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(tmp.path(), "he.pp", "p(90,x)  d(200us) p(180, x) d(150us) acq(100us, 10us)");
    let out = stecho().arg("parse").arg(&p).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let canonical = text.lines().next().unwrap();
    let original = stecho::seqlang::parse_program(&read(&p)).unwrap();
    assert!(stecho::seqlang::parse_program(canonical).unwrap().same_timeline(&original), "{canonical}");
    assert!(text.contains("pulse 180 deg, phase x"), "{text}");
    assert!(text.contains("delay 150.000 us"), "{text}");
    assert!(text.contains("total 450.000 us"), "{text}");
}

#[test]
fn fit_and_plot_subcommands_read_sweep_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(SMALL_SWEEP).unwrap();
    runner::sweep(&cfg, tmp.path(), &RunOptions { workers: 2, ..Default::default() }).unwrap();

    let fits = tmp.path().join("refit.json");
    let st = stecho()
        .arg("fit")
        .arg(tmp.path().join(ECHOES_CSV))
        .args(["--t-short", "1.8ms", "--point", "4", "-o"])
        .arg(&fits)
        .status()
        .unwrap();
    assert!(matches!(st.code(), Some(0) | Some(3)));
    let v: serde_json::Value = serde_json::from_str(&read(&fits)).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["points"].as_array().unwrap().len(), 1);
    assert_eq!(v["points"][0]["point"], 4);

    let missing = stecho().arg("fit").arg(tmp.path().join(ECHOES_CSV)).args(["--t-short", "1.8ms", "--point", "99"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
    let bad_time = stecho().arg("fit").arg(tmp.path().join(ECHOES_CSV)).args(["--t-short", "soon"]).output().unwrap();
    assert_eq!(bad_time.status.code(), Some(1));

    for (csv, svg) in [(SUMMARY_CSV, "s.svg"), (ECHOES_CSV, "e.svg")] {
        let out = tmp.path().join(svg);
        let st = stecho().arg("plot").arg(tmp.path().join(csv)).arg("-o").arg(&out).output().unwrap().status;
        assert!(st.success());
        assert!(read(&out).starts_with("<svg"));
    }
    let st = stecho().arg("plot").arg(tmp.path().join(FITS_JSON)).arg("-o").arg(tmp.path().join("x.svg")).output().unwrap().status;
    assert_ne!(st.code(), Some(0));
}

#[test]
fn fit_reports_non_convergence_with_its_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let mut text = String::from("point,sequence,echo_index,t,amp,phase,s_re,s_im\n");
    for k in 1..=12 {
        let amp = if k % 2 == 0 { 1.0 } else { 1e-9 };
        text += &format!("0,CPMG1,{k},{},{amp},0,{amp},0\n", 4e-4 * k as f64);
    }
    let p = write(tmp.path(), "echoes.csv", &text);
    let out = stecho().arg("fit").arg(&p).args(["--t-short", "1.8ms"]).output().unwrap();
    let code = out.status.code();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        (code == Some(3) && stdout.contains("not_converged")) || (code == Some(0) && stdout.contains("fitted")),
        "{code:?} {stdout}"
    );
}
