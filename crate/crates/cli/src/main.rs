use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stecho::seqlang::{format_phase, parse_program};
use stecho::EventKind;
use stecho_cli::config::{ExperimentConfig, SCHEMA_VERSION};
use stecho_cli::output::{write_json, Table};
use stecho_cli::runner::{self, RefitFile, Report, RunOptions};
use stecho_cli::{plots, units, CliError};

/// Stimulated-echo and echo-train simulator.
#[derive(Parser)]
#[command(name = "stecho", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config with a single parameter point.
    Run {
        config: PathBuf,
        /// Output directory [default: out/<config name>].
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run every point of a config's parameter grid.
    Sweep {
        config: PathBuf,
        /// Output directory [default: out/<config name>].
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Continue an interrupted sweep in the same directory.
        #[arg(long)]
        resume: bool,
        /// Stop after computing this many points.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Fit echo trains of an echoes.csv file with a fixed short time constant.
    Fit {
        echoes: PathBuf,
        /// Short time constant, e.g. `1.8ms`.
        #[arg(long)]
        t_short: String,
        /// Only fit this grid point.
        #[arg(long)]
        point: Option<usize>,
        /// Write the fits as JSON here instead of printing a table.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Plot a traces, echoes or sweep summary CSV file as SVG.
    Plot {
        csv: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Logarithmic y axis.
        #[arg(long, conflicts_with = "linear_y")]
        log_y: bool,
        /// Linear y axis.
        #[arg(long)]
        linear_y: bool,
    },
    /// Check a pulse program and print its canonical form and timeline.
    Parse {
        /// Program file, or `-` for standard input.
        file: PathBuf,
    },
}

fn default_out(config: &Path) -> PathBuf {
    let stem = config.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
    Path::new("out").join(stem)
}

fn options(workers: Option<usize>) -> RunOptions {
    let mut opts = RunOptions::default();
    if let Some(w) = workers {
        opts.workers = w.max(1);
    }
    opts
}

fn finish(report: &Report) -> Result<u8, CliError> {
    let state = if report.complete { "complete" } else { "interrupted" };
    eprintln!(
        "{state}: {} points, {} computed this session, results in {}",
        report.points,
        report.computed,
        report.out_dir.display()
    );
    if report.not_converged > 0 {
        eprintln!("{} fits did not converge", report.not_converged);
        return Ok(3);
    }
    Ok(0)
}

fn parse_cmd(file: &Path) -> Result<u8, CliError> {
    let (name, source) = if file == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(|e| CliError::io(file, e))?;
        ("<stdin>".to_string(), s)
    } else {
        (file.display().to_string(), std::fs::read_to_string(file).map_err(|e| CliError::io(file, e))?)
    };
    let program = parse_program(&source).map_err(|e| CliError::Input(format!("{name}: {e}")))?;
    print!("{}", program.to_source());
    println!();
    println!("{:>4}  {:>12}  event", "#", "start (us)");
    for (i, e) in program.events.iter().enumerate() {
        let what = match e.kind {
            EventKind::Pulse { angle_deg, phase_deg } => format!("pulse {angle_deg} deg, phase {}", format_phase(phase_deg)),
            EventKind::Delay { duration } => format!("delay {:.3} us", 1e6 * duration),
            EventKind::Acquire { duration, dwell } => format!("acquire {:.3} us, dwell {:.3} us", 1e6 * duration, 1e6 * dwell),
        };
        println!("{i:>4}  {:>12.3}  {what}", 1e6 * e.start);
    }
    println!("total {:.3} us", 1e6 * program.total_duration);
    Ok(0)
}

fn execute(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Run { config, out, workers } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out.unwrap_or_else(|| default_out(&config));
            finish(&runner::run(&cfg, &out, &options(workers))?)
        }
        Command::Sweep { config, out, workers, resume, stop_after } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out.unwrap_or_else(|| default_out(&config));
            let opts = RunOptions { resume, stop_after, ..options(workers) };
            finish(&runner::sweep(&cfg, &out, &opts)?)
        }
        Command::Fit { echoes, t_short, point, out } => {
            let ts = units::parse_time(&t_short).map_err(|m| CliError::Input(format!("--t-short: {m}")))?;
            if !(ts.is_finite() && ts > 0.0) {
                return Err(CliError::Input(format!("--t-short must be positive, got {t_short}")));
            }
            let fits = runner::refit(&echoes, ts, point)?;
            match &out {
                Some(path) => write_json(
                    path,
                    &RefitFile { schema_version: SCHEMA_VERSION, kind: "fit", source: echoes.display().to_string(), points: &fits },
                )?,
                None => {
                    println!("{:>6}  {:<10}  {:>6}  {:<13}  {:>12}  {:>12}  {:>10}", "point", "sequence", "echoes", "status", "a_s", "t_l (s)", "tail (%)");
                    for f in &fits {
                        match f.fit.fit() {
                            Some(r) => println!(
                                "{:>6}  {:<10}  {:>6}  {:<13}  {:>12.5e}  {:>12.5e}  {:>10.4}",
                                f.point, f.sequence, f.echoes, f.fit.status(), r.a_s, r.t_l, r.tail_percent()
                            ),
                            None => println!("{:>6}  {:<10}  {:>6}  {:<13}", f.point, f.sequence, f.echoes, f.fit.status()),
                        }
                    }
                }
            }
            let failed = fits.iter().filter(|f| f.fit.status() == "not_converged").count();
            if failed > 0 {
                eprintln!("{failed} fits did not converge");
                return Ok(3);
            }
            Ok(0)
        }
        Command::Plot { csv, out, log_y, linear_y } => {
            let axis = if log_y { Some(true) } else if linear_y { Some(false) } else { None };
            let plot = plots::plot_table(&Table::read(&csv)?, axis)?;
            std::fs::write(&out, plot.render()).map_err(|e| CliError::io(&out, e))?;
            Ok(0)
        }
        Command::Parse { file } => parse_cmd(&file),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
