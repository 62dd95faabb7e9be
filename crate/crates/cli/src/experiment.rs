//! Evaluation of one grid point: ensemble, program, engine, analysis.

use serde::Serialize;
use stecho::analysis::{
    fit_double_exponential, ste_he_ratio, ste_he_ratio_resolved, EchoEntry, EchoTrain, FitResult, SteHeRatio,
};
use stecho::bloch::{self, three_pulse_pathways, Ensemble, SignalTrace};
use stecho::liouville::{run_program_exact, DensityState};
use stecho::{Builtin, BuiltinParams, GradientSpec, PulseProgram};

use crate::config::{Engine, ExperimentConfig, PointParams};
use crate::CliError;

/// Double-exponential fit of one echo train.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FitOutcome {
    Fitted {
        #[serde(flatten)]
        fit: FitResult,
        tail_fraction: f64,
        tail_percent: f64,
    },
    NotConverged { message: String },
    Skipped { message: String },
}

impl FitOutcome {
    pub fn from_result(r: Result<FitResult, stecho::Error>) -> Self {
        match r {
            Ok(fit) => FitOutcome::Fitted { tail_fraction: fit.tail_fraction(), tail_percent: fit.tail_percent(), fit },
            Err(stecho::Error::FitDidNotConverge(m)) => FitOutcome::NotConverged { message: m },
            Err(e) => FitOutcome::Skipped { message: e.to_string() },
        }
    }

    pub fn fit(&self) -> Option<&FitResult> {
        match self {
            FitOutcome::Fitted { fit, .. } => Some(fit),
            _ => None,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            FitOutcome::Fitted { .. } => "fitted",
            FitOutcome::NotConverged { .. } => "not_converged",
            FitOutcome::Skipped { .. } => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub params: PointParams,
    pub train: EchoTrain,
    /// Raw signal; absent for Hahn-echo decay curves, which are assembled
    /// from separate experiments.
    pub trace: Option<SignalTrace>,
    pub fit: FitOutcome,
    pub ste_he: Option<SteHeRatio>,
}

/// Hahn-echo decay sampled at `2kτ`, `k = 1..=n`, one experiment per point.
pub fn hahn_decay(
    tau: f64,
    n: usize,
    mut run: impl FnMut(&PulseProgram) -> Result<SignalTrace, stecho::Error>,
) -> Result<EchoTrain, stecho::Error> {
    let mut entries = Vec::with_capacity(n);
    for k in 1..=n {
        let p = stecho::seqlang::builtin(Builtin::He, &BuiltinParams::train(k as f64 * tau, 1))?;
        let tr = run(&p)?;
        let e = bloch::echo_train_from_trace(&p, &tr).entries[0];
        entries.push(EchoEntry { index: k, t: e.t, amplitude: e.amplitude });
    }
    Ok(EchoTrain { entries, tau, sequence: Builtin::He.name().to_string() })
}

pub fn ensemble_for(cfg: &ExperimentConfig, p: &PointParams) -> Result<Ensemble, stecho::Error> {
    Ensemble::from_spec(&cfg.sample.spec(p.b1_sigma), cfg.seed)
}

pub fn compute_point(cfg: &ExperimentConfig, p: &PointParams) -> Result<PointResult, CliError> {
    compute(cfg, p).map_err(|source| CliError::Point { context: p.describe(), source })
}

fn compute(cfg: &ExperimentConfig, p: &PointParams) -> Result<PointResult, stecho::Error> {
    let gradient = GradientSpec::new(p.gradient)?;
    let ensemble = match cfg.engine {
        Engine::Bloch => Some(ensemble_for(cfg, p)?),
        Engine::Liouville => None,
    };
    let system = match (&cfg.spin_system, cfg.engine) {
        (Some(s), Engine::Liouville) => Some(cfg.spin_system_at(s, p.gradient)?),
        _ => None,
    };
    let run = |program: &PulseProgram| -> Result<SignalTrace, stecho::Error> {
        match (&ensemble, &system) {
            (Some(e), _) => Ok(bloch::run(program, e, &gradient)),
            (None, Some(s)) => run_program_exact(program, s, &DensityState::thermal(s.n())),
            (None, None) => unreachable!("validated config has an engine input"),
        }
    };

    let hahn_curve = p.sequence == Some(Builtin::He) && p.n.unwrap_or(1) > 1;
    let (train, trace, program) = if hahn_curve {
        (hahn_decay(p.tau.unwrap_or(0.0), p.n.unwrap_or(1), run)?, None, None)
    } else {
        let program = cfg.program_for(p)?;
        if program.acquisitions().next().is_none() {
            return Err(stecho::Error::NoAcquisition);
        }
        let trace = run(&program)?;
        (bloch::echo_train_from_trace(&program, &trace), Some(trace), Some(program))
    };

    let mut ste_he = None;
    if let (Some(b), Some(tau), Some(t1), Some(program), Some(trace)) = (p.sequence, p.tau, p.t1, &program, &trace) {
        let separation = (t1 - 2.0 * tau).abs();
        if b.is_stimulated() && t1 > tau && separation > 0.0 {
            let window = cfg.analysis.echo_window.map_or(0.5 * separation.min(2.0 * tau), |w| w.0);
            ste_he = Some(match (&ensemble, cfg.analysis.pathways) {
                (Some(e), true) => ste_he_ratio_resolved(&three_pulse_pathways(program, e, &gradient)?, tau, t1, window)?,
                _ => ste_he_ratio(trace, tau, t1, window)?,
            });
        }
    }

    let fit = match cfg.t_short() {
        _ if !cfg.analysis.fit => FitOutcome::Skipped { message: "fitting disabled".into() },
        _ if train.entries.len() < 6 => FitOutcome::Skipped { message: format!("{} echoes, need at least 6", train.entries.len()) },
        None => FitOutcome::Skipped { message: "no t_short and no finite sample T2".into() },
        Some(ts) => FitOutcome::from_result(fit_double_exponential(&train, ts)),
    };

    Ok(PointResult { params: *p, train, trace, fit, ste_he })
}
