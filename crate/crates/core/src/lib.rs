//! Simulation of stimulated-echo storage and long echo-train tails in
//! inhomogeneous spin systems.
//!
//! * [`magnetization`] and [`sample`] hold the physical data model.
//! * [`seqlang`] parses and compiles pulse programs, and provides the
//!   standard Hahn-echo, stimulated-echo, CP and CPMG trains.
//! * [`bloch`] runs programs on large isochromat ensembles.
//! * [`liouville`] evolves small dipolar-coupled spin systems exactly.
//! * [`analysis`] extracts echo amplitudes, decay fits and gradient laws.

pub mod analysis;
pub mod bloch;
pub mod liouville;
pub mod magnetization;
pub mod sample;
pub mod seqlang;

pub use analysis::{EchoEntry, EchoTrain, FitResult};
pub use bloch::{Ensemble, SignalSample, SignalTrace};
pub use magnetization::{free_evolve, rotate, Magnetization, Relaxation};
pub use sample::{GradientSpec, Isochromat, OffsetDistribution, SampleSpec};
pub use seqlang::{Builtin, BuiltinParams, EventKind, PulseEvent, PulseProgram};

use thiserror::Error;

/// Location of a syntax error in pulse-program source (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub line: usize,
    pub column: usize,
}

impl std::fmt::Display for Span {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at {span}: {message}")]
    Syntax { span: Span, message: String },
    #[error("invalid program: {0}")]
    Validation(String),
    #[error("unknown phase `{phase}` at {span}")]
    UnknownPhase { span: Span, phase: String },
    #[error("unknown builtin sequence `{0}`")]
    UnknownBuiltin(String),
    #[error("invalid duration `{0}`")]
    InvalidDuration(String),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("gradient must be finite and non-negative, got {0}")]
    InvalidGradient(f64),
    #[error("program has no acquisition events")]
    NoAcquisition,
    #[error("spin system of {n} spins exceeds the limit of {max}")]
    DimensionTooLarge { n: usize, max: usize },
    #[error("invalid spin system: {0}")]
    InvalidSpinSystem(String),
    #[error("fit did not converge: {0}")]
    FitDidNotConverge(String),
    #[error("echo windows overlap: |t1 - 2τ| = {separation:e} s is below the window width {window:e} s")]
    EchoWindowsOverlap { separation: f64, window: f64 },
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("not enough data: {0}")]
    InsufficientData(String),
}
