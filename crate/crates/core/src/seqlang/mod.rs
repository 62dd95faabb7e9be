//! Pulse-program language: text parser, compiled timelines and the
//! standard sequences.

mod builtins;
mod parser;
mod program;
pub mod units;

pub use builtins::{builtin, AcqWindow, Builtin, BuiltinParams};
pub use parser::parse_program;
pub use program::{acquisition_samples, format_phase, EventKind, PulseEvent, PulseProgram, TimelineBuilder};
