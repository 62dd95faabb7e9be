use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::units::format_duration;
use crate::Error;

/// What happens at one point of the timeline. Pulses are instantaneous.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// Hard pulse; angle and phase are kept in degrees as written.
    Pulse { angle_deg: f64, phase_deg: f64 },
    Delay { duration: f64 },
    /// Samples at `start + k·dwell` for every `k·dwell <= duration`; a
    /// zero-length acquisition records a single sample.
    Acquire { duration: f64, dwell: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseEvent {
    pub start: f64,
    pub kind: EventKind,
}

impl PulseEvent {
    pub fn duration(&self) -> f64 {
        match self.kind {
            EventKind::Pulse { .. } => 0.0,
            EventKind::Delay { duration } | EventKind::Acquire { duration, .. } => duration,
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration()
    }
}

impl EventKind {
    pub fn pulse(angle_deg: f64, phase_deg: f64) -> Self {
        EventKind::Pulse { angle_deg, phase_deg }
    }

    /// Nominal angle and phase in radians for a pulse.
    pub fn pulse_radians(&self) -> Option<(f64, f64)> {
        match *self {
            EventKind::Pulse { angle_deg, phase_deg } => Some((angle_deg.to_radians(), phase_deg.to_radians())),
            _ => None,
        }
    }
}

/// Number of samples an acquisition records.
pub fn acquisition_samples(duration: f64, dwell: f64) -> usize {
    if duration <= 0.0 || dwell <= 0.0 {
        1
    } else {
        (duration / dwell * (1.0 + 1e-12)).floor() as usize + 1
    }
}

/// A compiled, time-ordered pulse program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseProgram {
    pub events: Vec<PulseEvent>,
    pub total_duration: f64,
    pub source: Option<String>,
    pub builtin: Option<String>,
    /// Inter-pulse half spacing τ for builtin trains.
    pub tau: Option<f64>,
    /// Length of the phase cycle.
    pub cycle_length: usize,
}

impl PulseProgram {
    /// Assign start times to `kinds` in order and validate the result.
    pub fn compile(kinds: impl IntoIterator<Item = EventKind>) -> Result<Self, Error> {
        let mut t = 0.0;
        let mut events = Vec::new();
        for kind in kinds {
            validate_kind(&kind)?;
            let ev = PulseEvent { start: t, kind };
            t = ev.end();
            events.push(ev);
        }
        Ok(Self { events, total_duration: t, source: None, builtin: None, tau: None, cycle_length: 1 })
    }

    pub fn pulses(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.events.iter().filter_map(|e| match e.kind {
            EventKind::Pulse { angle_deg, phase_deg } => Some((e.start, angle_deg, phase_deg)),
            _ => None,
        })
    }

    pub fn acquisitions(&self) -> impl Iterator<Item = &PulseEvent> + '_ {
        self.events.iter().filter(|e| matches!(e.kind, EventKind::Acquire { .. }))
    }

    /// Sampling instants of every acquisition, in order.
    pub fn sample_times(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for e in self.acquisitions() {
            if let EventKind::Acquire { duration, dwell } = e.kind {
                let n = acquisition_samples(duration, dwell);
                out.extend((0..n).map(|k| e.start + k as f64 * dwell));
            }
        }
        out
    }

    /// Canonical text form; parsing it yields the same timeline.
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            match e.kind {
                EventKind::Pulse { angle_deg, phase_deg } => {
                    let _ = write!(out, "p({}, {}) ", fmt_number(angle_deg), format_phase(phase_deg));
                }
                EventKind::Delay { duration } => {
                    let _ = write!(out, "d({}) ", format_duration(duration));
                }
                EventKind::Acquire { duration, dwell } => {
                    let _ = writeln!(out, "acq({}, {})", format_duration(duration), format_duration(dwell));
                }
            }
        }
        out.trim_end().to_string() + "\n"
    }

    /// Copy with the phase of the `index`-th pulse (0-based) advanced by
    /// `delta_deg`.
    pub fn with_pulse_phase_shift(&self, index: usize, delta_deg: f64) -> Result<PulseProgram, Error> {
        let mut out = self.clone();
        let ev = out
            .events
            .iter_mut()
            .filter(|e| matches!(e.kind, EventKind::Pulse { .. }))
            .nth(index)
            .ok_or_else(|| Error::Validation(format!("program has no pulse number {}", index + 1)))?;
        if let EventKind::Pulse { phase_deg, .. } = &mut ev.kind {
            *phase_deg = (*phase_deg + delta_deg).rem_euclid(360.0);
        }
        out.source = None;
        Ok(out)
    }

    /// True when both programs describe the same timeline, ignoring metadata.
    pub fn same_timeline(&self, other: &PulseProgram) -> bool {
        self.events == other.events && self.total_duration == other.total_duration
    }
}

fn fmt_number(v: f64) -> String {
    format!("{v:?}")
}

pub fn format_phase(deg: f64) -> String {
    match deg {
        0.0 => "x".into(),
        90.0 => "y".into(),
        180.0 => "-x".into(),
        270.0 => "-y".into(),
        d => fmt_number(d),
    }
}

fn validate_kind(kind: &EventKind) -> Result<(), Error> {
    match *kind {
        EventKind::Pulse { angle_deg, phase_deg } => {
            if !angle_deg.is_finite() || !phase_deg.is_finite() {
                return Err(Error::Validation("pulse angle and phase must be finite".into()));
            }
        }
        EventKind::Delay { duration } => {
            if !(duration >= 0.0 && duration.is_finite()) {
                return Err(Error::Validation(format!("negative or non-finite delay {duration:e} s")));
            }
        }
        EventKind::Acquire { duration, dwell } => {
            if !(duration >= 0.0 && duration.is_finite()) {
                return Err(Error::Validation(format!("negative or non-finite acquisition {duration:e} s")));
            }
            if !(dwell >= 0.0 && dwell.is_finite()) || (duration > 0.0 && dwell == 0.0) {
                return Err(Error::Validation(format!("acquisition dwell {dwell:e} s must be positive")));
            }
        }
    }
    Ok(())
}

/// Accumulates events, merging consecutive delays.
#[derive(Debug, Default)]
pub struct TimelineBuilder {
    kinds: Vec<EventKind>,
    pending_delay: f64,
}

impl TimelineBuilder {
    pub fn delay(&mut self, d: f64) -> &mut Self {
        self.pending_delay += d;
        self
    }

    fn flush(&mut self) {
        if self.pending_delay != 0.0 {
            self.kinds.push(EventKind::Delay { duration: self.pending_delay });
            self.pending_delay = 0.0;
        }
    }

    pub fn pulse(&mut self, angle_deg: f64, phase_deg: f64) -> &mut Self {
        self.flush();
        self.kinds.push(EventKind::pulse(angle_deg, phase_deg));
        self
    }

    pub fn acquire(&mut self, duration: f64, dwell: f64) -> &mut Self {
        self.flush();
        self.kinds.push(EventKind::Acquire { duration, dwell });
        self
    }

    pub fn build(mut self) -> Result<PulseProgram, Error> {
        self.flush();
        PulseProgram::compile(self.kinds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_counts() {
        assert_eq!(acquisition_samples(0.0, 0.0), 1);
        assert_eq!(acquisition_samples(10e-6, 1e-6), 11);
        assert_eq!(acquisition_samples(2e-3, 10e-6), 201);
    }

    #[test]
    fn rejects_negative_delay() {
        let err = PulseProgram::compile([EventKind::pulse(90.0, 0.0), EventKind::Delay { duration: -1e-3 }]);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn builder_merges_delays() {
        let mut b = TimelineBuilder::default();
        b.pulse(90.0, 0.0).delay(1e-3).delay(1e-3).acquire(0.0, 0.0);
        let p = b.build().unwrap();
        assert_eq!(p.events.len(), 3);
        assert_eq!(p.events[2].start, 2e-3);
    }
}
