//! The standard echo experiments as compiled programs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::program::{PulseProgram, TimelineBuilder};
use crate::Error;

const X: f64 = 0.0;
const Y: f64 = 90.0;
const MINUS_X: f64 = 180.0;
const MINUS_Y: f64 = 270.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Builtin {
    /// `(π/2)x − τ − πx − τ − echo`
    #[serde(rename = "HE")]
    He,
    /// `(π/2)x − τ − (π/2)y − t1 − (π/2)y − acq`
    #[serde(rename = "STE")]
    Ste,
    Cp1,
    Cp2,
    Cpmg1,
    Cpmg2,
    Cpmg4,
    /// `(π/2)x − τ − πy − t1 − πy − acq`
    #[serde(rename = "STE_CPMG1")]
    SteCpmg1,
    /// `(π/2)x − τ − πy − t1 − π−y − acq`
    #[serde(rename = "STE_CPMG2")]
    SteCpmg2,
}

impl Builtin {
    pub const ALL: [Builtin; 9] = [
        Builtin::He,
        Builtin::Ste,
        Builtin::Cp1,
        Builtin::Cp2,
        Builtin::Cpmg1,
        Builtin::Cpmg2,
        Builtin::Cpmg4,
        Builtin::SteCpmg1,
        Builtin::SteCpmg2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Builtin::He => "HE",
            Builtin::Ste => "STE",
            Builtin::Cp1 => "CP1",
            Builtin::Cp2 => "CP2",
            Builtin::Cpmg1 => "CPMG1",
            Builtin::Cpmg2 => "CPMG2",
            Builtin::Cpmg4 => "CPMG4",
            Builtin::SteCpmg1 => "STE_CPMG1",
            Builtin::SteCpmg2 => "STE_CPMG2",
        }
    }

    /// Refocusing-pulse phases of one cycle for the π-pulse trains.
    pub fn train_phases(&self) -> Option<&'static [f64]> {
        match self {
            Builtin::Cp1 => Some(&[X]),
            Builtin::Cp2 => Some(&[X, MINUS_X]),
            Builtin::Cpmg1 => Some(&[Y]),
            Builtin::Cpmg2 => Some(&[Y, MINUS_Y]),
            Builtin::Cpmg4 => Some(&[Y, Y, MINUS_Y, MINUS_Y]),
            _ => None,
        }
    }

    pub fn is_stimulated(&self) -> bool {
        matches!(self, Builtin::Ste | Builtin::SteCpmg1 | Builtin::SteCpmg2)
    }

    pub fn program(&self, params: &BuiltinParams) -> Result<PulseProgram, Error> {
        builtin(*self, params)
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let key = s.trim().to_ascii_uppercase().replace('-', "_");
        Builtin::ALL
            .into_iter()
            .find(|b| b.name() == key)
            .ok_or_else(|| Error::UnknownBuiltin(s.to_string()))
    }
}

/// Acquisition window centered on each echo top.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcqWindow {
    pub width: f64,
    pub dwell: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuiltinParams {
    pub tau: f64,
    /// Storage delay of the stimulated-echo family.
    #[serde(default)]
    pub t1: f64,
    /// Number of phase cycles in a train.
    pub n: usize,
    /// Full windows instead of one sample per echo top.
    #[serde(default)]
    pub window: Option<AcqWindow>,
}

impl BuiltinParams {
    pub fn train(tau: f64, n: usize) -> Self {
        Self { tau, t1: 0.0, n, window: None }
    }

    pub fn stimulated(tau: f64, t1: f64) -> Self {
        Self { tau, t1, n: 1, window: None }
    }

    pub fn with_window(mut self, width: f64, dwell: f64) -> Self {
        self.window = Some(AcqWindow { width, dwell });
        self
    }
}

/// Compile one of the standard sequences. Echo tops of the trains fall at
/// `2τ·k` after the excitation pulse; the stimulated-echo family acquires at
/// `τ` (stimulated echo) and `t1 − τ` (Hahn echo) after the last pulse.
pub fn builtin(which: Builtin, params: &BuiltinParams) -> Result<PulseProgram, Error> {
    let BuiltinParams { tau, t1, n, window } = *params;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Validation(format!("tau must be positive, got {tau:e}")));
    }
    if n == 0 {
        return Err(Error::Validation("cycle count n must be at least 1".into()));
    }
    if which.is_stimulated() && !(t1 >= 0.0 && t1.is_finite()) {
        return Err(Error::Validation(format!("t1 must be non-negative, got {t1:e}")));
    }
    let (width, dwell) = match window {
        Some(w) => {
            if !(w.width >= 0.0 && w.dwell > 0.0) {
                return Err(Error::Validation("acquisition window needs width >= 0 and dwell > 0".into()));
            }
            (w.width, w.dwell)
        }
        None => (0.0, 0.0),
    };
    let half = 0.5 * width;
    let mut b = TimelineBuilder::default();
    b.pulse(90.0, X);

    let cycle_length;
    match which {
        Builtin::He => {
            if half > tau {
                return Err(Error::Validation("acquisition window wider than 2τ".into()));
            }
            b.delay(tau).pulse(180.0, X).delay(tau - half).acquire(width, dwell);
            cycle_length = 1;
        }
        Builtin::Ste | Builtin::SteCpmg1 | Builtin::SteCpmg2 => {
            let (angle, second, third) = match which {
                Builtin::Ste => (90.0, Y, Y),
                Builtin::SteCpmg1 => (180.0, Y, Y),
                _ => (180.0, Y, MINUS_Y),
            };
            b.delay(tau).pulse(angle, second).delay(t1).pulse(angle, third);
            // Echo tops after the last pulse, in time order.
            let mut tops = vec![tau];
            let he = t1 - tau;
            if he > 0.0 && he != tau {
                tops.push(he);
            }
            tops.sort_by(f64::total_cmp);
            let mut now = 0.0;
            for top in tops {
                let start = top - half;
                if start < now {
                    return Err(Error::Validation("acquisition windows overlap".into()));
                }
                b.delay(start - now).acquire(width, dwell);
                now = top + half;
            }
            cycle_length = 1;
        }
        _ => {
            let phases = which.train_phases().expect("train");
            if half > tau {
                return Err(Error::Validation("acquisition window wider than 2τ".into()));
            }
            let mut carry = 0.0;
            for _ in 0..n {
                for &phase in phases {
                    b.delay(tau - carry).pulse(180.0, phase).delay(tau - half).acquire(width, dwell);
                    carry = half;
                }
            }
            cycle_length = phases.len();
        }
    }
    let mut program = b.build()?;
    program.builtin = Some(which.name().to_string());
    program.tau = Some(tau);
    program.cycle_length = cycle_length;
    Ok(program)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqlang::{parse_program, EventKind};

    #[test]
    fn cpmg4_phase_pattern() {
        let p = builtin(Builtin::Cpmg4, &BuiltinParams::train(1e-3, 2)).unwrap();
        let phases: Vec<f64> = p.pulses().skip(1).map(|(_, _, ph)| ph).collect();
        assert_eq!(phases, vec![Y, Y, MINUS_Y, MINUS_Y, Y, Y, MINUS_Y, MINUS_Y]);
        assert!(p.pulses().skip(1).all(|(_, a, _)| a == 180.0));
    }

    #[test]
    fn ste_pulse_times() {
        let p = builtin(Builtin::Ste, &BuiltinParams::stimulated(0.5e-3, 8e-3)).unwrap();
        let pulses: Vec<_> = p.pulses().collect();
        assert_eq!(pulses.len(), 3);
        assert_eq!(pulses[0], (0.0, 90.0, X));
        assert_eq!(pulses[1], (0.5e-3, 90.0, Y));
        assert!((pulses[2].0 - 8.5e-3).abs() < 1e-15);
        assert_eq!(pulses[2].2, Y);
        let acq: Vec<f64> = p.sample_times();
        assert!((acq[0] - 9.0e-3).abs() < 1e-15);
        assert!((acq[1] - 16.0e-3).abs() < 1e-15);
    }

    #[test]
    fn hahn_echo_layout() {
        let p = builtin(Builtin::He, &BuiltinParams::train(1e-3, 1)).unwrap();
        let kinds: Vec<EventKind> = p.events.iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            vec![
                EventKind::pulse(90.0, X),
                EventKind::Delay { duration: 1e-3 },
                EventKind::pulse(180.0, X),
                EventKind::Delay { duration: 1e-3 },
                EventKind::Acquire { duration: 0.0, dwell: 0.0 },
            ]
        );
    }

    #[test]
    fn train_echo_tops_and_spacing() {
        for b in [Builtin::Cp1, Builtin::Cp2, Builtin::Cpmg1, Builtin::Cpmg2, Builtin::Cpmg4] {
            let tau = 2e-4;
            for params in [BuiltinParams::train(tau, 3), BuiltinParams::train(tau, 3).with_window(40e-6, 10e-6)] {
                let p = builtin(b, &params).unwrap();
                let pis: Vec<f64> = p.pulses().skip(1).map(|(t, _, _)| t).collect();
                for w in pis.windows(2) {
                    assert!((w[1] - w[0] - 2.0 * tau).abs() < 1e-15, "{b}");
                }
                for (k, acq) in p.acquisitions().enumerate() {
                    let center = acq.start + 0.5 * acq.duration();
                    assert!((center - 2.0 * tau * (k + 1) as f64).abs() < 1e-15, "{b}");
                }
            }
        }
    }

    #[test]
    fn cpmg2_alternates_strictly() {
        let p = builtin(Builtin::Cpmg2, &BuiltinParams::train(1e-4, 5)).unwrap();
        let phases: Vec<f64> = p.pulses().skip(1).map(|(_, _, ph)| ph).collect();
        assert_eq!(phases.len(), 10);
        assert!(phases.windows(2).all(|w| w[0] != w[1]));
    }

    #[test]
    fn names_round_trip() {
        for b in Builtin::ALL {
            assert_eq!(b.name().parse::<Builtin>().unwrap(), b);
        }
        assert_eq!("cpmg1".parse::<Builtin>().unwrap(), Builtin::Cpmg1);
        assert!(matches!("MLEV16".parse::<Builtin>(), Err(Error::UnknownBuiltin(_))));
    }

    #[test]
    fn canonical_text_reparses_to_same_timeline() {
        for b in Builtin::ALL {
            for params in [
                BuiltinParams { tau: 3e-4, t1: 7e-3, n: 3, window: None },
                BuiltinParams { tau: 1e-3, t1: 15e-3, n: 2, window: Some(AcqWindow { width: 2e-4, dwell: 1e-5 }) },
            ] {
                let p = builtin(b, &params).unwrap();
                let q = parse_program(&p.to_source()).unwrap();
                assert!(p.same_timeline(&q), "{b}\n{}", p.to_source());
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(builtin(Builtin::Cpmg1, &BuiltinParams::train(0.0, 1)).is_err());
        assert!(builtin(Builtin::Cpmg1, &BuiltinParams::train(1e-3, 0)).is_err());
        assert!(builtin(Builtin::Ste, &BuiltinParams::stimulated(1e-3, -1.0)).is_err());
    }
}
