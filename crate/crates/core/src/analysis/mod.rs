//! Figures of merit extracted from simulated signals.

mod echoes;
mod fit;
mod quadratic;

pub use echoes::{measure_t2star, ste_he_ratio, ste_he_ratio_resolved, SteHeRatio, T2Star};
pub use fit::{
    fit_double_exponential, fit_single_exponential, measure_t2he, ExpFit, FitResult, TailStatus, T2HeFit,
    NOISE_FLOOR_FACTOR, TAIL_MIN_RATIO,
};
pub use quadratic::{fit_quadratic_gradient, QuadraticFit};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoEntry {
    /// 1-based echo number.
    pub index: usize,
    /// Echo-top time from the excitation pulse (s).
    pub t: f64,
    pub amplitude: Complex64,
}

/// Echo-top amplitudes of a train, in time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoTrain {
    pub entries: Vec<EchoEntry>,
    pub tau: f64,
    pub sequence: String,
}

impl EchoTrain {
    pub fn times(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.t).collect()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.amplitude.norm()).collect()
    }

    /// Train with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: Complex64) -> EchoTrain {
        let mut out = self.clone();
        for e in &mut out.entries {
            e.amplitude *= factor;
        }
        out
    }

    /// Build a train from real magnitudes, e.g. loaded from a CSV file.
    pub fn from_magnitudes(times: &[f64], amplitudes: &[f64], tau: f64, sequence: &str) -> EchoTrain {
        EchoTrain {
            entries: times
                .iter()
                .zip(amplitudes)
                .enumerate()
                .map(|(i, (&t, &a))| EchoEntry { index: i + 1, t, amplitude: Complex64::new(a, 0.0) })
                .collect(),
            tau,
            sequence: sequence.to_string(),
        }
    }
}

/// Effective dipolar strength `d²·τ` under rapid refocusing (rad/s).
pub fn effective_dipolar(d: f64, tau: f64) -> f64 {
    d * d * tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn effective_dipolar_arithmetic() {
        let d = 2.0 * PI * 100.0;
        assert!((effective_dipolar(d, 200e-6) - 78.956_835_208_714_86).abs() < 1e-9);
        assert_eq!(effective_dipolar(0.0, 1e-3), 0.0);
        assert_eq!(effective_dipolar(d, 400e-6), 2.0 * effective_dipolar(d, 200e-6));
    }
}
