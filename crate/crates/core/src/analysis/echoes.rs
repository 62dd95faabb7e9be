use serde::{Deserialize, Serialize};

use crate::bloch::{SignalTrace, ThreePulsePathways};
use crate::Error;

/// Stimulated versus Hahn echo of a three-pulse experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteHeRatio {
    pub ste_amp: f64,
    pub he_amp: f64,
    pub ratio: f64,
    /// Absolute times of the two echo centers.
    pub ste_time: f64,
    pub he_time: f64,
    /// `arg(STE · conj(HE))` in radians.
    pub relative_phase: f64,
    /// +1 when the echoes are in phase, -1 when inverted.
    pub phase_sign: i8,
}

fn peak_in_window(trace: &SignalTrace, center: f64, width: f64) -> Option<num_complex::Complex64> {
    let half = 0.5 * width * (1.0 + 1e-9);
    trace
        .samples
        .iter()
        .filter(|s| (s.t - center).abs() <= half)
        .max_by(|a, b| a.s.norm().total_cmp(&b.s.norm()))
        .map(|s| s.s)
}

/// Locate the stimulated echo at `τ` and the Hahn echo at `t1 − τ` after
/// the last pulse of `(π/2) − τ − β − t1 − β` and compare their peak
/// magnitudes within windows of `window` seconds.
pub fn ste_he_ratio(trace: &SignalTrace, tau: f64, t1: f64, window: f64) -> Result<SteHeRatio, Error> {
    ratio_between(trace, trace, tau, t1, window)
}

/// As [`ste_he_ratio`], reading each echo from its own phase-cycled
/// pathway signal so that neither leaks into the other's window.
pub fn ste_he_ratio_resolved(pathways: &ThreePulsePathways, tau: f64, t1: f64, window: f64) -> Result<SteHeRatio, Error> {
    ratio_between(&pathways.stimulated, &pathways.hahn, tau, t1, window)
}

fn ratio_between(ste_trace: &SignalTrace, he_trace: &SignalTrace, tau: f64, t1: f64, window: f64) -> Result<SteHeRatio, Error> {
    let separation = (t1 - 2.0 * tau).abs();
    if separation < window {
        return Err(Error::EchoWindowsOverlap { separation, window });
    }
    let last_pulse = tau + t1;
    let ste_time = last_pulse + tau;
    let he_time = last_pulse + (t1 - tau);
    let ste = peak_in_window(ste_trace, ste_time, window)
        .ok_or_else(|| Error::InsufficientData(format!("no samples near the stimulated echo at {ste_time:e} s")))?;
    let he = peak_in_window(he_trace, he_time, window)
        .ok_or_else(|| Error::InsufficientData(format!("no samples near the Hahn echo at {he_time:e} s")))?;
    let (ste_amp, he_amp) = (ste.norm(), he.norm());
    let product = ste * he.conj();
    Ok(SteHeRatio {
        ste_amp,
        he_amp,
        ratio: if he_amp > 0.0 { ste_amp / he_amp } else { f64::INFINITY },
        ste_time,
        he_time,
        relative_phase: product.arg(),
        phase_sign: if product.re >= 0.0 { 1 } else { -1 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T2Star {
    /// Time for `|s|` to fall to `1/e` of its first sample.
    pub t2star: f64,
    /// `|s|` rose somewhere before the crossing.
    pub non_monotone: bool,
}

/// Emergent T2* of a free induction decay by linear interpolation of the
/// `1/e` crossing.
pub fn measure_t2star(trace: &SignalTrace) -> Result<T2Star, Error> {
    let first = trace.samples.first().ok_or_else(|| Error::InsufficientData("empty trace".into()))?;
    let threshold = first.s.norm() / std::f64::consts::E;
    let mut non_monotone = false;
    for w in trace.samples.windows(2) {
        let (a, b) = (w[0].s.norm(), w[1].s.norm());
        if b > a * (1.0 + 1e-9) {
            non_monotone = true;
        }
        if b <= threshold {
            let frac = if a > b { (a - threshold) / (a - b) } else { 1.0 };
            let t = w[0].t + frac * (w[1].t - w[0].t);
            return Ok(T2Star { t2star: t - first.t, non_monotone });
        }
    }
    Err(Error::InsufficientData("signal never decays to 1/e".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::SignalSample;
    use num_complex::Complex64;

    fn trace(f: impl Fn(f64) -> Complex64, n: usize, dt: f64) -> SignalTrace {
        SignalTrace { samples: (0..n).map(|k| SignalSample { t: k as f64 * dt, s: f(k as f64 * dt) }).collect() }
    }

    #[test]
    fn t2star_of_pure_exponential() {
        let tr = trace(|t| Complex64::new(0.0, -(-t / 2e-3).exp()), 3000, 1e-6);
        let m = measure_t2star(&tr).unwrap();
        assert!((m.t2star - 2e-3).abs() < 1e-9);
        assert!(!m.non_monotone);
    }

    #[test]
    fn t2star_requires_decay() {
        let tr = trace(|_| Complex64::new(1.0, 0.0), 10, 1e-3);
        assert!(measure_t2star(&tr).is_err());
    }

    fn two_echo_trace(tau: f64, t1: f64, ste: Complex64, he: Complex64) -> SignalTrace {
        let last = tau + t1;
        SignalTrace {
            samples: vec![SignalSample { t: last + tau, s: ste }, SignalSample { t: last + t1 - tau, s: he }],
        }
    }

    #[test]
    fn ratio_and_phase() {
        let tr = two_echo_trace(1e-3, 15e-3, Complex64::new(0.0, 0.1), Complex64::new(0.0, -0.5));
        let r = ste_he_ratio(&tr, 1e-3, 15e-3, 1e-3).unwrap();
        assert!((r.ratio - 0.2).abs() < 1e-15);
        assert_eq!(r.phase_sign, -1);
        let rotated = SignalTrace {
            samples: tr.samples.iter().map(|s| SignalSample { t: s.t, s: s.s * Complex64::from_polar(1.0, 0.7) }).collect(),
        };
        let q = ste_he_ratio(&rotated, 1e-3, 15e-3, 1e-3).unwrap();
        assert!((q.ratio - r.ratio).abs() < 1e-15);
        assert_eq!(q.phase_sign, r.phase_sign);
    }

    #[test]
    fn overlapping_windows() {
        let tr = two_echo_trace(1e-3, 2e-3, Complex64::new(0.0, 0.1), Complex64::new(0.0, -0.5));
        assert!(matches!(ste_he_ratio(&tr, 1e-3, 2e-3, 1e-4), Err(Error::EchoWindowsOverlap { .. })));
    }
}
