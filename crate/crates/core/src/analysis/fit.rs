//! Exponential decay fits by damped Gauss–Newton with analytic Jacobians.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EchoTrain;
use crate::Error;

/// A tail is reported when `A_l` exceeds this multiple of the residual RMS
/// of the tail-window single-exponential fit.
pub const NOISE_FLOOR_FACTOR: f64 = 5.0;

/// Smallest admissible `t_l / t_short`. Below it the two components are not
/// separable.
pub const TAIL_MIN_RATIO: f64 = 1.5;

/// Absolute floor relative to the largest amplitude, for noiseless data.
const NUMERICAL_FLOOR: f64 = 1e-9;

const MAX_ITERATIONS: usize = 500;

/// Consecutive accepted steps with negligible improvement that count as
/// convergence, typically while creeping along a bound.
const STALL_ITERATIONS: usize = 8;

/// Largest admissible `t_l` as a multiple of the last echo time. A tail that
/// is flat over the record is indistinguishable from one at this bound.
const MAX_TAIL_SPAN: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailStatus {
    Present,
    Absent,
}

/// `A·exp(-t/T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub amplitude: f64,
    pub time_constant: f64,
    pub residual_rms: f64,
}

/// Double-exponential decay `A_s·exp(-t/t_short) + A_l·exp(-t/t_l)` with
/// `t_short` held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub a_s: f64,
    pub a_l: f64,
    pub t_short: f64,
    pub t_l: f64,
    pub residual_rms: f64,
    /// Standard errors of `(A_s, A_l, t_l)` from the linearized covariance.
    pub std_errors: Option<[f64; 3]>,
    pub covariance: Option<[[f64; 3]; 3]>,
    pub iterations: usize,
    pub tail: TailStatus,
    pub noise_floor: f64,
    /// Single exponential fitted to the points with `t > 3·t_short` only.
    pub tail_only: Option<ExpFit>,
}

impl FitResult {
    /// `A_l / A_s`.
    pub fn tail_fraction(&self) -> f64 {
        if self.a_s > 0.0 {
            self.a_l / self.a_s
        } else {
            f64::INFINITY
        }
    }

    pub fn tail_percent(&self) -> f64 {
        100.0 * self.tail_fraction()
    }

    pub fn tail_present(&self) -> bool {
        self.tail == TailStatus::Present
    }

    pub fn model(&self, t: f64) -> f64 {
        self.a_s * (-t / self.t_short).exp() + self.a_l * (-t / self.t_l).exp()
    }
}

/// Minimize `Σ r²` with `r = model(p) - y`. `eval` fills residuals and the
/// Jacobian; `project` enforces bounds after every trial step.
fn gauss_newton(
    p0: Vec<f64>,
    m: usize,
    eval: impl Fn(&[f64], &mut DVector<f64>, &mut DMatrix<f64>),
    project: impl Fn(&mut [f64]),
) -> Result<(Vec<f64>, f64, DMatrix<f64>, usize), Error> {
    let np = p0.len();
    let mut p = p0;
    project(&mut p);
    let mut r = DVector::zeros(m);
    let mut jac = DMatrix::zeros(m, np);
    eval(&p, &mut r, &mut jac);
    let mut sse = r.norm_squared();
    if !sse.is_finite() {
        return Err(Error::FitDidNotConverge("non-finite initial residual".into()));
    }
    let mut lambda = 1e-12;
    let mut trial_r = DVector::zeros(m);
    let mut trial_j = DMatrix::zeros(m, np);
    let mut stalled = 0;
    for iter in 1..=MAX_ITERATIONS {
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut accepted = false;
        while lambda <= 1e12 {
            let mut a = jtj.clone();
            for i in 0..np {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let mut alpha = 1.0;
            for _ in 0..40 {
                let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(pi, si)| pi + alpha * si).collect();
                project(&mut trial);
                eval(&trial, &mut trial_r, &mut trial_j);
                let trial_sse = trial_r.norm_squared();
                if trial_sse.is_finite() && trial_sse < sse {
                    let rel = (sse - trial_sse) / sse.max(1e-300);
                    let moved = trial.iter().zip(&p).map(|(a, b)| (a - b).abs() / b.abs().max(1e-12)).fold(0.0, f64::max);
                    p = trial;
                    std::mem::swap(&mut r, &mut trial_r);
                    std::mem::swap(&mut jac, &mut trial_j);
                    sse = trial_sse;
                    accepted = true;
                    stalled = if rel < 1e-9 { stalled + 1 } else { 0 };
                    if rel < 1e-13 || moved < 1e-12 || sse < 1e-32 || stalled >= STALL_ITERATIONS {
                        return Ok((p, sse, jac, iter));
                    }
                    break;
                }
                alpha *= 0.5;
            }
            if accepted {
                lambda = (lambda / 10.0).max(1e-15);
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No descent direction left: at a (possibly constrained) minimum.
            return Ok((p, sse, jac, iter));
        }
    }
    Err(Error::FitDidNotConverge(format!("no convergence after {MAX_ITERATIONS} iterations")))
}

fn log_linear(t: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = t.iter().zip(y).filter(|(_, &y)| y > 0.0).map(|(&t, &y)| (t, y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mt))
}

/// Fit `A·exp(-t/T)` with both parameters free.
pub fn fit_single_exponential(t: &[f64], y: &[f64]) -> Result<ExpFit, Error> {
    if t.len() != y.len() || t.len() < 2 {
        return Err(Error::InsufficientData("single-exponential fit needs at least 2 points".into()));
    }
    let span = t[t.len() - 1] - t[0];
    let (amp0, tc0) = match log_linear(t, y) {
        Some((slope, icpt)) if slope < 0.0 => (icpt.exp(), -1.0 / slope),
        _ => (y.iter().cloned().fold(0.0, f64::max), span.max(1e-12) * 10.0),
    };
    let eval = |p: &[f64], r: &mut DVector<f64>, j: &mut DMatrix<f64>| {
        let tc = p[1].exp();
        for i in 0..t.len() {
            let e = (-t[i] / tc).exp();
            r[i] = p[0] * e - y[i];
            j[(i, 0)] = e;
            j[(i, 1)] = p[0] * e * t[i] / tc;
        }
    };
    let (p, sse, _, _) = gauss_newton(vec![amp0, tc0.ln()], t.len(), eval, |_| {})?;
    Ok(ExpFit { amplitude: p[0], time_constant: p[1].exp(), residual_rms: (sse / t.len() as f64).sqrt() })
}

/// Fit echo magnitudes to a short component with fixed `t_short_fixed` plus
/// a free long tail. `TailStatus::Absent` is reported when `A_l` is below
/// the noise floor.
pub fn fit_double_exponential(train: &EchoTrain, t_short_fixed: f64) -> Result<FitResult, Error> {
    let t = train.times();
    let y = train.magnitudes();
    fit_double_exponential_data(&t, &y, t_short_fixed)
}

pub(crate) fn fit_double_exponential_data(t: &[f64], y: &[f64], ts: f64) -> Result<FitResult, Error> {
    if t.len() < 6 {
        return Err(Error::InsufficientData(format!("double-exponential fit needs at least 6 echoes, got {}", t.len())));
    }
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(Error::InsufficientData("t_short must be positive".into()));
    }
    let m = t.len();
    let es: Vec<f64> = t.iter().map(|&t| (-t / ts).exp()).collect();
    let min_ln_tl = (TAIL_MIN_RATIO * ts).ln();
    let max_ln_tl = (MAX_TAIL_SPAN * t[m - 1].max(ts)).ln().max(min_ln_tl);

    // Amplitudes for a given tail time by two-column non-negative least squares.
    let amplitudes = |tl: f64| -> (f64, f64) {
        let el: Vec<f64> = t.iter().map(|&t| (-t / tl).exp()).collect();
        let (mut s11, mut s12, mut s22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..m {
            s11 += es[i] * es[i];
            s12 += es[i] * el[i];
            s22 += el[i] * el[i];
            b1 += es[i] * y[i];
            b2 += el[i] * y[i];
        }
        let det = s11 * s22 - s12 * s12;
        let (a, b) = if det.abs() > 1e-300 { ((s22 * b1 - s12 * b2) / det, (s11 * b2 - s12 * b1) / det) } else { (-1.0, -1.0) };
        if a >= 0.0 && b >= 0.0 {
            (a, b)
        } else if (b1 / s11).max(0.0) * b1 >= (b2 / s22).max(0.0) * b2 {
            ((b1 / s11).max(0.0), 0.0)
        } else {
            (0.0, (b2 / s22).max(0.0))
        }
    };

    // t_l guess from the log-slope of the last third.
    let third = m - m / 3;
    let tl_guess = match log_linear(&t[third..], &y[third..]) {
        Some((slope, _)) if slope < 0.0 => -1.0 / slope,
        _ => 10.0 * t[m - 1].max(ts),
    }
    .clamp(2.0 * ts, MAX_TAIL_SPAN * t[m - 1].max(ts));
    let (as0, al0) = amplitudes(tl_guess);
    let a_s_first = y[0] * (t[0] / ts).exp();
    let as_init = if as0 > 0.0 { as0 } else { a_s_first };

    let eval = |p: &[f64], r: &mut DVector<f64>, j: &mut DMatrix<f64>| {
        let tl = p[2].exp();
        for i in 0..m {
            let el = (-t[i] / tl).exp();
            r[i] = p[0] * es[i] + p[1] * el - y[i];
            j[(i, 0)] = es[i];
            j[(i, 1)] = el;
            j[(i, 2)] = p[1] * el * t[i] / tl;
        }
    };
    let project = |p: &mut [f64]| {
        p[0] = p[0].max(0.0);
        p[1] = p[1].max(0.0);
        p[2] = p[2].clamp(min_ln_tl, max_ln_tl);
    };
    let (p, sse, jac, iterations) = gauss_newton(vec![as_init, al0, tl_guess.ln()], m, eval, project)?;
    let (a_s, a_l, t_l) = (p[0], p[1], p[2].exp());
    if !(a_s.is_finite() && a_l.is_finite() && t_l.is_finite()) {
        return Err(Error::FitDidNotConverge("non-finite parameters".into()));
    }
    let residual_rms = (sse / m as f64).sqrt();

    // Covariance in (A_s, A_l, t_l): rescale the log-time column.
    let mut jt = jac.clone();
    for i in 0..m {
        jt[(i, 2)] /= t_l;
    }
    let dof = (m as f64 - 3.0).max(1.0);
    let (covariance, std_errors) = match (jt.transpose() * &jt).try_inverse() {
        Some(inv) if a_l > 0.0 => {
            let s2 = sse / dof;
            let mut c = [[0.0; 3]; 3];
            for i in 0..3 {
                for k in 0..3 {
                    c[i][k] = inv[(i, k)] * s2;
                }
            }
            let se = [c[0][0].max(0.0).sqrt(), c[1][1].max(0.0).sqrt(), c[2][2].max(0.0).sqrt()];
            (Some(c), Some(se))
        }
        _ => (None, None),
    };

    let tail_idx: Vec<usize> = (0..m).filter(|&i| t[i] > 3.0 * ts).collect();
    let tail_only = if tail_idx.len() >= 3 {
        let tt: Vec<f64> = tail_idx.iter().map(|&i| t[i]).collect();
        let yy: Vec<f64> = tail_idx.iter().map(|&i| y[i]).collect();
        fit_single_exponential(&tt, &yy).ok()
    } else {
        None
    };
    let scale = y.iter().cloned().fold(0.0, f64::max);
    let rms_for_floor = tail_only.map_or(residual_rms, |f| f.residual_rms);
    let noise_floor = NOISE_FLOOR_FACTOR * rms_for_floor + NUMERICAL_FLOOR * scale;
    let tail = if a_l > noise_floor { TailStatus::Present } else { TailStatus::Absent };

    Ok(FitResult {
        a_s,
        a_l,
        t_short: ts,
        t_l,
        residual_rms,
        std_errors,
        covariance,
        iterations,
        tail,
        noise_floor,
        tail_only,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T2HeFit {
    pub t2: f64,
    pub amplitude: f64,
    pub residual_rms: f64,
    /// The amplitudes were not monotone; the fit used their upper envelope.
    pub non_monotone: bool,
}

/// T2 from a Hahn-echo sweep of `(2τ, amplitude)` points.
pub fn measure_t2he(points: &[(f64, f64)]) -> Result<T2HeFit, Error> {
    if points.len() < 3 {
        return Err(Error::InsufficientData("Hahn-echo sweep needs at least 3 points".into()));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let t: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let mut y: Vec<f64> = pts.iter().map(|p| p.1.abs()).collect();
    let non_monotone = y.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-12));
    if non_monotone {
        for i in (0..y.len() - 1).rev() {
            y[i] = y[i].max(y[i + 1]);
        }
    }
    let f = fit_single_exponential(&t, &y)?;
    Ok(T2HeFit { t2: f.time_constant, amplitude: f.amplitude, residual_rms: f.residual_rms, non_monotone })
}
