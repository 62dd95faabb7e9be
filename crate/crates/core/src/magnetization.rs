//! Bloch-vector primitives: hard-pulse rotations and free precession with
//! phenomenological relaxation.
//!
//! Rotations are right-handed about the pulse axis, so a `(π/2)_x` pulse
//! takes equilibrium `(0, 0, 1)` to `(0, -1, 0)`. Free precession rotates the
//! transverse vector counter-clockwise: `mx + i·my` is multiplied by
//! `exp(i·ω·t)`. Together these reproduce the sign structure of the
//! single-spin density-matrix evolution under `H = δω·Iz` with
//! `U = exp(-iθ I_φ)` pulses.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Magnetization normalized to the thermal-equilibrium magnitude `M0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Magnetization {
    pub mx: f64,
    pub my: f64,
    pub mz: f64,
}

impl Default for Magnetization {
    fn default() -> Self {
        Self::EQUILIBRIUM
    }
}

impl Magnetization {
    pub const EQUILIBRIUM: Magnetization = Magnetization { mx: 0.0, my: 0.0, mz: 1.0 };
    pub const ZERO: Magnetization = Magnetization { mx: 0.0, my: 0.0, mz: 0.0 };

    pub const fn new(mx: f64, my: f64, mz: f64) -> Self {
        Self { mx, my, mz }
    }

    pub fn norm(&self) -> f64 {
        (self.mx * self.mx + self.my * self.my + self.mz * self.mz).sqrt()
    }

    /// Transverse magnetization as `mx + i·my`.
    pub fn transverse(&self) -> Complex64 {
        Complex64::new(self.mx, self.my)
    }

    /// Rotate about the in-plane axis `(cos φ, sin φ, 0)` by `angle` (delta pulse).
    pub fn rotate(self, phase: f64, angle: f64) -> Self {
        rotate(self, phase, angle)
    }

    pub fn free_evolve(self, omega: f64, t: f64, relaxation: Relaxation) -> Self {
        free_evolve(self, omega, t, relaxation)
    }
}

/// Longitudinal and transverse relaxation times in seconds; `None` is infinite.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Relaxation {
    pub t1: Option<f64>,
    pub t2: Option<f64>,
}

impl Relaxation {
    pub const NONE: Relaxation = Relaxation { t1: None, t2: None };

    pub fn new(t1: Option<f64>, t2: Option<f64>) -> Self {
        Self { t1, t2 }
    }

    /// Decay factors `(E1, E2)` over an interval `t`.
    pub fn factors(&self, t: f64) -> (f64, f64) {
        let e = |tc: Option<f64>| match tc {
            Some(tc) => (-t / tc).exp(),
            None => 1.0,
        };
        (e(self.t1), e(self.t2))
    }
}

/// Precomputed 3×3 rotation for a hard pulse, reused across isochromats that
/// share a flip angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    m: [[f64; 3]; 3],
}

impl Rotation {
    /// Rodrigues rotation about `(cos φ, sin φ, 0)`.
    pub fn about_transverse_axis(phase: f64, angle: f64) -> Self {
        let (s_phi, c_phi) = phase.sin_cos();
        let (s, c) = angle.sin_cos();
        let (ux, uy) = (c_phi, s_phi);
        let one_c = 1.0 - c;
        Self {
            m: [
                [c + ux * ux * one_c, ux * uy * one_c, uy * s],
                [ux * uy * one_c, c + uy * uy * one_c, -ux * s],
                [-uy * s, ux * s, c],
            ],
        }
    }

    #[inline]
    pub fn apply(&self, m: Magnetization) -> Magnetization {
        let r = &self.m;
        Magnetization {
            mx: r[0][0] * m.mx + r[0][1] * m.my + r[0][2] * m.mz,
            my: r[1][0] * m.mx + r[1][1] * m.my + r[1][2] * m.mz,
            mz: r[2][0] * m.mx + r[2][1] * m.my + r[2][2] * m.mz,
        }
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }
}

/// Hard-pulse rotation of `m` by `angle` about the transverse axis at `phase`.
pub fn rotate(m: Magnetization, phase: f64, angle: f64) -> Magnetization {
    Rotation::about_transverse_axis(phase, angle).apply(m)
}

/// Free precession at `omega` (rad/s) for `t` seconds with relaxation.
///
/// `mz` recovers toward 1 as `1 + (mz - 1)·E1`; the transverse part is
/// multiplied by `E2·exp(i·ω·t)`.
pub fn free_evolve(m: Magnetization, omega: f64, t: f64, relaxation: Relaxation) -> Magnetization {
    let (e1, e2) = relaxation.factors(t);
    let (s, c) = (omega * t).sin_cos();
    Magnetization {
        mx: e2 * (c * m.mx - s * m.my),
        my: e2 * (s * m.mx + c * m.my),
        mz: 1.0 + (m.mz - 1.0) * e1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, FRAC_PI_2, PI};

    fn close(a: Magnetization, b: Magnetization, tol: f64) -> bool {
        (a.mx - b.mx).abs() < tol && (a.my - b.my).abs() < tol && (a.mz - b.mz).abs() < tol
    }

    // Independent oracle: R = exp(angle·[u]×) via the matrix series, checked
    // against the closed-form Rodrigues matrix.
    fn rotation_by_series(phase: f64, angle: f64) -> [[f64; 3]; 3] {
        let (ux, uy, uz) = (phase.cos(), phase.sin(), 0.0);
        let k = [[0.0, -uz, uy], [uz, 0.0, -ux], [-uy, ux, 0.0]];
        let mut out = [[0.0; 3]; 3];
        let mut term = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for n in 1..60 {
            for i in 0..3 {
                for j in 0..3 {
                    out[i][j] += term[i][j];
                }
            }
            let mut next = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    for l in 0..3 {
                        next[i][j] += term[i][l] * k[l][j] * angle / n as f64;
                    }
                }
            }
            term = next;
        }
        out
    }

    #[test]
    fn rotation_matches_matrix_exponential() {
        for &(phase, angle) in &[(0.0, FRAC_PI_2), (FRAC_PI_2, PI), (0.3, 2.1), (4.0, -1.3)] {
            let a = Rotation::about_transverse_axis(phase, angle).matrix();
            let b = rotation_by_series(phase, angle);
            for i in 0..3 {
                for j in 0..3 {
                    assert!((a[i][j] - b[i][j]).abs() < 1e-13, "{phase} {angle}");
                }
            }
        }
    }

    #[test]
    fn x_quarter_turn_takes_z_to_minus_y() {
        let m = rotate(Magnetization::EQUILIBRIUM, 0.0, FRAC_PI_2);
        assert!(close(m, Magnetization::new(0.0, -1.0, 0.0), 1e-15));
    }

    #[test]
    fn x_inversion() {
        let m = rotate(Magnetization::EQUILIBRIUM, 0.0, PI);
        assert!(close(m, Magnetization::new(0.0, 0.0, -1.0), 1e-15));
    }

    #[test]
    fn y_pi_pulse_leaves_y_component() {
        // A rotation about y negates x and z; the y component is untouched.
        let m = rotate(Magnetization::new(0.0, -1.0, 0.0), FRAC_PI_2, PI);
        assert!(close(m, Magnetization::new(0.0, -1.0, 0.0), 1e-15));
        // The same result from two quarter turns.
        let q = rotate(rotate(Magnetization::new(0.0, -1.0, 0.0), FRAC_PI_2, FRAC_PI_2), FRAC_PI_2, FRAC_PI_2);
        assert!(close(q, m, 1e-15));
        let x = rotate(Magnetization::new(1.0, 0.0, 0.0), FRAC_PI_2, PI);
        assert!(close(x, Magnetization::new(-1.0, 0.0, 0.0), 1e-15));
    }

    #[test]
    fn precession_handedness() {
        let m = free_evolve(Magnetization::new(1.0, 0.0, 0.0), FRAC_PI_2, 1.0, Relaxation::NONE);
        assert!(close(m, Magnetization::new(0.0, 1.0, 0.0), 1e-15));
        // -Iy evolves to -(cos Iy - sin Ix)
        let phi: f64 = 0.7;
        let m = free_evolve(Magnetization::new(0.0, -1.0, 0.0), phi, 1.0, Relaxation::NONE);
        assert!(close(m, Magnetization::new(phi.sin(), -phi.cos(), 0.0), 1e-15));
    }

    #[test]
    fn pure_t2_decay() {
        let t2 = 1.8e-3;
        let m = free_evolve(Magnetization::new(0.0, -1.0, 0.0), 0.0, t2, Relaxation::new(None, Some(t2)));
        assert!(close(m, Magnetization::new(0.0, -1.0 / E, 0.0), 1e-15));
    }

    #[test]
    fn pure_t1_recovery_from_saturation() {
        let t1 = 0.2;
        let m = free_evolve(Magnetization::ZERO, 1234.0, t1, Relaxation::new(Some(t1), Some(0.01)));
        assert!(close(m, Magnetization::new(0.0, 0.0, 1.0 - 1.0 / E), 1e-15));
    }

    #[test]
    fn equilibrium_is_fixed_point_of_relaxation() {
        let m = free_evolve(Magnetization::EQUILIBRIUM, 5e3, 0.3, Relaxation::new(Some(0.2), Some(0.1)));
        assert_eq!(m, Magnetization::EQUILIBRIUM);
    }
}
