//! Exact density-matrix dynamics of a few dipolar-coupled spins-1/2.
//!
//! The Hamiltonian between pulses is
//! `H = Σ δω_j Iz_j + Σ_{j<k} d_jk [2 Iz_j Iz_k − ½(I+_j I−_k + I−_j I+_k)]`,
//! the secular dipolar form. It is time-independent, so delays are applied
//! exactly through one cached eigendecomposition. Pulses are
//! `U = exp(−iθ Σ ε_j I_φ,j)`. No relaxation.
//!
//! Basis states are bit strings with spin 0 as the most significant bit;
//! bit value 0 is `|↑⟩` (`Iz = +½`).

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::{SignalSample, SignalTrace};
use crate::seqlang::{acquisition_samples, EventKind, PulseProgram};
use crate::Error;

pub const MAX_SPINS: usize = 10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinSystem {
    /// Resonance offsets δω_j (rad/s).
    pub offsets: Vec<f64>,
    /// Symmetric dipolar couplings d_jk (rad/s) with zero diagonal.
    pub couplings: Vec<Vec<f64>>,
    /// Per-spin flip-angle multipliers.
    pub b1_scale: Vec<f64>,
}

impl SpinSystem {
    pub fn new(offsets: Vec<f64>, couplings: Vec<Vec<f64>>) -> Result<Self, Error> {
        let n = offsets.len();
        Self::with_b1(offsets, couplings, vec![1.0; n])
    }

    pub fn with_b1(offsets: Vec<f64>, couplings: Vec<Vec<f64>>, b1_scale: Vec<f64>) -> Result<Self, Error> {
        let s = Self { offsets, couplings, b1_scale };
        s.validate()?;
        Ok(s)
    }

    /// Uncoupled spins.
    pub fn uncoupled(offsets: Vec<f64>) -> Result<Self, Error> {
        let n = offsets.len();
        Self::new(offsets, vec![vec![0.0; n]; n])
    }

    pub fn n(&self) -> usize {
        self.offsets.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.n()
    }

    pub fn validate(&self) -> Result<(), Error> {
        let n = self.n();
        if n > MAX_SPINS {
            return Err(Error::DimensionTooLarge { n, max: MAX_SPINS });
        }
        if n == 0 {
            return Err(Error::InvalidSpinSystem("at least one spin is required".into()));
        }
        if self.couplings.len() != n || self.couplings.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidSpinSystem(format!("couplings must be {n}×{n}")));
        }
        if self.b1_scale.len() != n || self.b1_scale.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidSpinSystem("b1_scale needs one positive entry per spin".into()));
        }
        for j in 0..n {
            if self.couplings[j][j] != 0.0 {
                return Err(Error::InvalidSpinSystem("couplings must have a zero diagonal".into()));
            }
            for k in 0..n {
                if self.couplings[j][k] != self.couplings[k][j] || !self.couplings[j][k].is_finite() {
                    return Err(Error::InvalidSpinSystem("couplings must be finite and symmetric".into()));
                }
            }
            if !self.offsets[j].is_finite() {
                return Err(Error::InvalidSpinSystem("offsets must be finite".into()));
            }
        }
        Ok(())
    }
}

#[inline]
fn iz(state: usize, spin: usize, n: usize) -> f64 {
    if state >> (n - 1 - spin) & 1 == 0 {
        0.5
    } else {
        -0.5
    }
}

/// Hamiltonian matrix in the product basis (real symmetric).
pub fn hamiltonian(system: &SpinSystem) -> DMatrix<f64> {
    let n = system.n();
    let dim = system.dim();
    let mut h = DMatrix::zeros(dim, dim);
    for s in 0..dim {
        let mut diag = 0.0;
        for j in 0..n {
            diag += system.offsets[j] * iz(s, j, n);
            for k in j + 1..n {
                let d = system.couplings[j][k];
                if d != 0.0 {
                    diag += 2.0 * d * iz(s, j, n) * iz(s, k, n);
                    let (bj, bk) = (1 << (n - 1 - j), 1 << (n - 1 - k));
                    // Flip-flop connects states with spins j and k antiparallel.
                    if (s & bj == 0) != (s & bk == 0) {
                        h[(s ^ bj ^ bk, s)] += -0.5 * d;
                    }
                }
            }
        }
        h[(s, s)] = diag;
    }
    h
}

/// Σ_j op_j embedded in the full space for a single-spin 2×2 operator.
fn collective(n: usize, op: [[Complex64; 2]; 2], weights: &[f64]) -> DMatrix<Complex64> {
    let dim = 1 << n;
    let mut m = DMatrix::from_element(dim, dim, ZERO);
    for (j, &w) in weights.iter().enumerate() {
        let bit = 1 << (n - 1 - j);
        for s in 0..dim {
            let local = usize::from(s & bit != 0);
            for out in 0..2 {
                let v = op[out][local];
                if v != ZERO {
                    let t = if out == local { s } else { s ^ bit };
                    m[(t, s)] += v * w;
                }
            }
        }
    }
    m
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Σ_j w_j Iz_j.
pub fn total_iz(n: usize, weights: &[f64]) -> DMatrix<Complex64> {
    collective(n, [[c(0.5, 0.0), ZERO], [ZERO, c(-0.5, 0.0)]], weights)
}

/// Σ_j I+_j.
pub fn total_iplus(n: usize) -> DMatrix<Complex64> {
    collective(n, [[ZERO, c(1.0, 0.0)], [ZERO, ZERO]], &vec![1.0; n])
}

/// Pulse propagator `⊗_j exp(−i θ ε_j (cos φ Ix + sin φ Iy))`.
pub fn pulse_propagator(n: usize, angle: f64, phase: f64, per_spin_scale: &[f64]) -> DMatrix<Complex64> {
    let mut u = DMatrix::from_element(1, 1, c(1.0, 0.0));
    for j in 0..n {
        let half = 0.5 * angle * per_spin_scale[j];
        let (s, co) = half.sin_cos();
        let e_minus = Complex64::from_polar(1.0, -phase);
        let e_plus = Complex64::from_polar(1.0, phase);
        // cos(α/2)·1 − i sin(α/2)·(n·σ)
        let single = DMatrix::from_row_slice(
            2,
            2,
            &[c(co, 0.0), c(0.0, -s) * e_minus, c(0.0, -s) * e_plus, c(co, 0.0)],
        );
        u = u.kronecker(&single);
    }
    u
}

/// Density matrix `ρ = 1/D + β·Δ` with trace one; only the deviation `Δ`
/// evolves nontrivially.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    pub rho: DMatrix<Complex64>,
    /// Scale of the deviation part; signals are normalized by it.
    pub beta: f64,
}

impl DensityState {
    /// High-temperature equilibrium `1/D + β Σ Iz_j`.
    pub fn thermal(n: usize) -> Self {
        Self::polarized(&vec![1.0; n])
    }

    /// `1/D + β Σ p_j Iz_j` with `|p_j| ≤ 1`.
    pub fn polarized(polarizations: &[f64]) -> Self {
        let n = polarizations.len();
        let dim = 1 << n;
        let beta = 1.0 / (n as f64 * dim as f64);
        let mut rho = total_iz(n, polarizations) * c(beta, 0.0);
        for i in 0..dim {
            rho[(i, i)] += 1.0 / dim as f64;
        }
        Self { rho, beta }
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    /// Largest deviation from hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        (&self.rho - self.rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.rho + self.rho.adjoint()) * c(0.5, 0.0);
        let mut ev: Vec<f64> = SymmetricEigen::new(herm).eigenvalues.iter().cloned().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn expectation(&self, op: &DMatrix<Complex64>) -> Complex64 {
        (&self.rho * op).trace()
    }
}

/// Normalized transverse signal `Tr[ρ Σ I+_j] / (β·n·D/4)`; a full
/// `(π/2)x` coherence gives `−i`.
pub fn signal(state: &DensityState, system: &SpinSystem) -> Complex64 {
    let n = system.n();
    state.expectation(&total_iplus(n)) / normalization(state.beta, n)
}

fn normalization(beta: f64, n: usize) -> f64 {
    beta * n as f64 * (1usize << n) as f64 / 4.0
}

/// Cached eigendecomposition `H = V Λ Vᵀ`.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub energies: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
}

impl Propagator {
    pub fn new(system: &SpinSystem) -> Result<Self, Error> {
        system.validate()?;
        let eig = SymmetricEigen::new(hamiltonian(system));
        Ok(Self { energies: eig.eigenvalues.iter().cloned().collect(), vectors: eig.eigenvectors.map(|v| c(v, 0.0)) })
    }

    fn to_eigen(&self, m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        self.vectors.adjoint() * m * &self.vectors
    }

    fn to_lab(&self, m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        &self.vectors * m * self.vectors.adjoint()
    }

    fn phase_in_eigenbasis(&self, m: &mut DMatrix<Complex64>, t: f64) {
        let phases: Vec<Complex64> = self.energies.iter().map(|&e| Complex64::from_polar(1.0, -e * t)).collect();
        let dim = self.energies.len();
        for b in 0..dim {
            let pb = phases[b].conj();
            for a in 0..dim {
                m[(a, b)] *= phases[a] * pb;
            }
        }
    }
}

/// Free evolution for `t` seconds: `ρ → e^{−iHt} ρ e^{iHt}`.
pub fn evolve(state: &DensityState, system: &SpinSystem, t: f64) -> Result<DensityState, Error> {
    let prop = Propagator::new(system)?;
    Ok(evolve_with(&prop, state, t))
}

pub fn evolve_with(prop: &Propagator, state: &DensityState, t: f64) -> DensityState {
    let mut e = prop.to_eigen(&state.rho);
    prop.phase_in_eigenbasis(&mut e, t);
    DensityState { rho: prop.to_lab(&e), beta: state.beta }
}

/// Hard pulse `ρ → U ρ U†`.
pub fn pulse(state: &DensityState, angle: f64, phase: f64, per_spin_scale: &[f64]) -> DensityState {
    let n = per_spin_scale.len();
    let u = pulse_propagator(n, angle, phase, per_spin_scale);
    DensityState { rho: &u * &state.rho * u.adjoint(), beta: state.beta }
}

/// Run a compiled program exactly, sampling the normalized signal at every
/// acquisition instant.
pub fn run_program_exact(program: &PulseProgram, system: &SpinSystem, initial: &DensityState) -> Result<SignalTrace, Error> {
    let n = system.n();
    if initial.rho.nrows() != system.dim() {
        return Err(Error::InvalidSpinSystem(format!(
            "initial state has dimension {}, system needs {}",
            initial.rho.nrows(),
            system.dim()
        )));
    }
    let prop = Propagator::new(system)?;
    let observable = prop.to_eigen(&total_iplus(n));
    let norm = normalization(initial.beta, n);
    let mut rho = prop.to_eigen(&initial.rho);
    let mut pulses: Vec<((u64, u64), DMatrix<Complex64>)> = Vec::new();
    let mut samples = Vec::new();

    let measure = |rho: &DMatrix<Complex64>| -> Complex64 {
        // Tr[ρ O] = Σ_ab ρ_ab O_ba
        let mut acc = ZERO;
        for a in 0..rho.nrows() {
            for b in 0..rho.ncols() {
                acc += rho[(a, b)] * observable[(b, a)];
            }
        }
        acc / norm
    };

    for e in &program.events {
        match e.kind {
            EventKind::Pulse { angle_deg, phase_deg } => {
                let key = (angle_deg.to_bits(), phase_deg.to_bits());
                let idx = match pulses.iter().position(|(k, _)| *k == key) {
                    Some(i) => i,
                    None => {
                        let u = pulse_propagator(n, angle_deg.to_radians(), phase_deg.to_radians(), &system.b1_scale);
                        pulses.push((key, prop.to_eigen(&u)));
                        pulses.len() - 1
                    }
                };
                let u = &pulses[idx].1;
                rho = u * &rho * u.adjoint();
            }
            EventKind::Delay { duration } => prop.phase_in_eigenbasis(&mut rho, duration),
            EventKind::Acquire { duration, dwell } => {
                let count = acquisition_samples(duration, dwell);
                for k in 0..count {
                    if k > 0 {
                        prop.phase_in_eigenbasis(&mut rho, dwell);
                    }
                    samples.push(SignalSample { t: e.start + k as f64 * dwell, s: measure(&rho) });
                }
                let rest = duration - (count - 1) as f64 * dwell;
                if rest > 0.0 {
                    prop.phase_in_eigenbasis(&mut rho, rest);
                }
            }
        }
    }
    Ok(SignalTrace { samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn assert_close(a: Complex64, b: Complex64, tol: f64) {
        assert!((a - b).norm() < tol, "{a} vs {b}");
    }

    #[test]
    fn single_spin_hamiltonian() {
        let h = hamiltonian(&SpinSystem::uncoupled(vec![3.0]).unwrap());
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, -1.5]));
    }

    #[test]
    fn two_spin_dipolar_spectrum() {
        // Product states |↑↑⟩,|↓↓⟩ sit at d/2; the antiparallel pair splits
        // into −d/2 ± d/2 through the flip-flop element −d/2.
        let d = 2.0;
        let h = hamiltonian(&SpinSystem::new(vec![0.0, 0.0], vec![vec![0.0, d], vec![d, 0.0]]).unwrap());
        let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().cloned().collect();
        ev.sort_by(f64::total_cmp);
        let want = [-d, 0.0, 0.5 * d, 0.5 * d];
        for (a, b) in ev.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{ev:?}");
        }
    }

    #[test]
    fn excitation_and_equilibrium_signals() {
        let sys = SpinSystem::uncoupled(vec![0.0]).unwrap();
        let eq = DensityState::thermal(1);
        assert_close(signal(&eq, &sys), ZERO, 1e-15);
        let after = pulse(&eq, FRAC_PI_2, 0.0, &[1.0]);
        assert_close(signal(&after, &sys), c(0.0, -1.0), 1e-14);
        // Deviation is proportional to −Iy.
        let iy = collective(1, [[ZERO, c(0.0, -0.5)], [c(0.0, 0.5), ZERO]], &[1.0]);
        let dev = &after.rho - DMatrix::identity(2, 2) * c(0.5, 0.0);
        assert!((dev + iy * c(after.beta, 0.0)).iter().all(|z| z.norm() < 1e-15));

        let sys2 = SpinSystem::uncoupled(vec![0.0, 0.0]).unwrap();
        let after2 = pulse(&DensityState::thermal(2), FRAC_PI_2, 0.0, &[1.0, 1.0]);
        assert_close(signal(&after2, &sys2), c(0.0, -1.0), 1e-14);
    }

    #[test]
    fn separable_evolution_without_coupling() {
        let sys = SpinSystem::uncoupled(vec![1e3, -2.5e3]).unwrap();
        let s0 = pulse(&DensityState::thermal(2), FRAC_PI_2, 0.0, &[1.0, 1.0]);
        let s1 = evolve(&s0, &sys, 3e-4).unwrap();
        let want = 0.5 * (c(0.0, -1.0) * Complex64::from_polar(1.0, 1e3 * 3e-4) + c(0.0, -1.0) * Complex64::from_polar(1.0, -2.5e3 * 3e-4));
        assert_close(signal(&s1, &sys), want, 1e-13);
    }

    #[test]
    fn invariants_preserved() {
        let sys = SpinSystem::new(
            vec![100.0, -50.0, 20.0],
            vec![vec![0.0, 40.0, 10.0], vec![40.0, 0.0, -25.0], vec![10.0, -25.0, 0.0]],
        )
        .unwrap();
        let s0 = DensityState::thermal(3);
        let ev0 = s0.eigenvalues();
        let s1 = pulse(&s0, 1.3, 0.4, &[1.0, 0.9, 1.1]);
        let s2 = evolve(&s1, &sys, 7e-3).unwrap();
        let s3 = pulse(&s2, PI, FRAC_PI_2, &[1.05, 1.0, 0.95]);
        for s in [&s1, &s2, &s3] {
            assert!((s.trace() - c(1.0, 0.0)).norm() < 1e-12);
            assert!(s.hermiticity_error() < 1e-12);
            for (a, b) in s.eigenvalues().iter().zip(&ev0) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_oversized_and_malformed_systems() {
        assert!(matches!(SpinSystem::uncoupled(vec![0.0; 11]), Err(Error::DimensionTooLarge { n: 11, max: 10 })));
        assert!(SpinSystem::new(vec![0.0, 0.0], vec![vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(SpinSystem::new(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 0.0]]).is_err());
    }
}
