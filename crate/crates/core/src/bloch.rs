//! Isochromat-ensemble simulator.
//!
//! Every isochromat is stepped independently through the program with
//! exact rotations (delta pulses) and closed-form precession/relaxation, so
//! there is no time-step error. The ensemble signal is the weighted sum of
//! transverse magnetizations, accumulated in fixed-size chunks that are
//! reduced in index order: the result is bit-identical for any number of
//! worker threads.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{EchoEntry, EchoTrain};
use crate::magnetization::{Magnetization, Relaxation, Rotation};
use crate::sample::{standard_normal_quantile, GradientSpec, Isochromat, SampleSpec};
use crate::seqlang::{acquisition_samples, EventKind, PulseProgram, TimelineBuilder};
use crate::Error;

/// Isochromats per reduction chunk. Part of the numerical contract: changing
/// it changes the last bits of every signal.
pub const CHUNK_SIZE: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub isochromats: Vec<Isochromat>,
    pub relaxation: Relaxation,
    /// Gyromagnetic ratio in rad/(s·G), used to turn gradients into offsets.
    pub gamma: f64,
    pub seed: Option<u64>,
}

impl Ensemble {
    /// Draw an ensemble from `spec` by Latin-hypercube sampling: offset,
    /// position and random flip-angle quantiles each cover every stratum
    /// once, with independent seeded pairings and in-stratum jitter.
    pub fn from_spec(spec: &SampleSpec, seed: u64) -> Result<Self, Error> {
        spec.validate()?;
        let n = spec.n_isochromats;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z_order: Vec<usize> = (0..n).collect();
        z_order.shuffle(&mut rng);
        let mut b1_order: Vec<usize> = (0..n).collect();
        b1_order.shuffle(&mut rng);

        let mut stratum = |k: usize| (k as f64 + rng.gen_range(1e-9..1.0 - 1e-9)) / n as f64;
        let [z_lo, z_hi] = spec.z_range;
        let weight = 1.0 / n as f64;
        let mut isochromats = Vec::with_capacity(n);
        for k in 0..n {
            let delta_omega = spec.offsets.quantile(stratum(k));
            let z = z_lo + (z_hi - z_lo) * stratum(z_order[k]);
            let mut b1 = spec.b1_at(z);
            let u_b1 = stratum(b1_order[k]);
            if spec.b1_sigma > 0.0 {
                b1 *= 1.0 + spec.b1_sigma * standard_normal_quantile(u_b1);
            }
            if !(b1 > 0.0 && b1.is_finite()) {
                return Err(Error::InvalidSample(format!("flip-angle scale {b1} at z = {z} is not positive")));
            }
            isochromats.push(Isochromat::new(z, delta_omega, b1, weight));
        }
        Ok(Self { isochromats, relaxation: spec.relaxation(), gamma: spec.gamma, seed: Some(seed) })
    }

    /// Build an ensemble from explicit packets. Weights must be positive and
    /// sum to one within 1e-12.
    pub fn from_isochromats(isochromats: Vec<Isochromat>, relaxation: Relaxation, gamma: f64) -> Result<Self, Error> {
        if isochromats.is_empty() {
            return Err(Error::InvalidSample("ensemble needs at least one isochromat".into()));
        }
        let mut total = 0.0;
        for iso in &isochromats {
            if !(iso.weight > 0.0 && iso.b1_scale > 0.0) {
                return Err(Error::InvalidSample("isochromat weight and b1_scale must be positive".into()));
            }
            total += iso.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSample(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { isochromats, relaxation, gamma, seed: None })
    }

    /// Equal-weight ensemble, normalizing the weights of `isochromats`.
    pub fn uniform(mut isochromats: Vec<Isochromat>, relaxation: Relaxation, gamma: f64) -> Result<Self, Error> {
        let w = 1.0 / isochromats.len().max(1) as f64;
        for iso in &mut isochromats {
            iso.weight = w;
        }
        Self::from_isochromats(isochromats, relaxation, gamma)
    }

    pub fn len(&self) -> usize {
        self.isochromats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.isochromats.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSample {
    pub t: f64,
    pub s: Complex64,
}

/// Complex transverse signal normalized to `M0 = 1`: an ideal `(π/2)x` on
/// equilibrium gives `s = -i`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SignalTrace {
    pub samples: Vec<SignalSample>,
}

impl SignalTrace {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.s.norm()).collect()
    }

    /// Sample closest in time to `t`.
    pub fn nearest(&self, t: f64) -> Option<&SignalSample> {
        self.samples.iter().min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Pulse(usize),
    Precess(usize),
    Sample,
}

/// A program lowered to distinct pulses, distinct intervals and a list of
/// operations that index into them.
#[derive(Debug, Clone)]
struct Plan {
    pulses: Vec<(f64, f64)>,
    intervals: Vec<f64>,
    decay: Vec<(f64, f64)>,
    ops: Vec<Op>,
    times: Vec<f64>,
}

impl Plan {
    fn new(program: &PulseProgram, relaxation: Relaxation) -> Self {
        let mut pulses: Vec<(f64, f64)> = Vec::new();
        let mut intervals: Vec<f64> = Vec::new();
        let mut ops = Vec::new();
        let mut times = Vec::new();
        let mut interval = |d: f64, ops: &mut Vec<Op>| {
            if d > 0.0 {
                let idx = match intervals.iter().position(|x| x.to_bits() == d.to_bits()) {
                    Some(i) => i,
                    None => {
                        intervals.push(d);
                        intervals.len() - 1
                    }
                };
                ops.push(Op::Precess(idx));
            }
        };
        for e in &program.events {
            match e.kind {
                EventKind::Pulse { .. } => {
                    let p = e.kind.pulse_radians().expect("pulse");
                    let idx = match pulses.iter().position(|q| q.0.to_bits() == p.0.to_bits() && q.1.to_bits() == p.1.to_bits()) {
                        Some(i) => i,
                        None => {
                            pulses.push(p);
                            pulses.len() - 1
                        }
                    };
                    ops.push(Op::Pulse(idx));
                }
                EventKind::Delay { duration } => interval(duration, &mut ops),
                EventKind::Acquire { duration, dwell } => {
                    let n = acquisition_samples(duration, dwell);
                    for k in 0..n {
                        if k > 0 {
                            interval(dwell, &mut ops);
                        }
                        ops.push(Op::Sample);
                        times.push(e.start + k as f64 * dwell);
                    }
                    let rest = duration - (n - 1) as f64 * dwell;
                    if n > 1 || duration > 0.0 {
                        interval(rest.max(0.0), &mut ops);
                    }
                }
            }
        }
        let decay = intervals.iter().map(|&d| relaxation.factors(d)).collect();
        Self { pulses, intervals, decay, ops, times }
    }

    /// Add `weight·(mx + i·my)` at every sample of one isochromat into `acc`.
    fn accumulate(&self, iso: &Isochromat, omega: f64, acc: &mut [Complex64], rot: &mut Vec<Rotation>, prec: &mut Vec<(f64, f64)>) {
        rot.clear();
        rot.extend(self.pulses.iter().map(|&(angle, phase)| Rotation::about_transverse_axis(phase, iso.b1_scale * angle)));
        prec.clear();
        prec.extend(self.intervals.iter().map(|&d| (omega * d).sin_cos()));
        let mut m = iso.m;
        let mut k = 0;
        for op in &self.ops {
            match *op {
                Op::Pulse(i) => m = rot[i].apply(m),
                Op::Precess(i) => {
                    let (s, c) = prec[i];
                    let (e1, e2) = self.decay[i];
                    m = Magnetization {
                        mx: e2 * (c * m.mx - s * m.my),
                        my: e2 * (s * m.mx + c * m.my),
                        mz: 1.0 + (m.mz - 1.0) * e1,
                    };
                }
                Op::Sample => {
                    acc[k] += iso.weight * m.transverse();
                    k += 1;
                }
            }
        }
    }
}

fn chunk_signal(plan: &Plan, chunk: &[Isochromat], gradient: &GradientSpec, gamma: f64) -> Vec<Complex64> {
    let mut acc = vec![Complex64::new(0.0, 0.0); plan.times.len()];
    let mut rot = Vec::with_capacity(plan.pulses.len());
    let mut prec = Vec::with_capacity(plan.intervals.len());
    for iso in chunk {
        plan.accumulate(iso, iso.offset(gradient, gamma), &mut acc, &mut rot, &mut prec);
    }
    acc
}

/// Apply `program` to every isochromat and record the ensemble signal at
/// each acquisition sample.
pub fn run(program: &PulseProgram, ensemble: &Ensemble, gradient: &GradientSpec) -> SignalTrace {
    let plan = Plan::new(program, ensemble.relaxation);
    let chunks = ensemble.isochromats.chunks(CHUNK_SIZE);

    #[cfg(feature = "parallel")]
    let partials: Vec<Vec<Complex64>> = {
        use rayon::prelude::*;
        ensemble
            .isochromats
            .par_chunks(CHUNK_SIZE)
            .map(|c| chunk_signal(&plan, c, gradient, ensemble.gamma))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<Vec<Complex64>> = chunks.clone().map(|c| chunk_signal(&plan, c, gradient, ensemble.gamma)).collect();
    debug_assert_eq!(partials.len(), chunks.len());

    let mut total = vec![Complex64::new(0.0, 0.0); plan.times.len()];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    SignalTrace { samples: plan.times.iter().zip(total).map(|(&t, s)| SignalSample { t, s }).collect() }
}

/// Echo-top samples of every acquisition, one entry per acquisition event.
/// Amplitudes are the raw complex samples.
pub fn echo_amplitudes(program: &PulseProgram, ensemble: &Ensemble, gradient: &GradientSpec) -> Result<EchoTrain, Error> {
    if program.acquisitions().next().is_none() {
        return Err(Error::NoAcquisition);
    }
    let trace = run(program, ensemble, gradient);
    Ok(echo_train_from_trace(program, &trace))
}

/// Bind trace samples to acquisition events, picking the sample nearest each
/// window center.
pub fn echo_train_from_trace(program: &PulseProgram, trace: &SignalTrace) -> EchoTrain {
    let mut entries = Vec::new();
    let mut offset = 0;
    for (i, e) in program.acquisitions().enumerate() {
        let EventKind::Acquire { duration, dwell } = e.kind else { unreachable!() };
        let n = acquisition_samples(duration, dwell);
        let center = if n > 1 { ((0.5 * duration / dwell).round() as usize).min(n - 1) } else { 0 };
        let sample = trace.samples[offset + center];
        entries.push(EchoEntry { index: i + 1, t: e.start + 0.5 * duration, amplitude: sample.s });
        offset += n;
    }
    let tau = program.tau.unwrap_or_else(|| entries.first().map_or(0.0, |e| 0.5 * e.t));
    EchoTrain { entries, tau, sequence: program.builtin.clone().unwrap_or_else(|| "custom".into()) }
}

/// Coherence-pathway selection by phase cycling.
///
/// The phase of each pulse in `pulses` (0-based pulse numbers) is stepped
/// through `steps` equal increments. A pathway whose signal picks up
/// `exp(i·Σ kⱼ·Δφⱼ)` is kept when its order vector `k` is listed in
/// `orders`; all others cancel. Orders are taken modulo `steps`.
pub fn select_pathways(
    program: &PulseProgram,
    ensemble: &Ensemble,
    gradient: &GradientSpec,
    pulses: &[usize],
    orders: &[Vec<i32>],
    steps: usize,
) -> Result<SignalTrace, Error> {
    if steps < 2 {
        return Err(Error::Validation("phase cycle needs at least 2 steps".into()));
    }
    if orders.iter().any(|o| o.len() != pulses.len()) {
        return Err(Error::Validation("every order vector needs one entry per cycled pulse".into()));
    }
    let combos = steps.pow(pulses.len() as u32);
    let mut total: Option<SignalTrace> = None;
    for c in 0..combos {
        let mut prog = program.clone();
        let mut ks = Vec::with_capacity(pulses.len());
        let mut rest = c;
        for &p in pulses {
            let k = rest % steps;
            rest /= steps;
            prog = prog.with_pulse_phase_shift(p, 360.0 * k as f64 / steps as f64)?;
            ks.push(k as f64 * 2.0 * std::f64::consts::PI / steps as f64);
        }
        let receiver: Complex64 = orders
            .iter()
            .map(|o| Complex64::from_polar(1.0, -o.iter().zip(&ks).map(|(&k, &dphi)| k as f64 * dphi).sum::<f64>()))
            .sum::<Complex64>()
            / combos as f64;
        let tr = run(&prog, ensemble, gradient);
        match &mut total {
            None => {
                total = Some(SignalTrace {
                    samples: tr.samples.iter().map(|s| SignalSample { t: s.t, s: s.s * receiver }).collect(),
                })
            }
            Some(acc) => {
                for (a, s) in acc.samples.iter_mut().zip(&tr.samples) {
                    a.s += s.s * receiver;
                }
            }
        }
    }
    Ok(total.expect("at least one phase step"))
}

/// Signals of a three-pulse program split by coherence pathway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreePulsePathways {
    /// Coherence stored as polarization between the second and third pulse.
    pub stimulated: SignalTrace,
    /// Coherence inverted by both the second and the third pulse.
    pub hahn: SignalTrace,
}

/// Separate the stimulated and the doubly refocused Hahn echo of a program
/// whose first three pulses are excitation, storage and read-out.
pub fn three_pulse_pathways(program: &PulseProgram, ensemble: &Ensemble, gradient: &GradientSpec) -> Result<ThreePulsePathways, Error> {
    if program.pulses().count() < 3 {
        return Err(Error::Validation("pathway separation needs at least three pulses".into()));
    }
    let stimulated = select_pathways(program, ensemble, gradient, &[1, 2], &[vec![1, 1], vec![-1, 1]], 4)?;
    let hahn = select_pathways(program, ensemble, gradient, &[1, 2], &[vec![2, 2]], 4)?;
    Ok(ThreePulsePathways { stimulated, hahn })
}

/// Free induction decay: an ideal-phase `(π/2)x` pulse followed by an
/// acquisition of `duration` sampled every `dwell`.
pub fn fid(ensemble: &Ensemble, gradient: &GradientSpec, duration: f64, dwell: f64) -> Result<SignalTrace, Error> {
    let mut b = TimelineBuilder::default();
    b.pulse(90.0, 0.0).acquire(duration, dwell);
    Ok(run(&b.build()?, ensemble, gradient))
}
