use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use stecho::analysis::{measure_t2he, measure_t2star, ste_he_ratio_resolved};
use stecho::bloch::{self, three_pulse_pathways};
use stecho::liouville::{self, DensityState, SpinSystem};
use stecho::sample::GAMMA_1H;
use stecho::seqlang::{builtin, TimelineBuilder};
use stecho::*;

fn single(delta_omega: f64, relaxation: Relaxation) -> Ensemble {
    Ensemble::from_isochromats(vec![Isochromat::new(0.0, delta_omega, 1.0, 1.0)], relaxation, GAMMA_1H).unwrap()
}

fn sample_at(program: &PulseProgram, ensemble: &Ensemble) -> Complex64 {
    let tr = bloch::run(program, ensemble, &GradientSpec::OFF);
    assert_eq!(tr.len(), 1);
    tr.samples[0].s
}

/// Closed-form transverse signal of `(π/2)x − τ − (π/2)y − t1 − (π/2)y − t`
/// for one isochromat starting at equilibrium.
fn three_pulse_closed_form(dw: f64, tau: f64, t1: f64, t: f64) -> Complex64 {
    let (st, ct) = (dw * tau).sin_cos();
    let cp = (dw * t1).cos();
    let (ss, cs) = (dw * t).sin_cos();
    let mx = ct * cp * ss - st * cs;
    let my = -ct * cp * cs - st * ss;
    Complex64::new(mx, my)
}

#[test]
fn single_isochromat_matches_three_pulse_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let dw = rng.gen_range(-2e4..2e4);
        let tau = rng.gen_range(1e-5..2e-3);
        let t1 = rng.gen_range(0.0..2e-2);
        let t = rng.gen_range(0.0..4e-3);
        let mut b = TimelineBuilder::default();
        b.pulse(90.0, 0.0).delay(tau).pulse(90.0, 90.0).delay(t1).pulse(90.0, 90.0).delay(t).acquire(0.0, 0.0);
        let s = sample_at(&b.build().unwrap(), &single(dw, Relaxation::NONE));
        let want = three_pulse_closed_form(dw, tau, t1, t);
        assert!((s - want).norm() < 1e-12, "δω={dw} τ={tau} t1={t1} t={t}: {s} vs {want}");
    }
}

fn broad_uniform(n: usize, half_width: f64) -> Ensemble {
    let spec = SampleSpec {
        n_isochromats: n,
        offsets: OffsetDistribution::Uniform { half_width },
        b1_profile: vec![1.0],
        t1: None,
        t2: None,
        ..SampleSpec::default()
    };
    Ensemble::from_spec(&spec, 11).unwrap()
}

#[test]
fn stimulated_echo_recovers_half_the_magnetization() {
    let tau = 0.5e-3;
    let ens = broad_uniform(100_000, 50.0 * PI / tau);
    let p = builtin(Builtin::Ste, &BuiltinParams::stimulated(tau, 8e-3)).unwrap();
    let train = bloch::echo_amplitudes(&p, &ens, &GradientSpec::OFF).unwrap();
    let ste = train.entries[0].amplitude;
    assert!((ste.norm() - 0.5).abs() < 1e-3, "{ste}");
    assert!(ste.im < 0.0, "stimulated echo keeps the excitation phase: {ste}");

    let p0 = builtin(Builtin::Ste, &BuiltinParams::stimulated(tau, 0.0)).unwrap();
    let he = bloch::echo_amplitudes(&p0, &ens, &GradientSpec::OFF).unwrap();
    assert_eq!(he.entries.len(), 1);
    assert!((he.entries[0].amplitude.norm() - 1.0).abs() < 1e-6);
}

#[test]
fn hahn_echo_fully_refocuses_any_line() {
    let ens = broad_uniform(4096, 3e4);
    for tau in [1e-4, 7e-4, 3e-3] {
        let p = builtin(Builtin::He, &BuiltinParams::train(tau, 1)).unwrap();
        let s = bloch::echo_amplitudes(&p, &ens, &GradientSpec::new(12.0).unwrap()).unwrap().entries[0].amplitude;
        assert!((s.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn fid_of_a_delta_line_decays_with_t2() {
    let t2 = 1.8e-3;
    let ens = single(0.0, Relaxation::new(None, Some(t2)));
    let tr = bloch::fid(&ens, &GradientSpec::OFF, 5e-3, 1e-4).unwrap();
    for s in &tr.samples {
        assert!((s.s.norm() - (-s.t / t2).exp()).abs() < 1e-12);
    }
}

#[test]
fn fid_of_a_lorentzian_line() {
    let gamma = 1.1e3;
    let spec = SampleSpec {
        n_isochromats: 200_000,
        offsets: OffsetDistribution::Lorentzian { gamma },
        b1_profile: vec![1.0],
        t1: None,
        t2: None,
        ..SampleSpec::default()
    };
    let ens = Ensemble::from_spec(&spec, 5).unwrap();
    let tr = bloch::fid(&ens, &GradientSpec::OFF, 3e-3, 5e-5).unwrap();
    for s in &tr.samples {
        assert!((s.s.norm() - (-gamma * s.t).exp()).abs() < 5e-3, "t={} |s|={}", s.t, s.s.norm());
    }
}

#[test]
fn fid_of_a_uniform_line_is_a_sinc() {
    let delta = 2e4;
    let ens = broad_uniform(100_000, delta);
    let tr = bloch::fid(&ens, &GradientSpec::OFF, 1e-3, 1e-5).unwrap();
    for s in &tr.samples {
        let x = delta * s.t;
        let want = if x == 0.0 { 1.0 } else { (x.sin() / x).abs() };
        assert!((s.s.norm() - want).abs() < 1e-3, "t={} |s|={} want {want}", s.t, s.s.norm());
    }
}

#[test]
fn emergent_t2star_combines_line_width_and_t2() {
    let spec = SampleSpec { n_isochromats: 200_000, b1_profile: vec![1.0], ..SampleSpec::default() };
    let ens = Ensemble::from_spec(&spec, 1).unwrap();
    let tr = bloch::fid(&ens, &GradientSpec::OFF, 3e-3, 1e-6).unwrap();
    let m = measure_t2star(&tr).unwrap();
    let want = 1.0 / (1.1e3 + 1.0 / 1.8e-3);
    assert!((m.t2star / want - 1.0).abs() < 0.02, "{} vs {want}", m.t2star);
}

#[test]
fn hahn_echo_sweep_recovers_t2() {
    let spec = SampleSpec { n_isochromats: 4096, b1_profile: vec![1.0], ..SampleSpec::default() };
    let ens = Ensemble::from_spec(&spec, 2).unwrap();
    let g = GradientSpec::new(5.0).unwrap();
    let pts: Vec<(f64, f64)> = (1..=12)
        .map(|k| {
            let tau = k as f64 * 2e-4;
            let p = builtin(Builtin::He, &BuiltinParams::train(tau, 1)).unwrap();
            let e = bloch::echo_amplitudes(&p, &ens, &g).unwrap().entries[0];
            (e.t, e.amplitude.norm())
        })
        .collect();
    let f = measure_t2he(&pts).unwrap();
    assert!((f.t2 / 1.8e-3 - 1.0).abs() < 0.01, "{f:?}");
}

#[test]
fn stimulated_echo_decays_with_t1_only() {
    let spec = SampleSpec {
        n_isochromats: 20_000,
        offsets: OffsetDistribution::Uniform { half_width: 1e5 },
        b1_profile: vec![1.0],
        t1: Some(0.05),
        t2: Some(1.8e-3),
        ..SampleSpec::default()
    };
    let ens = Ensemble::from_spec(&spec, 4).unwrap();
    let tau = 2e-4;
    let amp = |t1: f64| {
        let p = builtin(Builtin::Ste, &BuiltinParams::stimulated(tau, t1)).unwrap();
        bloch::echo_amplitudes(&p, &ens, &GradientSpec::OFF).unwrap().entries[0].amplitude.norm()
    };
    let (a, b) = (amp(10e-3), amp(30e-3));
    // Between the two storage delays only the stored polarization survives.
    assert!((b / a - (-20e-3f64 / 0.05).exp()).abs() < 0.02, "{a} {b}");
    assert!(b > 10.0 * (-(30e-3 + 2.0 * tau) / 1.8e-3f64).exp());
}

#[test]
fn refocusing_phase_of_the_third_pulse_inverts_the_stimulated_echo() {
    let spec = SampleSpec { n_isochromats: 20_000, b1_sigma: 0.05, t1: None, t2: None, ..SampleSpec::default() };
    let ens = Ensemble::from_spec(&spec, 9).unwrap();
    let g = GradientSpec::new(5.0).unwrap();
    let (tau, t1) = (0.5e-3, 8e-3);
    let ratio = |b| {
        let p = builtin(b, &BuiltinParams::stimulated(tau, t1)).unwrap();
        ste_he_ratio_resolved(&three_pulse_pathways(&p, &ens, &g).unwrap(), tau, t1, 1e-4).unwrap()
    };
    let (same, opposite) = (ratio(Builtin::SteCpmg1), ratio(Builtin::SteCpmg2));
    assert!(same.ste_amp > 1e-3 && opposite.ste_amp > 1e-3);
    assert!((same.ste_amp - opposite.ste_amp).abs() < 1e-3 * same.ste_amp);
    assert_eq!(same.phase_sign, -opposite.phase_sign);
}

#[test]
fn perfect_refocusing_pulses_create_no_stimulated_echo() {
    let spec = SampleSpec { n_isochromats: 10_000, b1_profile: vec![1.0], t1: None, ..SampleSpec::default() };
    let ens = Ensemble::from_spec(&spec, 6).unwrap();
    for b in [Builtin::SteCpmg1, Builtin::SteCpmg2] {
        let p = builtin(b, &BuiltinParams::stimulated(0.5e-3, 8e-3)).unwrap();
        let pw = three_pulse_pathways(&p, &ens, &GradientSpec::new(2.0).unwrap()).unwrap();
        let ste = pw.stimulated.samples[0].s.norm();
        assert!(ste < 1e-10, "{b}: {ste}");
    }
}

fn random_program(rng: &mut ChaCha8Rng) -> PulseProgram {
    let mut b = TimelineBuilder::default();
    b.pulse(rng.gen_range(10.0..200.0), rng.gen_range(0.0..360.0));
    for _ in 0..rng.gen_range(1..6) {
        b.delay(rng.gen_range(1e-5..1e-3));
        if rng.gen_bool(0.7) {
            b.pulse(rng.gen_range(10.0..200.0), rng.gen_range(0.0..360.0));
        }
        if rng.gen_bool(0.5) {
            b.acquire(rng.gen_range(0.0..2e-4), 2e-5);
        }
    }
    b.delay(rng.gen_range(1e-5..1e-3)).acquire(1e-4, 1e-5);
    b.build().unwrap()
}

#[test]
fn uncoupled_exact_engine_matches_isochromats() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..50 {
        let n = rng.gen_range(1..=4);
        let offsets: Vec<f64> = (0..n).map(|_| rng.gen_range(-2e4..2e4)).collect();
        let b1: Vec<f64> = (0..n).map(|_| rng.gen_range(0.8..1.2)).collect();
        let sys = SpinSystem::with_b1(offsets.clone(), vec![vec![0.0; n]; n], b1.clone()).unwrap();
        let isos = offsets.iter().zip(&b1).map(|(&o, &e)| Isochromat::new(0.0, o, e, 1.0)).collect();
        let ens = Ensemble::uniform(isos, Relaxation::NONE, GAMMA_1H).unwrap();
        let p = random_program(&mut rng);
        let exact = liouville::run_program_exact(&p, &sys, &DensityState::thermal(n)).unwrap();
        let vector = bloch::run(&p, &ens, &GradientSpec::OFF);
        assert_eq!(exact.len(), vector.len());
        for (a, b) in exact.samples.iter().zip(&vector.samples) {
            assert_eq!(a.t, b.t);
            assert!((a.s - b.s).norm() < 1e-8, "case {case}: {} vs {}", a.s, b.s);
        }
    }
}

#[test]
fn offset_difference_suppresses_flip_flops() {
    let d = 2.0 * PI * 100.0;
    let depth = |delta: f64| {
        let sys = SpinSystem::new(vec![0.5 * delta, -0.5 * delta], vec![vec![0.0, d], vec![d, 0.0]]).unwrap();
        let init = DensityState::polarized(&[1.0, -1.0]);
        let diff = liouville::total_iz(2, &[1.0, -1.0]);
        let p0 = init.expectation(&diff).re;
        let omega = (d * d + delta * delta).sqrt();
        let later = liouville::evolve(&init, &sys, PI / omega).unwrap();
        1.0 - later.expectation(&diff).re / p0
    };
    let (free, quenched) = (depth(0.0), depth(20.0 * d));
    assert!((free - 2.0).abs() < 1e-10, "{free}");
    let want = d * d / (d * d + 400.0 * d * d);
    assert!((quenched / free - want).abs() < 1e-10, "{} vs {want}", quenched / free);
}

#[test]
fn coupled_evolution_preserves_density_matrix_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 4;
    let offsets: Vec<f64> = (0..n).map(|_| rng.gen_range(-3e3..3e3)).collect();
    let mut couplings = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in j + 1..n {
            let v = rng.gen_range(-1e3..1e3);
            couplings[j][k] = v;
            couplings[k][j] = v;
        }
    }
    let sys = SpinSystem::with_b1(offsets, couplings, vec![1.05; n]).unwrap();
    let mut state = DensityState::thermal(n);
    let ev0 = state.eigenvalues();
    for k in 0..20 {
        state = liouville::pulse(&state, PI, 0.5 * PI * (k % 2) as f64, &sys.b1_scale);
        state = liouville::evolve(&state, &sys, 1e-4).unwrap();
        assert!((state.trace() - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(state.hermiticity_error() < 1e-12);
        for (a, b) in state.eigenvalues().iter().zip(&ev0) {
            assert!((a - b).abs() < 1e-10);
            assert!(*a >= -1e-10);
        }
    }
    assert!(liouville::signal(&state, &sys).norm() <= 1.0 + 1e-9);
}
