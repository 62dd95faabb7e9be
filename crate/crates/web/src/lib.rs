//! WebAssembly bindings for the browser demo: echo trains with a tail fit,
//! the stimulated-to-Hahn echo ratio against gradient, and free induction
//! decays, all on the default PDMS-like sample.

use stecho::analysis::{fit_double_exponential, fit_quadratic_gradient, ste_he_ratio_resolved};
use stecho::bloch::{self, three_pulse_pathways};
use stecho::seqlang::builtin;
use stecho::{Builtin, BuiltinParams, Ensemble, Error, GradientSpec, SampleSpec};
use wasm_bindgen::prelude::*;

const SEED: u64 = 1;
const STORAGE_TIME: f64 = 8e-3;
const STORAGE_TAU: f64 = 500e-6;
const ECHO_WINDOW: f64 = 1e-4;

/// A curve with an optional model overlay, ready for plotting.
#[wasm_bindgen]
pub struct Series {
    x: Vec<f64>,
    y: Vec<f64>,
    model: Vec<f64>,
    summary: f64,
}

#[wasm_bindgen]
impl Series {
    #[wasm_bindgen(getter)]
    pub fn x(&self) -> Vec<f64> {
        self.x.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn y(&self) -> Vec<f64> {
        self.y.clone()
    }

    /// Model values at `x`, empty when no model was fitted.
    #[wasm_bindgen(getter)]
    pub fn model(&self) -> Vec<f64> {
        self.model.clone()
    }

    /// Tail percentage for echo trains, r² for gradient sweeps, T2* in ms
    /// for decays. NaN when unavailable.
    #[wasm_bindgen(getter)]
    pub fn summary(&self) -> f64 {
        self.summary
    }
}

fn ensemble(b1_sigma: f64, b1_droop: f64, isochromats: u32) -> Result<Ensemble, Error> {
    let spec = SampleSpec {
        n_isochromats: isochromats as usize,
        b1_profile: vec![1.0, 0.0, -b1_droop],
        b1_sigma,
        ..SampleSpec::default()
    };
    Ensemble::from_spec(&spec, SEED)
}

fn js(e: Error) -> String {
    e.to_string()
}

/// Echo magnitudes of a CP or CPMG train against time in ms, with the
/// two-component decay fit (short time constant fixed at the sample T2).
#[wasm_bindgen]
pub fn echo_train(
    sequence: &str,
    tau_us: f64,
    echoes: u32,
    gradient: f64,
    b1_sigma: f64,
    b1_droop: f64,
    isochromats: u32,
) -> Result<Series, String> {
    let seq: Builtin = sequence.parse().map_err(js)?;
    let per_cycle = seq.train_phases().ok_or_else(|| format!("{sequence} is not a pulse train"))?.len();
    let cycles = (echoes as usize / per_cycle).max(1);
    let program = builtin(seq, &BuiltinParams::train(1e-6 * tau_us, cycles)).map_err(js)?;
    let ens = ensemble(b1_sigma, b1_droop, isochromats).map_err(js)?;
    let train = bloch::echo_amplitudes(&program, &ens, &GradientSpec::new(gradient).map_err(js)?).map_err(js)?;
    let t2 = SampleSpec::default().t2.unwrap_or(f64::INFINITY);
    let fit = fit_double_exponential(&train, t2).ok();
    let times = train.times();
    Ok(Series {
        x: times.iter().map(|t| 1e3 * t).collect(),
        y: train.magnitudes(),
        model: fit.as_ref().map_or_else(Vec::new, |f| times.iter().map(|&t| f.model(t)).collect()),
        summary: fit.map_or(f64::NAN, |f| f.tail_percent()),
    })
}

/// Stimulated-to-Hahn echo ratio of the storage sequence for `steps + 1`
/// gradients from 0 to `g_max` G/cm, with its quadratic fit.
#[wasm_bindgen]
pub fn ste_ratio_vs_gradient(g_max: f64, steps: u32, b1_sigma: f64, b1_droop: f64, isochromats: u32) -> Result<Series, String> {
    let steps = steps.max(2);
    let ens = ensemble(b1_sigma, b1_droop, isochromats).map_err(js)?;
    let program = builtin(Builtin::SteCpmg1, &BuiltinParams::stimulated(STORAGE_TAU, STORAGE_TIME)).map_err(js)?;
    let mut points = Vec::with_capacity(steps as usize + 1);
    for k in 0..=steps {
        let g = g_max * k as f64 / steps as f64;
        let pw = three_pulse_pathways(&program, &ens, &GradientSpec::new(g).map_err(js)?).map_err(js)?;
        let r = ste_he_ratio_resolved(&pw, STORAGE_TAU, STORAGE_TIME, ECHO_WINDOW).map_err(js)?;
        points.push((g, r.ratio));
    }
    let fit = fit_quadratic_gradient(&points).ok();
    Ok(Series {
        x: points.iter().map(|p| p.0).collect(),
        y: points.iter().map(|p| p.1).collect(),
        model: fit.as_ref().map_or_else(Vec::new, |f| points.iter().map(|p| f.eval(p.0)).collect()),
        summary: fit.map_or(f64::NAN, |f| f.r_squared),
    })
}

/// Free induction decay magnitude against time in ms.
#[wasm_bindgen]
pub fn fid(duration_ms: f64, gradient: f64, b1_sigma: f64, b1_droop: f64, isochromats: u32) -> Result<Series, String> {
    let ens = ensemble(b1_sigma, b1_droop, isochromats).map_err(js)?;
    let duration = 1e-3 * duration_ms;
    let trace = bloch::fid(&ens, &GradientSpec::new(gradient).map_err(js)?, duration, duration / 400.0).map_err(js)?;
    let y = trace.magnitudes();
    let threshold = y.first().copied().unwrap_or(0.0) / std::f64::consts::E;
    let t2star = trace.samples.iter().find(|s| s.s.norm() < threshold).map_or(f64::NAN, |s| 1e3 * s.t);
    Ok(Series { x: trace.times().iter().map(|t| 1e3 * t).collect(), y, model: Vec::new(), summary: t2star })
}
