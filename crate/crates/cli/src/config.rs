//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stecho::sample::GAMMA_1H;
use stecho::seqlang::{parse_program, AcqWindow};
use stecho::{Builtin, BuiltinParams, OffsetDistribution, PulseProgram, SampleSpec};

use crate::units::{Frequency, Gradient, Length, Seconds};
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Bloch,
    Liouville,
}

/// Intrinsic line shape of the sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum LineConfig {
    Delta { offset: Frequency },
    Uniform { half_width: Frequency },
    Gaussian { sigma: Frequency },
    Lorentzian { hwhm: Frequency },
}

impl Default for LineConfig {
    fn default() -> Self {
        LineConfig::Lorentzian { hwhm: Frequency(1.1e3) }
    }
}

impl LineConfig {
    fn distribution(&self) -> OffsetDistribution {
        match *self {
            LineConfig::Delta { offset } => OffsetDistribution::Delta { omega0: offset.0 },
            LineConfig::Uniform { half_width } => OffsetDistribution::Uniform { half_width: half_width.0 },
            LineConfig::Gaussian { sigma } => OffsetDistribution::Gaussian { sigma: sigma.0 },
            LineConfig::Lorentzian { hwhm } => OffsetDistribution::Lorentzian { gamma: hwhm.0 },
        }
    }
}

fn default_isochromats() -> usize {
    20_000
}

fn default_length() -> Length {
    Length(1.0)
}

fn default_profile() -> Vec<f64> {
    vec![1.0, 0.0, -0.05]
}

fn default_t1() -> Option<Seconds> {
    Some(Seconds(0.2))
}

fn default_t2() -> Option<Seconds> {
    Some(Seconds(1.8e-3))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    #[serde(default = "default_isochromats")]
    pub n_isochromats: usize,
    #[serde(default)]
    pub line: LineConfig,
    /// Sample extent along the gradient, centered on zero.
    #[serde(default = "default_length")]
    pub length: Length,
    /// Flip-angle scale as a polynomial in `u = 2z/length ∈ [-1, 1]`.
    #[serde(default = "default_profile")]
    pub b1_profile: Vec<f64>,
    #[serde(default)]
    pub b1_sigma: f64,
    /// `null` is infinite.
    #[serde(default = "default_t1")]
    pub t1: Option<Seconds>,
    #[serde(default = "default_t2")]
    pub t2: Option<Seconds>,
    /// rad/(s·G); protons when omitted.
    #[serde(default)]
    pub gamma: Option<f64>,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            n_isochromats: default_isochromats(),
            line: LineConfig::default(),
            length: default_length(),
            b1_profile: default_profile(),
            b1_sigma: 0.0,
            t1: default_t1(),
            t2: default_t2(),
            gamma: None,
        }
    }
}

impl SampleConfig {
    pub fn spec(&self, b1_sigma: f64) -> SampleSpec {
        let half = 0.5 * self.length.0;
        SampleSpec {
            n_isochromats: self.n_isochromats,
            offsets: self.line.distribution(),
            z_range: [-half, half],
            b1_profile: self.b1_profile.clone(),
            b1_sigma,
            t1: self.t1.map(|s| s.0),
            t2: self.t2.map(|s| s.0),
            gamma: self.gamma.unwrap_or(GAMMA_1H),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub width: Seconds,
    pub dwell: Seconds,
}

/// Either a standard sequence with parameters or pulse-program text.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub builtin: Option<Builtin>,
    pub tau: Option<Seconds>,
    pub t1: Option<Seconds>,
    /// Number of cycles of a train. For `HE` above 1, a Hahn-echo decay
    /// curve sampled on the same echo times as a train.
    pub n: Option<usize>,
    pub window: Option<WindowConfig>,
    /// Inline pulse-program text.
    pub source: Option<String>,
    /// Pulse-program file, relative to the config file.
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub sequence: Option<Vec<Builtin>>,
    pub tau: Option<Vec<Seconds>>,
    pub t1: Option<Vec<Seconds>>,
    pub gradient: Option<Vec<Gradient>>,
    pub b1_sigma: Option<Vec<f64>>,
    pub n: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "yes")]
    pub fit: bool,
    /// Fixed short time of the double-exponential fit; the sample T2 when
    /// omitted.
    pub t_short: Option<Seconds>,
    /// Peak-search window of the stimulated and Hahn echoes; half their
    /// separation when omitted.
    pub echo_window: Option<Seconds>,
    /// Separate the stimulated and Hahn echoes by phase cycling.
    #[serde(default = "yes")]
    pub pathways: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { fit: true, t_short: None, echo_window: None, pathways: true }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinSystemConfig {
    pub offsets: Vec<Frequency>,
    /// Symmetric coupling matrix; omitted means uncoupled.
    #[serde(default)]
    pub couplings: Option<Vec<Vec<Frequency>>>,
    #[serde(default)]
    pub b1_scale: Option<Vec<f64>>,
    /// Positions along the gradient; all at zero when omitted.
    #[serde(default)]
    pub z: Option<Vec<Length>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "yes")]
    pub plots: bool,
    /// Write the full signal trace of `run`.
    #[serde(default = "yes")]
    pub traces: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { plots: true, traces: true }
    }
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default)]
    pub sample: SampleConfig,
    pub sequence: SequenceConfig,
    #[serde(default)]
    pub gradient: Gradient,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub spin_system: Option<SpinSystemConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory of the config file, for relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn invalid(path: &str, message: impl Into<String>) -> CliError {
    CliError::Config { path: path.to_string(), message: message.into() }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse without validating; field paths are reported for type errors.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            invalid(if path == "." { "<root>" } else { &path }, e.into_inner().to_string())
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg = Self::from_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Digest of the settings that determine the results.
    pub fn fingerprint(&self) -> String {
        let mut canonical = self.clone();
        canonical.name = None;
        canonical.description = None;
        canonical.output = OutputConfig::default();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version)));
        }
        self.sample.spec(self.sample.b1_sigma).validate().map_err(|e| invalid("sample", e.to_string()))?;
        if !(0.0..1.0).contains(&self.sample.b1_sigma) {
            return Err(invalid("sample.b1_sigma", "must lie in [0, 1)"));
        }
        if !(self.gradient.0 >= 0.0) {
            return Err(invalid("gradient", "must be non-negative"));
        }
        self.validate_sequence()?;
        self.validate_sweep()?;
        if let Some(ts) = self.analysis.t_short {
            if !(ts.0 > 0.0) {
                return Err(invalid("analysis.t_short", "must be positive"));
            }
        }
        if let Some(w) = self.analysis.echo_window {
            if !(w.0 > 0.0) {
                return Err(invalid("analysis.echo_window", "must be positive"));
            }
        }
        match (self.engine, &self.spin_system) {
            (Engine::Liouville, None) => Err(invalid("spin_system", "engine liouville requires a spin_system block")),
            (Engine::Liouville, Some(s)) => self.validate_spin_system(s),
            (Engine::Bloch, _) => Ok(()),
        }
    }

    fn validate_sequence(&self) -> Result<(), CliError> {
        let s = &self.sequence;
        let texts = usize::from(s.source.is_some()) + usize::from(s.file.is_some());
        match (s.builtin, texts) {
            (Some(_), 0) | (None, 1) => {}
            (Some(_), _) => return Err(invalid("sequence", "give either builtin or source/file, not both")),
            (None, 0) => return Err(invalid("sequence", "needs builtin, source or file")),
            (None, _) => return Err(invalid("sequence", "give only one of source and file")),
        }
        if s.builtin.is_none() {
            for (field, set) in [("tau", s.tau.is_some()), ("t1", s.t1.is_some()), ("n", s.n.is_some()), ("window", s.window.is_some())] {
                if set {
                    return Err(invalid(&format!("sequence.{field}"), "only applies to builtin sequences"));
                }
            }
            let swept = self.sweep.sequence.is_some() || self.sweep.tau.is_some() || self.sweep.t1.is_some() || self.sweep.n.is_some();
            if swept {
                return Err(invalid("sweep", "sequence, tau, t1 and n axes need a builtin sequence"));
            }
            self.program_for(&PointParams::default()).map_err(|e| invalid("sequence", e.to_string()))?;
            return Ok(());
        }
        if s.tau.is_none() && self.sweep.tau.is_none() {
            return Err(invalid("sequence.tau", "required for builtin sequences"));
        }
        Ok(())
    }

    fn validate_sweep(&self) -> Result<(), CliError> {
        let sw = &self.sweep;
        let lens = [
            ("sweep.sequence", sw.sequence.as_ref().map(Vec::len)),
            ("sweep.tau", sw.tau.as_ref().map(Vec::len)),
            ("sweep.t1", sw.t1.as_ref().map(Vec::len)),
            ("sweep.gradient", sw.gradient.as_ref().map(Vec::len)),
            ("sweep.b1_sigma", sw.b1_sigma.as_ref().map(Vec::len)),
            ("sweep.n", sw.n.as_ref().map(Vec::len)),
        ];
        for (path, len) in lens {
            if len == Some(0) {
                return Err(invalid(path, "axis must not be empty"));
            }
        }
        if let Some(g) = &sw.gradient {
            if let Some(i) = g.iter().position(|g| !(g.0 >= 0.0)) {
                return Err(invalid(&format!("sweep.gradient[{i}]"), "must be non-negative"));
            }
        }
        if let Some(s) = &sw.b1_sigma {
            if let Some(i) = s.iter().position(|s| !(0.0..1.0).contains(s)) {
                return Err(invalid(&format!("sweep.b1_sigma[{i}]"), "must lie in [0, 1)"));
            }
            if self.engine == Engine::Liouville {
                return Err(invalid("sweep.b1_sigma", "not applicable to the liouville engine"));
            }
        }
        for p in self.grid() {
            if self.sequence.builtin.is_some() {
                self.program_for(&p).map_err(|e| invalid("sequence", format!("at {}: {e}", p.describe())))?;
            }
        }
        Ok(())
    }

    fn validate_spin_system(&self, s: &SpinSystemConfig) -> Result<(), CliError> {
        let n = s.offsets.len();
        if let Some(c) = &s.couplings {
            if c.len() != n || c.iter().any(|r| r.len() != n) {
                return Err(invalid("spin_system.couplings", format!("must be {n}×{n}")));
            }
        }
        if s.b1_scale.as_ref().is_some_and(|b| b.len() != n) {
            return Err(invalid("spin_system.b1_scale", format!("needs {n} entries")));
        }
        if s.z.as_ref().is_some_and(|z| z.len() != n) {
            return Err(invalid("spin_system.z", format!("needs {n} entries")));
        }
        self.spin_system_at(s, self.gradient.0).map(|_| ()).map_err(|e| invalid("spin_system", e.to_string()))
    }

    pub fn spin_system_at(&self, s: &SpinSystemConfig, gradient: f64) -> Result<stecho::liouville::SpinSystem, stecho::Error> {
        let n = s.offsets.len();
        let gamma = self.sample.gamma.unwrap_or(GAMMA_1H);
        let offsets = (0..n)
            .map(|j| s.offsets[j].0 + s.z.as_ref().map_or(0.0, |z| gamma * gradient * z[j].0))
            .collect();
        let couplings = match &s.couplings {
            Some(c) => c.iter().map(|r| r.iter().map(|f| f.0).collect()).collect(),
            None => vec![vec![0.0; n]; n],
        };
        let b1 = s.b1_scale.clone().unwrap_or_else(|| vec![1.0; n]);
        stecho::liouville::SpinSystem::with_b1(offsets, couplings, b1)
    }

    /// Grid points in row-major order of the axes sequence, τ, t1, G, σ_B1, n.
    pub fn grid(&self) -> Vec<PointParams> {
        let s = &self.sequence;
        let sw = &self.sweep;
        let one = |v: Option<f64>| vec![v];
        let sequences: Vec<Option<Builtin>> = sw.sequence.as_ref().map_or(vec![s.builtin], |v| v.iter().map(|&b| Some(b)).collect());
        let taus = sw.tau.as_ref().map_or(one(s.tau.map(|t| t.0)), |v| v.iter().map(|t| Some(t.0)).collect());
        let t1s = sw.t1.as_ref().map_or(one(s.t1.map(|t| t.0)), |v| v.iter().map(|t| Some(t.0)).collect());
        let gradients = sw.gradient.as_ref().map_or(vec![self.gradient.0], |v| v.iter().map(|g| g.0).collect());
        let sigmas = sw.b1_sigma.clone().unwrap_or_else(|| vec![self.sample.b1_sigma]);
        let ns: Vec<Option<usize>> = sw.n.as_ref().map_or(vec![s.n], |v| v.iter().map(|&n| Some(n)).collect());
        let mut out = Vec::new();
        for &sequence in &sequences {
            for &tau in &taus {
                for &t1 in &t1s {
                    for &gradient in &gradients {
                        for &b1_sigma in &sigmas {
                            for &n in &ns {
                                out.push(PointParams { index: out.len(), sequence, tau, t1, gradient, b1_sigma, n });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Compiled program of one grid point. `HE` trains compile to the single
    /// Hahn echo at the point's τ.
    pub fn program_for(&self, p: &PointParams) -> Result<PulseProgram, stecho::Error> {
        match p.sequence {
            Some(b) => {
                let mut params = BuiltinParams { tau: p.tau.unwrap_or(0.0), t1: p.t1.unwrap_or(0.0), n: p.n.unwrap_or(1), window: None };
                if b == Builtin::He {
                    params.n = 1;
                }
                params.window = self.sequence.window.map(|w| AcqWindow { width: w.width.0, dwell: w.dwell.0 });
                stecho::seqlang::builtin(b, &params)
            }
            None => {
                let text = match (&self.sequence.source, &self.sequence.file) {
                    (Some(src), _) => src.clone(),
                    (None, Some(f)) => {
                        let path = self.base_dir.join(f);
                        std::fs::read_to_string(&path).map_err(|e| stecho::Error::Validation(format!("{}: {e}", path.display())))?
                    }
                    (None, None) => return Err(stecho::Error::Validation("no sequence".into())),
                };
                parse_program(&text)
            }
        }
    }

    pub fn t_short(&self) -> Option<f64> {
        self.analysis.t_short.map(|s| s.0).or(self.sample.t2.map(|s| s.0))
    }
}

/// Parameters of one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PointParams {
    pub index: usize,
    pub sequence: Option<Builtin>,
    pub tau: Option<f64>,
    pub t1: Option<f64>,
    pub gradient: f64,
    pub b1_sigma: f64,
    pub n: Option<usize>,
}

impl PointParams {
    pub fn sequence_name(&self) -> String {
        self.sequence.map_or_else(|| "custom".to_string(), |b| b.name().to_string())
    }

    pub fn describe(&self) -> String {
        let mut s = format!("point {} ({}", self.index, self.sequence_name());
        if let Some(t) = self.tau {
            s += &format!(", tau = {t:e} s");
        }
        if let Some(t) = self.t1 {
            s += &format!(", t1 = {t:e} s");
        }
        s += &format!(", G = {} G/cm, b1_sigma = {}", self.gradient, self.b1_sigma);
        if let Some(n) = self.n {
            s += &format!(", n = {n}");
        }
        s + ")"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"schema_version": 1, "sequence": {"builtin": "CPMG1", "tau": "200us", "n": 10}}"#;

    #[test]
    fn minimal_config_uses_pdms_defaults() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.sample.t2, Some(Seconds(1.8e-3)));
        assert_eq!(c.sample.t1, Some(Seconds(0.2)));
        assert_eq!(c.t_short(), Some(1.8e-3));
        let g = c.grid();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].tau, Some(200.0 * 1e-6));
    }

    #[test]
    fn errors_carry_field_paths() {
        let bad = r#"{"schema_version": 1, "sequence": {"builtin": "CPMG1", "tau": "200 parsecs", "n": 10}}"#;
        match ExperimentConfig::parse(bad) {
            Err(CliError::Config { path, .. }) => assert_eq!(path, "sequence.tau"),
            other => panic!("{other:?}"),
        }
        let bad = r#"{"schema_version": 1, "sequence": {"builtin": "CPMG1", "tau": "1ms"}, "sweep": {"gradient": ["1 G/cm", "-2 G/cm"]}}"#;
        match ExperimentConfig::parse(bad) {
            Err(CliError::Config { path, .. }) => assert_eq!(path, "sweep.gradient[1]"),
            other => panic!("{other:?}"),
        }
        let bad = r#"{"schema_version": 1, "sequence": {"builtin": "CPMG1", "tau": "1ms"}, "sweep": {"tau": []}}"#;
        assert!(matches!(ExperimentConfig::parse(bad), Err(CliError::Config { path, .. }) if path == "sweep.tau"));
        let bad = r#"{"schema_version": 1, "engine": "liouville", "sequence": {"builtin": "CPMG1", "tau": "1ms"}}"#;
        assert!(matches!(ExperimentConfig::parse(bad), Err(CliError::Config { path, .. }) if path == "spin_system"));
        let bad = r#"{"schema_version": 1, "sequence": {"source": "p(90,x) d(1ms) acq(1ms, 10us"}}"#;
        assert!(matches!(ExperimentConfig::parse(bad), Err(CliError::Config { path, .. }) if path == "sequence"));
    }

    #[test]
    fn grid_order_is_row_major() {
        let text = r#"{"schema_version": 1, "sequence": {"builtin": "CP2", "n": 5},
            "sweep": {"tau": ["100us", "200us"], "gradient": [0, 5, 10]}}"#;
        let g = ExperimentConfig::parse(text).unwrap().grid();
        assert_eq!(g.len(), 6);
        assert_eq!((g[1].tau, g[1].gradient), (Some(100.0 * 1e-6), 5.0));
        assert_eq!((g[3].tau, g[3].gradient), (Some(200.0 * 1e-6), 0.0));
        assert!(g.iter().enumerate().all(|(i, p)| p.index == i));
    }

    #[test]
    fn fingerprint_ignores_presentation() {
        let a = ExperimentConfig::parse(MINIMAL).unwrap();
        let mut b = a.clone();
        b.name = Some("renamed".into());
        b.output.plots = false;
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed = 2;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
