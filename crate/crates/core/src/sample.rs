//! Sample description: spin packets, their offset and flip-angle
//! distributions, relaxation, and the applied field gradient.

use serde::{Deserialize, Serialize};

use crate::magnetization::{Magnetization, Relaxation};
use crate::Error;

/// Proton gyromagnetic ratio in rad/(s·G).
pub const GAMMA_1H: f64 = 2.675_221_874_4e4;

/// One spin packet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Isochromat {
    /// Position along the gradient axis (cm).
    pub z: f64,
    /// Intrinsic resonance offset (rad/s).
    pub delta_omega: f64,
    /// Flip-angle multiplier; a nominal angle θ becomes `b1_scale·θ`.
    pub b1_scale: f64,
    pub weight: f64,
    pub m: Magnetization,
}

impl Isochromat {
    pub fn new(z: f64, delta_omega: f64, b1_scale: f64, weight: f64) -> Self {
        Self { z, delta_omega, b1_scale, weight, m: Magnetization::EQUILIBRIUM }
    }

    /// Total precession frequency under the gradient: `δω + γ·G·z`.
    #[inline]
    pub fn offset(&self, gradient: &GradientSpec, gamma: f64) -> f64 {
        self.delta_omega + gradient.omega_at(self.z, gamma)
    }
}

/// Distribution of intrinsic resonance offsets (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OffsetDistribution {
    /// Every packet at `omega0`.
    Delta { omega0: f64 },
    /// Flat over `[-half_width, half_width]`.
    Uniform { half_width: f64 },
    Gaussian { sigma: f64 },
    /// Cauchy line with half width at half maximum `gamma`.
    Lorentzian { gamma: f64 },
}

impl OffsetDistribution {
    /// Inverse cumulative distribution at `u ∈ (0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            OffsetDistribution::Delta { omega0 } => omega0,
            OffsetDistribution::Uniform { half_width } => half_width * (2.0 * u - 1.0),
            OffsetDistribution::Gaussian { sigma } => sigma * standard_normal_quantile(u),
            OffsetDistribution::Lorentzian { gamma } => {
                gamma * (std::f64::consts::PI * (u - 0.5)).tan()
            }
        }
    }

    fn validate(&self) -> Result<(), Error> {
        let (name, value) = match *self {
            OffsetDistribution::Delta { omega0 } => ("omega0", if omega0.is_finite() { 1.0 } else { f64::NAN }),
            OffsetDistribution::Uniform { half_width } => ("half_width", half_width),
            OffsetDistribution::Gaussian { sigma } => ("sigma", sigma),
            OffsetDistribution::Lorentzian { gamma } => ("gamma", gamma),
        };
        if value > 0.0 && value.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidSample(format!("offset distribution parameter {name} must be positive and finite")))
        }
    }
}

pub(crate) fn standard_normal_quantile(u: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(u)
}

/// Static description from which an ensemble is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub n_isochromats: usize,
    pub offsets: OffsetDistribution,
    /// `[z_min, z_max]` in cm, uniformly populated.
    pub z_range: [f64; 2],
    /// Polynomial coefficients of the flip-angle scale in the normalized
    /// coordinate `u = 2(z - z_mid)/(z_max - z_min) ∈ [-1, 1]`, lowest order
    /// first.
    pub b1_profile: Vec<f64>,
    /// Relative width of an additional Gaussian flip-angle spread,
    /// independent of position.
    #[serde(default)]
    pub b1_sigma: f64,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    /// Gyromagnetic ratio in rad/(s·G).
    pub gamma: f64,
}

impl Default for SampleSpec {
    /// PDMS-like proton sample in a 1 cm coil: T2 = 1.8 ms, T1 = 200 ms,
    /// a Lorentzian intrinsic line giving T2* ≈ 0.6 ms, and a quadratic B1
    /// profile drooping 5% from center to edge.
    fn default() -> Self {
        Self {
            n_isochromats: 20_000,
            offsets: OffsetDistribution::Lorentzian { gamma: 1.1e3 },
            z_range: [-0.5, 0.5],
            b1_profile: vec![1.0, 0.0, -0.05],
            b1_sigma: 0.0,
            t1: Some(0.2),
            t2: Some(1.8e-3),
            gamma: GAMMA_1H,
        }
    }
}

impl SampleSpec {
    pub fn relaxation(&self) -> Relaxation {
        Relaxation::new(self.t1, self.t2)
    }

    /// Flip-angle scale from the deterministic profile at position `z`.
    pub fn b1_at(&self, z: f64) -> f64 {
        let [lo, hi] = self.z_range;
        let u = if hi > lo { 2.0 * (z - 0.5 * (lo + hi)) / (hi - lo) } else { 0.0 };
        self.b1_profile.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.n_isochromats == 0 {
            return Err(Error::InvalidSample("n_isochromats must be at least 1".into()));
        }
        self.offsets.validate()?;
        let [lo, hi] = self.z_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidSample("z_range must satisfy z_min <= z_max".into()));
        }
        if self.b1_profile.is_empty() {
            return Err(Error::InvalidSample("b1_profile needs at least one coefficient".into()));
        }
        if !(self.b1_sigma >= 0.0 && self.b1_sigma.is_finite()) {
            return Err(Error::InvalidSample("b1_sigma must be non-negative".into()));
        }
        for (name, t) in [("t1", self.t1), ("t2", self.t2)] {
            if let Some(t) = t {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(Error::InvalidSample(format!("{name} must be positive")));
                }
            }
        }
        // Physical regime: T2 <= 2·T1 keeps |M| bounded by M0.
        match (self.t1, self.t2) {
            (Some(t1), Some(t2)) if t2 > 2.0 * t1 => {
                return Err(Error::InvalidSample("relaxation requires t1 >= t2/2".into()))
            }
            (Some(_), None) => return Err(Error::InvalidSample("finite t1 requires finite t2 (t1 >= t2/2)".into())),
            _ => {}
        }
        if !(self.gamma.is_finite() && self.gamma != 0.0) {
            return Err(Error::InvalidSample("gamma must be finite and nonzero".into()));
        }
        Ok(())
    }
}

/// Constant field gradient along z (G/cm).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GradientSpec {
    pub g: f64,
}

impl GradientSpec {
    pub const OFF: GradientSpec = GradientSpec { g: 0.0 };

    pub fn new(g: f64) -> Result<Self, Error> {
        if g >= 0.0 && g.is_finite() {
            Ok(Self { g })
        } else {
            Err(Error::InvalidGradient(g))
        }
    }

    /// `ω_G(z) = γ·G·z`.
    #[inline]
    pub fn omega_at(&self, z: f64, gamma: f64) -> f64 {
        gamma * self.g * z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_profile_droops_five_percent() {
        let s = SampleSpec::default();
        assert_eq!(s.b1_at(0.0), 1.0);
        assert!((s.b1_at(0.5) - 0.95).abs() < 1e-15);
        assert!((s.b1_at(-0.5) - 0.95).abs() < 1e-15);
        s.validate().unwrap();
    }

    #[test]
    fn rejects_unphysical_relaxation() {
        let s = SampleSpec { t1: Some(1e-3), t2: Some(3e-3), ..SampleSpec::default() };
        assert!(s.validate().is_err());
        let s = SampleSpec { t1: Some(1e-3), t2: None, ..SampleSpec::default() };
        assert!(s.validate().is_err());
        let s = SampleSpec { t1: None, t2: Some(1e-3), ..SampleSpec::default() };
        s.validate().unwrap();
    }

    #[test]
    fn rejects_nonpositive_widths() {
        let s = SampleSpec { offsets: OffsetDistribution::Gaussian { sigma: 0.0 }, ..SampleSpec::default() };
        assert!(s.validate().is_err());
        assert!(GradientSpec::new(-1.0).is_err());
    }

    #[test]
    fn quantiles() {
        let u = OffsetDistribution::Uniform { half_width: 10.0 };
        assert_eq!(u.quantile(0.5), 0.0);
        assert_eq!(u.quantile(0.75), 5.0);
        let l = OffsetDistribution::Lorentzian { gamma: 2.0 };
        assert!((l.quantile(0.75) - 2.0).abs() < 1e-12);
        let g = OffsetDistribution::Gaussian { sigma: 3.0 };
        assert!((g.quantile(0.841_344_746_068_542_9) - 3.0).abs() < 1e-8);
    }
}
