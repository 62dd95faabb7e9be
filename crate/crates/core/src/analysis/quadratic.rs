use serde::{Deserialize, Serialize};

use crate::Error;

/// `ratio = a·G² + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    /// (G/cm)⁻².
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
}

impl QuadraticFit {
    pub fn eval(&self, g: f64) -> f64 {
        self.a * g * g + self.b
    }
}

/// Least-squares fit of `(G, ratio)` points to `a·G² + b`.
pub fn fit_quadratic_gradient(points: &[(f64, f64)]) -> Result<QuadraticFit, Error> {
    if points.len() < 4 {
        return Err(Error::InsufficientData(format!("quadratic gradient fit needs at least 4 points, got {}", points.len())));
    }
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0.abs()).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::DegenerateDesign(format!("{} distinct gradient values, need 3", distinct.len())));
    }
    let n = points.len() as f64;
    let x: Vec<f64> = points.iter().map(|p| p.0 * p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let ss_res: f64 = x.iter().zip(&y).map(|(xi, yi)| (yi - (a * xi + b)).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(QuadraticFit { a, b, r_squared })
}
