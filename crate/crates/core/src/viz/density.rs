//! Angular (von Mises) and planar (Gaussian) kernel density estimates.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const DEFAULT_KAPPA: f64 = 25.0;
pub const ANGLE_BINS: usize = 360;
pub const GRID_SIZE: usize = 100;
pub const GRID_EXTENT: f64 = 1.2;
/// Floor added to the curve minimum in [`DensityCurve::sharpness`].
pub const SHARPNESS_EPS: f64 = 1e-3;

/// `e^{-x} I₀(x)` for `x ≥ 0`, summing the power series in log space.
pub fn bessel_i0_scaled(x: f64) -> f64 {
    let half = x / 2.0;
    let mut log_term = -x;
    let mut sum = log_term.exp();
    let mut m = 1.0;
    loop {
        log_term += 2.0 * (half.ln() - f64::ln(m));
        let term = log_term.exp();
        sum += term;
        if term < sum * 1e-17 && m > half {
            return sum;
        }
        m += 1.0;
    }
}

/// Density sampled on `ANGLE_BINS` angles `-π + 2πk/bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub theta: Vec<f64>,
    pub density: Vec<f64>,
}

impl DensityCurve {
    /// Periodic trapezoid rule over the circle.
    pub fn integral(&self) -> f64 {
        let step = 2.0 * PI / self.theta.len() as f64;
        self.density.iter().sum::<f64>() * step
    }

    /// `max(curve) / min(curve + ε)`; large when mass piles up in clusters.
    pub fn sharpness(&self) -> f64 {
        let max = self.density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.density.iter().copied().fold(f64::INFINITY, f64::min);
        max / (min + SHARPNESS_EPS)
    }
}

pub fn angle_grid(bins: usize) -> Vec<f64> {
    (0..bins).map(|k| -PI + 2.0 * PI * k as f64 / bins as f64).collect()
}

/// Mean of von Mises kernels `exp(κ cos(θ - θᵢ)) / (2π I₀(κ))`.
pub fn vmf_density(angles: &[f64], kappa: f64) -> Result<DensityCurve> {
    if angles.len() < 2 {
        return Err(Error::InvalidArgument("vMF density needs at least 2 angles".into()));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidArgument(format!("kappa must be positive, got {kappa}")));
    }
    let theta = angle_grid(ANGLE_BINS);
    let norm = 2.0 * PI * bessel_i0_scaled(kappa) * angles.len() as f64;
    let density = theta
        .iter()
        .map(|&t| {
            angles
                .iter()
                .map(|&a| (kappa * ((t - a).cos() - 1.0)).exp())
                .sum::<f64>()
                / norm
        })
        .collect();
    Ok(DensityCurve { theta, density })
}

/// Angles of planar points, in `(-π, π]`.
pub fn angles_of(points: &[[f64; 2]]) -> Vec<f64> {
    points.iter().map(|p| p[1].atan2(p[0])).collect()
}

/// Density on a square grid, row `r` at `y = axis[r]`, column `c` at `x = axis[c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub axis: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityGrid {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.axis.len() + col]
    }
}

/// Scott's rule for two dimensions: `σ · n^{-1/6}`, with `σ` the mean of
/// the per-axis standard deviations.
pub fn scott_bandwidth(points: &[[f64; 2]]) -> f64 {
    let n = points.len() as f64;
    let sd = |c: usize| {
        let mean = points.iter().map(|p| p[c]).sum::<f64>() / n;
        (points.iter().map(|p| (p[c] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (sd(0) + sd(1)) / 2.0 * n.powf(-1.0 / 6.0)
}

/// Mean of isotropic Gaussian kernels on a `grid × grid` lattice over
/// `[-1.2, 1.2]²`; `bandwidth = None` selects Scott's rule.
pub fn gaussian_kde2d(points: &[[f64; 2]], bandwidth: Option<f64>, grid: usize) -> Result<DensityGrid> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("KDE needs at least 2 points".into()));
    }
    if grid < 2 {
        return Err(Error::InvalidArgument("KDE grid needs at least 2 nodes per axis".into()));
    }
    let h = bandwidth.unwrap_or_else(|| scott_bandwidth(points));
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")));
    }
    let axis: Vec<f64> = (0..grid)
        .map(|k| -GRID_EXTENT + 2.0 * GRID_EXTENT * k as f64 / (grid - 1) as f64)
        .collect();
    let norm = 2.0 * PI * h * h * points.len() as f64;
    let mut values = Vec::with_capacity(grid * grid);
    for &y in &axis {
        for &x in &axis {
            let s: f64 = points
                .iter()
                .map(|p| (-((x - p[0]).powi(2) + (y - p[1]).powi(2)) / (2.0 * h * h)).exp())
                .sum();
            values.push(s / norm);
        }
    }
    Ok(DensityGrid {
        axis,
        values,
        bandwidth: h,
    })
}
