//! Pairwise-distance distribution of uniform points on the unit sphere.
//!
//! For two points drawn uniformly from `S^{n-1}` the distance `d = ‖x - y‖`
//! has density
//!
//! ```text
//! q(d) ∝ d^(n-2) · (1 - d²/4)^((n-3)/2),   0 < d < 2
//! ```
//!
//! which concentrates around `√2` as `n` grows. [`SphereDensity`] normalizes
//! this numerically and evaluates it in log space, since at `n = 128` the
//! unnormalized value underflows long before the support boundary.
//! [`SamplingWeightConfig`] turns the inverse density into the clipped
//! weights used by distance-weighted negative sampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;

const QUAD_PANELS: usize = 256;
const QUAD_TOL: f64 = 1e-13;

/// Normalized density of pairwise distances on `S^{dim-1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereDensity {
    dim: usize,
    /// `ln` of the normalizing constant.
    log_norm: f64,
}

impl SphereDensity {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 3 {
            return Err(Error::InvalidDimension { dim, min: 3 });
        }
        // Integrate relative to the peak so large `dim` does not underflow.
        let peak = log_unnormalized(dim, mode_for(dim));
        let z = adaptive_simpson(
            |d| (log_unnormalized(dim, d) - peak).exp(),
            0.0,
            2.0,
            QUAD_PANELS,
            QUAD_TOL,
        );
        Ok(Self {
            dim,
            log_norm: -(z.ln() + peak),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm_const(&self) -> f64 {
        self.log_norm.exp()
    }

    /// `ln q(d)`; `-inf` outside the open support `(0, 2)`.
    pub fn log_density(&self, d: f64) -> f64 {
        if !(d > 0.0 && d < 2.0) {
            return f64::NEG_INFINITY;
        }
        self.log_norm + log_unnormalized(self.dim, d)
    }

    pub fn density(&self, d: f64) -> f64 {
        self.log_density(d).exp()
    }

    /// Location of the density maximum.
    pub fn mode(&self) -> f64 {
        mode_for(self.dim)
    }

    /// `P(D ≤ d)` by direct quadrature.
    pub fn cdf(&self, d: f64) -> f64 {
        if d <= 0.0 {
            return 0.0;
        }
        if d >= 2.0 {
            return 1.0;
        }
        let panels = ((d / 2.0) * QUAD_PANELS as f64).ceil() as usize;
        adaptive_simpson(|t| self.density(t), 0.0, d, panels, QUAD_TOL).clamp(0.0, 1.0)
    }

    /// Tabulated CDF for fast repeated evaluation (KS tests, quantiles).
    pub fn cdf_table(&self, cells: usize) -> DistanceCdf {
        let cells = cells.max(2);
        let step = 2.0 / cells as f64;
        let mut values = Vec::with_capacity(cells + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for k in 0..cells {
            let lo = step * k as f64;
            acc += adaptive_simpson(|t| self.density(t), lo, lo + step, 1, QUAD_TOL / cells as f64);
            values.push(acc);
        }
        // Absorb the residual quadrature error so the table ends at exactly 1.
        let total = acc;
        for v in &mut values {
            *v /= total;
        }
        DistanceCdf { step, values }
    }
}

fn log_unnormalized(dim: usize, d: f64) -> f64 {
    let n = dim as f64;
    let radial = (n - 2.0) * d.ln();
    if dim == 3 {
        // (1 - d²/4)^0 = 1, including at d = 2.
        return radial;
    }
    radial + 0.5 * (n - 3.0) * (1.0 - 0.25 * d * d).ln()
}

fn mode_for(dim: usize) -> f64 {
    if dim <= 3 {
        return 2.0;
    }
    let n = dim as f64;
    2.0 * ((n - 2.0) / (2.0 * n - 5.0)).sqrt()
}

/// High-dimensional normal limit of the distance distribution.
///
/// Returns `(mean, variance)` = `(√2, 1/(2n))`. The second component is read
/// as a variance.
pub fn gaussian_approximation(dim: usize) -> (f64, f64) {
    (std::f64::consts::SQRT_2, 1.0 / (2.0 * dim as f64))
}

/// Piecewise-linear CDF on a uniform grid over `[0, 2]`.
#[derive(Debug, Clone)]
pub struct DistanceCdf {
    step: f64,
    values: Vec<f64>,
}

impl DistanceCdf {
    pub fn eval(&self, d: f64) -> f64 {
        if d <= 0.0 {
            return 0.0;
        }
        if d >= 2.0 {
            return 1.0;
        }
        let pos = d / self.step;
        let k = (pos.floor() as usize).min(self.values.len() - 2);
        let frac = pos - k as f64;
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }

    /// Smallest grid-interpolated `d` with `cdf(d) ≥ p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let k = self.values.partition_point(|&v| v < p);
        if k == 0 {
            return 0.0;
        }
        if k >= self.values.len() {
            return 2.0;
        }
        let (lo, hi) = (self.values[k - 1], self.values[k]);
        let frac = if hi > lo { (p - lo) / (hi - lo) } else { 0.0 };
        self.step * ((k - 1) as f64 + frac)
    }
}

/// Clipping parameters for inverse-density sampling weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingWeightConfig {
    /// Upper cap `λ` on any weight.
    pub lambda_clip: f64,
    pub d_floor: f64,
    pub d_ceil: f64,
}

impl SamplingWeightConfig {
    pub const DEFAULT_FLOOR: f64 = 0.5;
    pub const DEFAULT_CEIL: f64 = 1.4;

    pub fn new(lambda_clip: f64, d_floor: f64, d_ceil: f64) -> Result<Self> {
        if !(lambda_clip > 0.0) {
            return Err(Error::param(
                "lambda_clip",
                format!("must be positive, got {lambda_clip}"),
            ));
        }
        if !(d_floor > 0.0 && d_floor < 2.0) {
            return Err(Error::param("d_floor", format!("must lie in (0, 2), got {d_floor}")));
        }
        if !(d_ceil > d_floor && d_ceil < 2.0) {
            return Err(Error::param(
                "d_ceil",
                format!("must lie in (d_floor, 2), got {d_ceil} with d_floor {d_floor}"),
            ));
        }
        Ok(Self {
            lambda_clip,
            d_floor,
            d_ceil,
        })
    }

    /// Clamp bounds as given; `λ` defaults to the weight at `d_floor`, so the
    /// floor itself is exactly at the cap.
    pub fn with_bounds(density: &SphereDensity, d_floor: f64, d_ceil: f64) -> Result<Self> {
        let probe = Self::new(f64::MAX, d_floor, d_ceil)?;
        let lambda = (-density.log_density(probe.d_floor)).exp();
        Self::new(lambda.min(f64::MAX), d_floor, d_ceil)
    }

    pub fn for_density(density: &SphereDensity) -> Self {
        Self::with_bounds(density, Self::DEFAULT_FLOOR, Self::DEFAULT_CEIL).expect("default clamp bounds are valid")
    }
}

/// `ln min(λ, 1/q(clamp(d)))`.
pub fn log_sampling_weight(density: &SphereDensity, cfg: &SamplingWeightConfig, d: f64) -> f64 {
    let clamped = d.clamp(cfg.d_floor, cfg.d_ceil);
    let inverse = -density.log_density(clamped);
    inverse.min(cfg.lambda_clip.ln())
}

pub fn sampling_weight(density: &SphereDensity, cfg: &SamplingWeightConfig, d: f64) -> f64 {
    let clamped = d.clamp(cfg.d_floor, cfg.d_ceil);
    let inverse = -density.log_density(clamped);
    if inverse >= cfg.lambda_clip.ln() {
        cfg.lambda_clip
    } else {
        inverse.exp()
    }
}
