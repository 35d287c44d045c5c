//! Truncated (clamp-at-max) Pareto distribution with mean calibration.

use rand::Rng;

use crate::error::{Error, Result};

/// Default Pareto shape used when only `(mean, max)` is known.
pub const DEFAULT_SHAPE: f64 = 1.2;

/// `min(X, max_value)` where `X ~ Pareto(shape, scale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedPareto {
    pub shape: f64,
    pub scale: f64,
    pub max_value: f64,
}

impl TruncatedPareto {
    /// Calibrates the scale so that the clamped mean equals `target_mean`.
    pub fn calibrated(shape: f64, target_mean: f64, max_value: f64) -> Result<Self> {
        let scale = calibrate_truncated_pareto(shape, target_mean, max_value)?;
        Ok(Self {
            shape,
            scale,
            max_value,
        })
    }

    pub fn mean(&self) -> f64 {
        clamped_pareto_mean(self.shape, self.scale, self.max_value)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_truncated_pareto(rng, self.shape, self.scale, self.max_value)
    }

    /// Inverse-CDF transform for a given `u ∈ (0, 1]`.
    pub fn from_uniform(&self, u: f64) -> f64 {
        pareto_from_uniform(u, self.shape, self.scale, self.max_value)
    }
}

/// Closed-form `E[min(X, max_value)]` for `X ~ Pareto(shape, scale)`.
pub fn clamped_pareto_mean(shape: f64, scale: f64, max_value: f64) -> f64 {
    if scale >= max_value {
        return max_value;
    }
    // integral of x f(x) over [scale, max] plus max * P(X > max)
    let body = if (shape - 1.0).abs() < 1e-12 {
        scale * (max_value / scale).ln()
    } else {
        shape * scale.powf(shape) * (max_value.powf(1.0 - shape) - scale.powf(1.0 - shape))
            / (1.0 - shape)
    };
    body + max_value * (scale / max_value).powf(shape)
}

/// Finds the scale `x_m` whose clamped mean equals `target_mean` by bisection
/// on `(0, target_mean]`.
pub fn calibrate_truncated_pareto(shape: f64, target_mean: f64, max_value: f64) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(Error::Calibration(format!("shape must be positive, got {shape}")));
    }
    if !(target_mean > 0.0 && target_mean < max_value) {
        return Err(Error::Calibration(format!(
            "infeasible target: need 0 < mean ({target_mean}) < max ({max_value})"
        )));
    }
    let f = |scale: f64| clamped_pareto_mean(shape, scale, max_value) - target_mean;

    // The clamped mean increases monotonically in the scale, tends to 0 as the
    // scale does, and is at least the scale itself.
    let mut lo = 0.0_f64;
    let mut hi = target_mean;
    if f(hi) < 0.0 {
        return Err(Error::Calibration(format!(
            "no root in (0, {target_mean}] for shape {shape}, max {max_value}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let scale = if f(lo).abs() < f(hi).abs() { lo } else { hi };
    let residual = f(scale).abs();
    if !(residual < 1e-9) || scale <= 0.0 {
        return Err(Error::Calibration(format!(
            "bisection residual {residual:e} exceeds tolerance"
        )));
    }
    Ok(scale)
}

pub fn pareto_from_uniform(u: f64, shape: f64, scale: f64, max_value: f64) -> f64 {
    if u <= 0.0 {
        return max_value;
    }
    (scale * u.powf(-1.0 / shape)).min(max_value)
}

/// Draws `scale * U^(-1/shape)` with `U ~ uniform(0, 1]`, clamped at `max_value`.
pub fn sample_truncated_pareto<R: Rng + ?Sized>(
    rng: &mut R,
    shape: f64,
    scale: f64,
    max_value: f64,
) -> f64 {
    // random() is in [0, 1); flip it onto (0, 1].
    let u = 1.0 - rng.random::<f64>();
    pareto_from_uniform(u, shape, scale, max_value)
}
