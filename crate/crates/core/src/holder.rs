//! Finite-difference certification of Hölder smoothness.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::reward::RewardCurve;

/// Relative slack allowed on the Lipschitz bound.
pub const HOLDER_TOLERANCE: f64 = 1e-3;

/// Minimum grid steps per curve feature before a report is trusted.
const MIN_STEPS_PER_FEATURE: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderReport {
    pub beta: u32,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    pub grid_n: usize,
    pub max_ratio_f: f64,
    pub max_ratio_deriv: f64,
    pub tolerance: f64,
    /// False when the grid is too coarse for the curve's features.
    pub resolved: bool,
    pub pass: bool,
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Central difference estimate of `f^{(order)}(x)` with step `h`.
fn central_difference(curve: &RewardCurve, order: u32, x: f64, h: f64) -> f64 {
    if order == 0 {
        return curve.value(x);
    }
    let half = f64::from(order) / 2.0;
    let sum: f64 = (0..=order)
        .map(|i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(order, i) * curve.value(x + (half - f64::from(i)) * h)
        })
        .sum();
    sum / h.powi(order as i32)
}

fn max_consecutive_ratio(values: &[f64], h: f64) -> f64 {
    values
        .windows(2)
        .map(|w| (w[1] - w[0]).abs() / h)
        .fold(0.0, f64::max)
}

/// Checks that `f` and `f^{(beta-1)}` are both `lipschitz`-Lipschitz on `[0, 1]`.
///
/// Samples a uniform grid with step `1 / grid_n`; the derivative is estimated by
/// central differences of order `beta - 1` with the same step, restricted to grid
/// points whose stencil stays inside `[0, 1]`.
pub fn certify_holder(
    curve: &RewardCurve,
    beta: u32,
    lipschitz: f64,
    grid_n: usize,
) -> Result<HolderReport> {
    if beta == 0 {
        return Err(Error::Domain("beta must be at least 1".into()));
    }
    if grid_n < 10 * beta as usize {
        return Err(Error::Domain(format!(
            "grid_n = {grid_n} is below 10 * beta = {}",
            10 * beta
        )));
    }
    let h = 1.0 / grid_n as f64;
    let values: Vec<f64> = (0..=grid_n).map(|k| curve.value(k as f64 * h)).collect();
    let max_ratio_f = max_consecutive_ratio(&values, h);

    let order = beta - 1;
    let margin = (order as usize).div_ceil(2);
    let max_ratio_deriv = if order == 0 {
        max_ratio_f
    } else {
        let derivs: Vec<f64> = (margin..=grid_n - margin)
            .map(|k| central_difference(curve, order, k as f64 * h, h))
            .collect();
        max_consecutive_ratio(&derivs, h)
    };

    let resolved = curve.feature_width() / h >= MIN_STEPS_PER_FEATURE;
    let limit = lipschitz * (1.0 + HOLDER_TOLERANCE);
    let pass = resolved && max_ratio_f <= limit && max_ratio_deriv <= limit;
    Ok(HolderReport {
        beta,
        lipschitz,
        grid_n,
        max_ratio_f,
        max_ratio_deriv,
        tolerance: HOLDER_TOLERANCE,
        resolved,
        pass,
    })
}
