//! Per-epoch sign and stationarity structure of an instance's gap function.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::policy::EpochLayout;
use crate::reward::BanditInstance;

/// Relative zero tolerance for values and slopes of the gap function.
pub const ZERO_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EpochSign {
    /// Arm 1 strictly better throughout the epoch.
    Positive,
    /// Arm 1 strictly worse throughout the epoch.
    Negative,
    /// The gap vanishes somewhere in the (closed) epoch.
    Crossing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SignStructure {
    pub epoch_labels: Vec<EpochSign>,
    pub stationary_epochs: Vec<usize>,
    /// Index distance to the nearest stationary epoch; `None` when there is none.
    pub stationary_distance: Vec<Option<usize>>,
}

impl SignStructure {
    pub fn count(&self, label: EpochSign) -> usize {
        self.epoch_labels.iter().filter(|&&l| l == label).count()
    }
}

/// Classifies every epoch of `instance` by the sign of `G(x) = μ_1(x) - μ_0(x)`.
///
/// Epochs follow [`EpochLayout`] for the instance's horizon. Each closed epoch is
/// sampled at `grid_per_epoch` evenly spaced points; slopes are central
/// differences with the grid spacing, clipped to `[0, 1]`. A value or slope within `ZERO_TOLERANCE` times the gap's
/// scale counts as zero.
pub fn sign_structure(
    instance: &BanditInstance,
    delta: f64,
    grid_per_epoch: usize,
) -> Result<SignStructure> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!(
            "epoch length must lie in (0, 1), got {delta}"
        )));
    }
    if grid_per_epoch < 2 {
        return Err(Error::Domain(
            "need at least 2 grid points per epoch".into(),
        ));
    }
    let layout = EpochLayout::new(instance.horizon(), delta)?;
    let epochs = layout.epochs();

    let samples: Vec<Vec<f64>> = (0..epochs)
        .map(|i| {
            let (a, b) = layout.normalized(i);
            (0..grid_per_epoch)
                .map(|k| a + (b - a) * k as f64 / (grid_per_epoch - 1) as f64)
                .collect()
        })
        .collect();

    let scale = samples
        .iter()
        .flatten()
        .map(|&x| instance.gap(x).abs())
        .fold(0.0, f64::max);
    let value_tol = ZERO_TOLERANCE * scale.max(f64::MIN_POSITIVE);

    let mut labels = Vec::with_capacity(epochs);
    let mut stationary = Vec::new();
    for (i, xs) in samples.iter().enumerate() {
        let values: Vec<f64> = xs.iter().map(|&x| instance.gap(x)).collect();
        let has_zero = values.iter().any(|v| v.abs() <= value_tol);
        let has_pos = values.iter().any(|&v| v > value_tol);
        let has_neg = values.iter().any(|&v| v < -value_tol);
        labels.push(match (has_zero || (has_pos && has_neg), has_pos) {
            (true, _) => EpochSign::Crossing,
            (false, true) => EpochSign::Positive,
            (false, false) => EpochSign::Negative,
        });

        let h = xs[1] - xs[0];
        let slope_tol = ZERO_TOLERANCE * scale.max(f64::MIN_POSITIVE) / h.max(f64::MIN_POSITIVE);
        let slopes: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let (lo, hi) = ((x - 0.5 * h).max(0.0), (x + 0.5 * h).min(1.0));
                (instance.gap(hi) - instance.gap(lo)) / (hi - lo)
            })
            .collect();
        let flat = slopes.iter().any(|d| d.abs() <= slope_tol);
        let turns = slopes.iter().any(|&d| d > slope_tol) && slopes.iter().any(|&d| d < -slope_tol);
        if flat || turns {
            stationary.push(i);
        }
    }

    let stationary_distance = (0..epochs)
        .map(|i| stationary.iter().map(|&s| s.abs_diff(i)).min())
        .collect();
    Ok(SignStructure {
        epoch_labels: labels,
        stationary_epochs: stationary,
        stationary_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::piecewise::PiecewisePoly;
    use crate::reward::{RewardCurve, SinusoidalParams};
    use EpochSign::*;

    fn linear_instance() -> BanditInstance {
        let poly = PiecewisePoly::single(1.0, vec![-0.3, 1.0]).unwrap();
        BanditInstance::one_armed(RewardCurve::piecewise(poly).unwrap(), 1000).unwrap()
    }

    #[test]
    fn linear_gap() {
        let s = sign_structure(&linear_instance(), 0.2, 64).unwrap();
        assert_eq!(
            s.epoch_labels,
            vec![Negative, Crossing, Positive, Positive, Positive]
        );
        assert!(s.stationary_epochs.is_empty());
        assert!(s.stationary_distance.iter().all(Option::is_none));
    }

    #[test]
    fn constant_gap() {
        let inst = BanditInstance::one_armed(RewardCurve::constant(0.5).unwrap(), 1000).unwrap();
        let s = sign_structure(&inst, 0.2, 16).unwrap();
        assert_eq!(s.epoch_labels, vec![Positive; 5]);
        assert_eq!(s.stationary_epochs, vec![0, 1, 2, 3, 4]);
        assert_eq!(s.stationary_distance, vec![Some(0); 5]);
    }

    #[test]
    fn sine_gap_crossings() {
        // arm 1 minus a constant arm 0 equal to A gives G = -A sin(2π 2.5 x)
        let p = SinusoidalParams::new(0.1, 2.5, 0.0);
        let inst = crate::reward::sinusoidal_instance(p, 1000).unwrap();
        let s = sign_structure(&inst, 0.1, 101).unwrap();
        for (i, label) in s.epoch_labels.iter().enumerate() {
            let (a, b) = (i as f64 / 10.0, (i + 1) as f64 / 10.0);
            let contains_zero = (0..=5).any(|k| {
                let z = k as f64 / 5.0;
                a - 1e-12 <= z && z <= b + 1e-12
            });
            assert_eq!(*label == Crossing, contains_zero, "epoch {i}");
        }
        // stationary points at x = 0.1 + 0.2 k sit on shared boundaries, so every epoch has one
        assert_eq!(s.stationary_epochs, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn sine_gap_with_interior_crossings() {
        let p = SinusoidalParams::new(0.1, 2.5, 0.3);
        let inst = crate::reward::sinusoidal_instance(p, 1000).unwrap();
        let s = sign_structure(&inst, 0.1, 201).unwrap();
        // zeros of sin(5πx + 0.3) inside [0, 1]
        let zeros: Vec<f64> = (1..=5)
            .map(|k| (k as f64 * std::f64::consts::PI - 0.3) / (5.0 * std::f64::consts::PI))
            .collect();
        for (i, label) in s.epoch_labels.iter().enumerate() {
            let (a, b) = (i as f64 / 10.0, (i + 1) as f64 / 10.0);
            let expect = zeros.iter().any(|&z| a <= z && z <= b);
            assert_eq!(*label == Crossing, expect, "epoch {i}");
        }
        assert_eq!(s.stationary_epochs.len(), 5);
    }

    #[test]
    fn refining_grid_keeps_labels() {
        let p = SinusoidalParams::new(0.05, 3.7, 1.3);
        let inst = crate::reward::sinusoidal_instance(p, 5000).unwrap();
        let coarse = sign_structure(&inst, 0.05, 50).unwrap();
        let fine = sign_structure(&inst, 0.05, 100).unwrap();
        assert_eq!(coarse.epoch_labels, fine.epoch_labels);
    }

    #[test]
    fn rejects_bad_delta() {
        assert!(sign_structure(&linear_instance(), 0.0, 10).is_err());
        assert!(sign_structure(&linear_instance(), 1.0, 10).is_err());
    }
}
