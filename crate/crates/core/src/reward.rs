//! Mean-reward curves on normalized time and the instances built from them.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::construction::{FamilyCurve, FamilySpec};
use crate::error::{Error, Result};
use crate::piecewise::PiecewisePoly;

/// Grid used to check `|μ| <= 1` when a curve is constructed.
const BOUND_CHECK_GRID: usize = 10_000;

/// `x ↦ -A sin(2πνx + φ) + A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidalParams {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl SinusoidalParams {
    pub fn new(amplitude: f64, frequency: f64, phase: f64) -> Self {
        Self {
            amplitude,
            frequency,
            phase,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        -self.amplitude * (2.0 * PI * self.frequency * x + self.phase).sin() + self.amplitude
    }

    /// `sup |μ'| = |A| 2πν`.
    pub fn lipschitz(&self) -> f64 {
        self.amplitude.abs() * 2.0 * PI * self.frequency
    }

    /// `sup |μ''| = |A| (2πν)²`.
    pub fn second_derivative_bound(&self) -> f64 {
        self.amplitude.abs() * (2.0 * PI * self.frequency).powi(2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CurveKind {
    Constant(f64),
    Sinusoidal(SinusoidalParams),
    /// Evaluated directly on normalized time; zero beyond the polynomial's span.
    Piecewise(PiecewisePoly),
    Family(FamilyCurve),
}

/// A mean-reward function `μ: [0, 1] → [-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardCurve {
    kind: CurveKind,
}

impl RewardCurve {
    fn checked(kind: CurveKind) -> Result<Self> {
        let curve = Self { kind };
        for i in 0..=BOUND_CHECK_GRID {
            let x = i as f64 / BOUND_CHECK_GRID as f64;
            let v = curve.value(x);
            if !v.is_finite() || v.abs() > 1.0 {
                return Err(Error::Domain(format!(
                    "curve value {v} at x = {x} lies outside [-1, 1]"
                )));
            }
        }
        Ok(curve)
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::checked(CurveKind::Constant(c))
    }

    pub fn sinusoidal(params: SinusoidalParams) -> Result<Self> {
        Self::checked(CurveKind::Sinusoidal(params))
    }

    pub fn piecewise(poly: PiecewisePoly) -> Result<Self> {
        Self::checked(CurveKind::Piecewise(poly))
    }

    pub fn family(spec: FamilySpec) -> Result<Self> {
        Self::checked(CurveKind::Family(FamilyCurve::new(spec)?))
    }

    pub fn kind(&self) -> &CurveKind {
        &self.kind
    }

    /// `μ(x)` on normalized time.
    pub fn value(&self, x: f64) -> f64 {
        match &self.kind {
            CurveKind::Constant(c) => *c,
            CurveKind::Sinusoidal(p) => p.value(x),
            CurveKind::Piecewise(poly) => poly.eval(x),
            CurveKind::Family(f) => f.eval(x),
        }
    }

    /// Shortest length over which the curve changes character.
    pub fn feature_width(&self) -> f64 {
        match &self.kind {
            CurveKind::Constant(_) => f64::INFINITY,
            CurveKind::Sinusoidal(p) if p.frequency == 0.0 || p.amplitude == 0.0 => f64::INFINITY,
            CurveKind::Sinusoidal(p) => 1.0 / p.frequency.abs(),
            CurveKind::Piecewise(poly) => poly.min_piece_width(),
            CurveKind::Family(f) => f.feature_width(),
        }
    }

    /// Writes `x,value` samples at `x = i / resolution`, `i = 0..=resolution`.
    pub fn write_csv<W: Write>(&self, resolution: usize, out: W) -> Result<()> {
        if resolution == 0 {
            return Err(Error::Domain("resolution must be at least 1".into()));
        }
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["x", "value"])?;
        for i in 0..=resolution {
            let x = i as f64 / resolution as f64;
            writer.write_record([x.to_string(), self.value(x).to_string()])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Mean reward of `curve` at round `t` of a horizon `T`: `μ(t / T)`.
pub fn eval_mean(curve: &RewardCurve, t: u64, horizon: u64) -> Result<f64> {
    if t == 0 || t > horizon {
        return Err(Error::Domain(format!("round {t} outside 1..={horizon}")));
    }
    Ok(curve.value(t as f64 / horizon as f64))
}

/// Arms indexed from 0 plus the horizon they are played over.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance {
    arms: Vec<RewardCurve>,
    horizon: u64,
}

impl BanditInstance {
    pub fn new(arms: Vec<RewardCurve>, horizon: u64) -> Result<Self> {
        if arms.len() < 2 {
            return Err(Error::Config(format!(
                "an instance needs at least 2 arms, got {}",
                arms.len()
            )));
        }
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        Ok(Self { arms, horizon })
    }

    /// Static arm 0 with mean 0 and a varying arm 1.
    pub fn one_armed(curve: RewardCurve, horizon: u64) -> Result<Self> {
        Self::new(vec![RewardCurve::constant(0.0)?, curve], horizon)
    }

    pub fn arms(&self) -> &[RewardCurve] {
        &self.arms
    }

    pub fn arm_count(&self) -> usize {
        self.arms.len()
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn mean(&self, arm: usize, t: u64) -> Result<f64> {
        let curve = self
            .arms
            .get(arm)
            .ok_or_else(|| Error::Domain(format!("arm {arm} out of range")))?;
        eval_mean(curve, t, self.horizon)
    }

    /// Gap `μ_1 - μ_0` on normalized time (positive where arm 1 is better).
    pub fn gap(&self, x: f64) -> f64 {
        self.arms[1].value(x) - self.arms[0].value(x)
    }

    /// Level of arm 0 when it is constant.
    pub fn static_level(&self) -> Option<f64> {
        match self.arms[0].kind() {
            CurveKind::Constant(c) => Some(*c),
            _ => None,
        }
    }
}

/// Instance with arms `[Constant(A), Sinusoidal(A, ν, φ)]`.
pub fn sinusoidal_instance(params: SinusoidalParams, horizon: u64) -> Result<BanditInstance> {
    BanditInstance::new(
        vec![
            RewardCurve::constant(params.amplitude)?,
            RewardCurve::sinusoidal(params)?,
        ],
        horizon,
    )
}

/// Draws `ν ~ U[2.5, 5]`, `A ~ N(0.25 ν^{-2}, var 0.001)`, `φ ~ U[0, 2π]` in that order.
pub fn sample_sinusoidal_params<R: Rng + ?Sized>(rng: &mut R) -> SinusoidalParams {
    let frequency = Uniform::new_inclusive(2.5, 5.0).sample(rng);
    let amplitude = Normal::new(0.25 / (frequency * frequency), 0.001f64.sqrt())
        .expect("finite normal parameters")
        .sample(rng);
    let phase = Uniform::new_inclusive(0.0, 2.0 * PI).sample(rng);
    SinusoidalParams {
        amplitude,
        frequency,
        phase,
    }
}

pub fn sample_sinusoidal_instance<R: Rng + ?Sized>(
    rng: &mut R,
    horizon: u64,
) -> Result<BanditInstance> {
    sinusoidal_instance(sample_sinusoidal_params(rng), horizon)
}
