//! Smooth bump functions and the bowl/red instance family used for lower bounds.
//!
//! The highest derivative of a bump is a neutral flock of pyramids; integrating
//! it repeatedly yields a monotone transition whose lower derivatives all
//! vanish at both ends. Bowl epochs glue two such transitions to a flat bottom.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::piecewise::PiecewisePoly;

/// Largest smoothness order the construction supports.
pub const MAX_BETA: u32 = 8;

/// Continuous tent `min(x, w - x)` on `[0, w]`.
pub fn pyramid(w: f64) -> Result<PiecewisePoly> {
    if !(w > 0.0) || !w.is_finite() {
        return Err(Error::Domain(format!(
            "pyramid width must be positive, got {w}"
        )));
    }
    let half = w / 2.0;
    PiecewisePoly::new(vec![0.0, half, w], vec![vec![0.0, 1.0], vec![half, -1.0]])
}

/// The ±1 weight vector `ν^k = ν^{k-1} ⊕ (-ν^{k-1})`, `ν^0 = [1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeutralVec {
    k: u32,
    entries: Vec<i8>,
}

impl NeutralVec {
    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn entries(&self) -> &[i8] {
        &self.entries
    }

    pub fn weights(&self) -> Vec<f64> {
        self.entries.iter().map(|&e| f64::from(e)).collect()
    }

    /// Every dyadic block of length `2^i`, `1 <= i <= k`, sums to zero.
    pub fn is_neutral(&self) -> bool {
        (1..=self.k).all(|level| {
            self.entries
                .chunks(1 << level)
                .all(|block| block.iter().map(|&e| i64::from(e)).sum::<i64>() == 0)
        })
    }
}

pub fn neutralizing_vector(k: u32) -> Result<NeutralVec> {
    if k > 30 {
        return Err(Error::Domain(format!(
            "neutralizing vector order {k} exceeds 30"
        )));
    }
    let mut entries = vec![1i8];
    for _ in 0..k {
        let negated: Vec<i8> = entries.iter().map(|e| -e).collect();
        entries.extend(negated);
    }
    Ok(NeutralVec { k, entries })
}

/// Side-by-side copies of `h`, the i-th scaled by `weights[i]`.
pub fn flock(h: &PiecewisePoly, weights: &[f64]) -> Result<PiecewisePoly> {
    if weights.is_empty() {
        return Err(Error::Domain("flock needs at least one weight".into()));
    }
    let parts: Vec<(f64, &PiecewisePoly)> = weights.iter().map(|&v| (v, h)).collect();
    PiecewisePoly::concat(&parts)
}

/// Level-`levels` iterated integral from 0.
pub fn anti_derivative(f: &PiecewisePoly, levels: usize) -> Result<PiecewisePoly> {
    (0..levels).try_fold(f.clone(), |acc, _| acc.antiderivative())
}

/// Monotone bump `g_eps` supported on `[0, eps]` with `g^{(beta-1)}` 1-Lipschitz.
///
/// For `beta >= 2` this is the `(beta-1)`-fold anti-derivative of a `ν^{beta-2}`
/// flock of pyramids of width `2^{-(beta-2)} eps`. For `beta = 1` it is the ramp `x`.
pub fn bump(beta: u32, eps: f64) -> Result<PiecewisePoly> {
    check_beta(beta)?;
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Domain(format!(
            "bump width must be positive, got {eps}"
        )));
    }
    if beta == 1 {
        return PiecewisePoly::single(eps, vec![0.0, 1.0]);
    }
    let order = beta - 2;
    let width = eps / f64::from(1u32 << order);
    let top = flock(&pyramid(width)?, &neutralizing_vector(order)?.weights())?;
    anti_derivative(&top, (beta - 1) as usize)
}

/// `C_beta(eps) = g_eps(eps) / eps^beta`.
pub fn growth_constant(beta: u32, eps: f64) -> Result<f64> {
    let g = bump(beta, eps)?;
    Ok(g.eval(eps) / eps.powi(beta as i32))
}

fn check_beta(beta: u32) -> Result<()> {
    if beta == 0 || beta > MAX_BETA {
        return Err(Error::Domain(format!(
            "beta must lie in 1..={MAX_BETA}, got {beta}"
        )));
    }
    Ok(())
}

/// Half-epoch scale `δ(β, T) = (2^{2(β+1)} C_β² T)^{-1/(2β+1)}`.
pub fn delta_for(beta: u32, horizon: u64) -> Result<f64> {
    check_beta(beta)?;
    if horizon == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    let c = growth_constant(beta, 1.0)?;
    let b = f64::from(beta);
    let base = 2f64.powf(2.0 * (b + 1.0)) * c * c * horizon as f64;
    let delta = base.powf(-1.0 / (2.0 * b + 1.0));
    if delta >= 1.0 / 6.0 {
        return Err(Error::Config(format!(
            "delta {delta:.4} >= 1/6 leaves no complete epoch; use a larger horizon than {horizon}"
        )));
    }
    Ok(delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Color {
    #[serde(rename = "r")]
    Red,
    #[serde(rename = "b")]
    Bowl,
}

impl Color {
    pub fn as_char(self) -> char {
        match self {
            Color::Red => 'r',
            Color::Bowl => 'b',
        }
    }
}

/// Per-epoch colors of a family member.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColorSeq(Vec<Color>);

impl ColorSeq {
    pub fn new(colors: Vec<Color>) -> Result<Self> {
        if colors.is_empty() {
            return Err(Error::Domain("color sequence must be nonempty".into()));
        }
        Ok(Self(colors))
    }

    pub fn uniform(color: Color, len: usize) -> Result<Self> {
        Self::new(vec![color; len])
    }

    pub fn as_slice(&self) -> &[Color] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for ColorSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|c| write!(f, "{}", c.as_char()))
    }
}

impl FromStr for ColorSeq {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let colors = s
            .chars()
            .map(|c| match c {
                'r' | 'R' => Ok(Color::Red),
                'b' | 'B' => Ok(Color::Bowl),
                other => Err(Error::Domain(format!(
                    "unknown color {other:?}; use 'r' or 'b'"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(colors)
    }
}

impl Serialize for ColorSeq {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ColorSeq {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One member of the lower-bound family: smoothness, horizon, scale and colors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilySpec {
    beta: u32,
    horizon: u64,
    delta: f64,
    epochs: usize,
    colors: ColorSeq,
    c_beta: f64,
}

impl FamilySpec {
    /// Number of complete epochs `floor(1 / (6δ))` for `(beta, horizon)`.
    pub fn epoch_count(beta: u32, horizon: u64) -> Result<usize> {
        let delta = delta_for(beta, horizon)?;
        Ok((1.0 / (6.0 * delta)).floor() as usize)
    }

    pub fn new(beta: u32, horizon: u64, colors: ColorSeq) -> Result<Self> {
        let delta = delta_for(beta, horizon)?;
        let epochs = (1.0 / (6.0 * delta)).floor() as usize;
        if colors.len() != epochs {
            return Err(Error::Config(format!(
                "family with beta={beta}, T={horizon} has {epochs} epochs but {} colors were given",
                colors.len()
            )));
        }
        let c_beta = growth_constant(beta, 1.0)?;
        Ok(Self {
            beta,
            horizon,
            delta,
            epochs,
            colors,
            c_beta,
        })
    }

    /// Pads `prefix` with red epochs up to the full epoch count.
    pub fn with_prefix(beta: u32, horizon: u64, prefix: &[Color]) -> Result<Self> {
        let epochs = Self::epoch_count(beta, horizon)?;
        if prefix.len() > epochs {
            return Err(Error::Config(format!(
                "prefix of {} colors exceeds {epochs} epochs",
                prefix.len()
            )));
        }
        let mut colors = prefix.to_vec();
        colors.resize(epochs, Color::Red);
        Self::new(beta, horizon, ColorSeq::new(colors)?)
    }

    pub fn beta(&self) -> u32 {
        self.beta
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    pub fn colors(&self) -> &ColorSeq {
        &self.colors
    }

    pub fn c_beta(&self) -> f64 {
        self.c_beta
    }

    pub fn epoch_width(&self) -> f64 {
        6.0 * self.delta
    }

    /// Value of a red epoch, also the level at every epoch boundary.
    pub fn plateau(&self) -> f64 {
        0.5 * self.c_beta * (2.0 * self.delta).powi(self.beta as i32)
    }

    /// Normalized-time interval `[x_j, x_{j+1})` of epoch `j` (0-based).
    pub fn epoch_bounds(&self, j: usize) -> (f64, f64) {
        let w = self.epoch_width();
        (j as f64 * w, (j + 1) as f64 * w)
    }
}

/// Evaluable family member; caches the bump of width `2δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyCurve {
    spec: FamilySpec,
    bump: PiecewisePoly,
    plateau: f64,
}

impl FamilyCurve {
    pub fn new(spec: FamilySpec) -> Result<Self> {
        let bump = bump(spec.beta, 2.0 * spec.delta)?;
        let plateau = spec.plateau();
        Ok(Self {
            spec,
            bump,
            plateau,
        })
    }

    pub fn spec(&self) -> &FamilySpec {
        &self.spec
    }

    pub fn bump(&self) -> &PiecewisePoly {
        &self.bump
    }

    pub fn eval(&self, x: f64) -> f64 {
        let width = self.spec.epoch_width();
        if x < 0.0 {
            return self.plateau;
        }
        let j = (x / width).floor() as usize;
        match self.spec.colors.as_slice().get(j) {
            Some(Color::Bowl) => {
                let two_delta = 2.0 * self.spec.delta;
                let u = (x - j as f64 * width).clamp(0.0, width);
                if u < two_delta {
                    self.plateau - self.bump.eval(u)
                } else if u < 2.0 * two_delta {
                    -self.plateau
                } else {
                    self.bump.eval(u - 2.0 * two_delta) - self.plateau
                }
            }
            _ => self.plateau,
        }
    }

    /// Narrowest feature, used to judge finite-difference resolution.
    pub fn feature_width(&self) -> f64 {
        self.bump.min_piece_width()
    }
}

/// Checks of the bump properties for one `(beta, eps)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructionReport {
    pub beta: u32,
    pub eps: f64,
    pub g_at_eps: f64,
    pub growth_constant: f64,
    /// `(j, g^{(j)}(0), g^{(j)}(eps))` for `j = 1..beta-1`.
    pub endpoint_derivatives: Vec<(u32, f64, f64)>,
    pub endpoint_pass: bool,
    pub min_first_derivative: f64,
    pub monotone_pass: bool,
    pub top_derivative_lipschitz: f64,
    pub lipschitz_pass: bool,
    pub neutral_pass: bool,
    pub pass: bool,
}

const MONOTONE_GRID: usize = 10_000;

pub fn verify_construction(beta: u32, eps: f64) -> Result<ConstructionReport> {
    let g = bump(beta, eps)?;
    let g_at_eps = g.eval(eps);
    let scale = g_at_eps.abs();

    let endpoint_derivatives: Vec<(u32, f64, f64)> = (1..beta)
        .map(|j| {
            let d = g.nth_derivative(j as usize);
            (j, d.eval(0.0), d.eval_left(eps))
        })
        .collect();
    let endpoint_pass = endpoint_derivatives
        .iter()
        .all(|&(_, a, b)| a.abs() <= 1e-10 * scale && b.abs() <= 1e-10 * scale);

    let first = g.derivative();
    let min_first_derivative = (0..=MONOTONE_GRID)
        .map(|i| first.eval(eps * i as f64 / MONOTONE_GRID as f64))
        .fold(f64::INFINITY, f64::min);
    let monotone_pass = min_first_derivative >= -1e-10;

    let top_derivative_lipschitz = g
        .nth_derivative((beta - 1) as usize)
        .max_abs_slope()
        .ok_or_else(|| Error::Numeric("top derivative is not piecewise linear".into()))?;
    let lipschitz_pass = top_derivative_lipschitz <= 1.0 + 1e-10;

    let neutral_pass = if beta >= 2 {
        neutralizing_vector(beta - 2)?.is_neutral()
    } else {
        true
    };

    Ok(ConstructionReport {
        beta,
        eps,
        g_at_eps,
        growth_constant: g_at_eps / eps.powi(beta as i32),
        endpoint_derivatives,
        endpoint_pass,
        min_first_derivative,
        monotone_pass,
        top_derivative_lipschitz,
        lipschitz_pass,
        neutral_pass,
        pass: endpoint_pass && monotone_pass && lipschitz_pass && neutral_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn pyramid_values() {
        let p = pyramid(1.0).unwrap();
        assert_eq!(p.eval(0.0), 0.0);
        assert_abs_diff_eq!(p.eval(0.5), 0.5);
        assert_abs_diff_eq!(p.eval(0.75), 0.25);
        assert_abs_diff_eq!(p.eval(1.0), 0.0);
        assert!(pyramid(0.0).is_err());
        assert!(pyramid(-1.0).is_err());
    }

    #[test]
    fn neutral_vectors() {
        assert_eq!(neutralizing_vector(0).unwrap().entries(), &[1]);
        assert_eq!(neutralizing_vector(1).unwrap().entries(), &[1, -1]);
        assert_eq!(neutralizing_vector(2).unwrap().entries(), &[1, -1, -1, 1]);
        for k in 0..=10 {
            let v = neutralizing_vector(k).unwrap();
            assert_eq!(v.entries().len(), 1 << k);
            assert!(v.is_neutral());
        }
        assert!(neutralizing_vector(31).is_err());
    }

    #[test]
    fn flock_examples() {
        let p = pyramid(1.0).unwrap();
        assert_eq!(flock(&p, &[1.0]).unwrap(), p);
        let f = flock(&p, &[1.0, -1.0]).unwrap();
        assert_abs_diff_eq!(f.eval(1.5), -0.5);
        assert_abs_diff_eq!(f.integral(), 0.0);
        assert!(flock(&p, &[]).is_err());
    }

    #[test]
    fn anti_derivative_examples() {
        let p = pyramid(1.0).unwrap();
        assert_eq!(anti_derivative(&p, 0).unwrap(), p);
        assert_abs_diff_eq!(
            anti_derivative(&p, 1).unwrap().eval(1.0),
            0.25,
            epsilon = 1e-15
        );
        let one = PiecewisePoly::single(1.0, vec![1.0]).unwrap();
        assert_abs_diff_eq!(
            anti_derivative(&one, 2).unwrap().eval(1.0),
            0.5,
            epsilon = 1e-15
        );
        assert!(matches!(
            anti_derivative(&one, 17),
            Err(Error::DegreeOverflow { .. })
        ));
    }

    #[test]
    fn bump_examples() {
        let g = bump(2, 1.0).unwrap();
        assert_abs_diff_eq!(g.eval(1.0), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(g.eval(0.5), 0.125, epsilon = 1e-15);
        for beta in 1..=MAX_BETA {
            for eps in [0.25, 1.0, 3.0] {
                let g = bump(beta, eps).unwrap();
                assert_eq!(g.eval(0.0), 0.0);
                assert_abs_diff_eq!(g.span(), eps, epsilon = 1e-15);
            }
        }
        assert!(bump(0, 1.0).is_err());
        assert!(bump(2, 0.0).is_err());
    }

    #[test]
    fn growth_constants() {
        assert_eq!(growth_constant(1, 0.3).unwrap(), 1.0);
        assert_eq!(growth_constant(2, 1.0).unwrap(), 0.25);
        assert_eq!(growth_constant(2, 0.5).unwrap(), 0.25);
    }

    #[test]
    fn delta_examples() {
        assert_relative_eq!(
            delta_for(1, 1 << 14).unwrap(),
            0.015625,
            max_relative = 1e-14
        );
        let t = 4096u64;
        assert_relative_eq!(
            delta_for(2, t).unwrap(),
            (4.0 * t as f64).powf(-0.2),
            max_relative = 1e-14
        );
        assert_relative_eq!(delta_for(2, t).unwrap(), 0.143587, max_relative = 1e-5);
        assert!(matches!(delta_for(2, 16), Err(Error::Config(_))));
    }

    #[test]
    fn color_parsing() {
        let c: ColorSeq = "rbRB".parse().unwrap();
        assert_eq!(
            c.as_slice(),
            &[Color::Red, Color::Bowl, Color::Red, Color::Bowl]
        );
        assert_eq!(c.to_string(), "rbrb");
        assert!("".parse::<ColorSeq>().is_err());
        assert!("rx".parse::<ColorSeq>().is_err());
    }

    #[test]
    fn family_values() {
        // beta = 2 with delta = 2^-6 needs 4T = 2^30
        let horizon = 1u64 << 28;
        let m = FamilySpec::epoch_count(2, horizon).unwrap();
        assert_eq!(m, 10);
        let spec = FamilySpec::new(2, horizon, ColorSeq::uniform(Color::Bowl, m).unwrap()).unwrap();
        assert_relative_eq!(spec.delta(), 1.0 / 64.0, max_relative = 1e-13);
        let curve = FamilyCurve::new(spec.clone()).unwrap();
        let (x0, x1) = spec.epoch_bounds(3);
        assert_relative_eq!(
            curve.eval(0.5 * (x0 + x1)),
            -1.0 / 8192.0,
            max_relative = 1e-12
        );
        for j in 0..m {
            let (x0, _) = spec.epoch_bounds(j);
            assert_relative_eq!(curve.eval(x0), spec.plateau(), max_relative = 1e-12);
        }

        let red = FamilySpec::with_prefix(2, horizon, &[]).unwrap();
        let flat = FamilyCurve::new(red.clone()).unwrap();
        for i in 0..=100 {
            assert_eq!(flat.eval(i as f64 / 100.0), red.plateau());
        }
        assert!(FamilySpec::new(2, horizon, "rb".parse().unwrap()).is_err());
    }

    #[test]
    fn verification_examples() {
        let r = verify_construction(2, 1.0).unwrap();
        assert!(r.pass);
        assert_eq!(r.endpoint_derivatives, vec![(1, 0.0, 0.0)]);

        let r = verify_construction(4, 4.0).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.endpoint_derivatives.len(), 3);

        let r = verify_construction(3, 1.0).unwrap();
        assert_eq!(r.top_derivative_lipschitz, 1.0);

        let r = verify_construction(1, 1.0).unwrap();
        assert!(r.pass);
        assert!(r.endpoint_derivatives.is_empty());
    }
}
