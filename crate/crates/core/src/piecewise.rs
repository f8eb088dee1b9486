//! Exact piecewise-polynomial functions on a finite breakpoint grid.
//!
//! Every piece stores its coefficients in ascending powers of the local
//! coordinate `x - breakpoints[i]`. Integration, differentiation, scaling
//! and side-by-side concatenation are carried out on the coefficients, so no
//! quadrature is ever involved. Outside `[0, span]` the function is zero.

use crate::error::{Error, Result};

/// Highest polynomial degree the representation accepts.
pub const MAX_DEGREE: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePoly {
    breakpoints: Vec<f64>,
    pieces: Vec<Vec<f64>>,
}

fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

fn differentiate(coeffs: &[f64]) -> Vec<f64> {
    if coeffs.len() <= 1 {
        return vec![0.0];
    }
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(p, &c)| c * p as f64)
        .collect()
}

impl PiecewisePoly {
    /// Builds a function from `breakpoints` (strictly increasing, starting at 0)
    /// and one coefficient list per interval.
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Vec<f64>>) -> Result<Self> {
        if breakpoints.len() < 2 || pieces.len() + 1 != breakpoints.len() {
            return Err(Error::Domain(format!(
                "{} breakpoints cannot bound {} pieces",
                breakpoints.len(),
                pieces.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::Domain("first breakpoint must be 0".into()));
        }
        if !breakpoints.iter().all(|b| b.is_finite())
            || breakpoints.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Domain(
                "breakpoints must be finite and strictly increasing".into(),
            ));
        }
        if pieces.iter().any(|p| p.is_empty()) {
            return Err(Error::Domain(
                "every piece needs at least one coefficient".into(),
            ));
        }
        let poly = Self {
            breakpoints,
            pieces,
        };
        if poly.degree() > MAX_DEGREE {
            return Err(Error::DegreeOverflow {
                degree: poly.degree(),
                max: MAX_DEGREE,
            });
        }
        Ok(poly)
    }

    /// Polynomial `coeffs` (ascending powers of `x`) restricted to `[0, span]`.
    pub fn single(span: f64, coeffs: Vec<f64>) -> Result<Self> {
        if !(span > 0.0) {
            return Err(Error::Domain(format!("span must be positive, got {span}")));
        }
        Self::new(vec![0.0, span], vec![coeffs])
    }

    pub fn span(&self) -> f64 {
        *self.breakpoints.last().expect("at least two breakpoints")
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Vec<f64>] {
        &self.pieces
    }

    pub fn degree(&self) -> usize {
        self.pieces.iter().map(|p| p.len() - 1).max().unwrap_or(0)
    }

    /// Width of the narrowest piece.
    pub fn min_piece_width(&self) -> f64 {
        self.breakpoints
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    fn piece_index(&self, x: f64) -> usize {
        // interior breakpoints belong to the piece on their right
        let idx = self.breakpoints.partition_point(|&b| b <= x);
        idx.saturating_sub(1).min(self.pieces.len() - 1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        if !(0.0..=self.span()).contains(&x) {
            return 0.0;
        }
        let i = self.piece_index(x);
        horner(&self.pieces[i], x - self.breakpoints[i])
    }

    /// Value of piece `i` at its right end.
    pub fn piece_end_value(&self, i: usize) -> f64 {
        horner(
            &self.pieces[i],
            self.breakpoints[i + 1] - self.breakpoints[i],
        )
    }

    /// One-sided limit from the left at `x` (uses the piece ending at or after `x`).
    pub fn eval_left(&self, x: f64) -> f64 {
        if !(0.0..=self.span()).contains(&x) || x == 0.0 {
            return self.eval(x);
        }
        let idx = self.breakpoints.partition_point(|&b| b < x);
        let i = idx.saturating_sub(1).min(self.pieces.len() - 1);
        horner(&self.pieces[i], x - self.breakpoints[i])
    }

    /// Largest jump between adjacent pieces at interior breakpoints.
    pub fn max_jump(&self) -> f64 {
        (0..self.pieces.len().saturating_sub(1))
            .map(|i| {
                let left = self.piece_end_value(i);
                let right = self.pieces[i + 1][0];
                (left - right).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest absolute value over piece endpoints and a few interior samples per piece.
    pub fn sup_estimate(&self) -> f64 {
        let mut best: f64 = 0.0;
        for (i, coeffs) in self.pieces.iter().enumerate() {
            let width = self.breakpoints[i + 1] - self.breakpoints[i];
            for k in 0..=8 {
                let t = width * k as f64 / 8.0;
                best = best.max(horner(coeffs, t).abs());
            }
        }
        best
    }

    pub fn derivative(&self) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            pieces: self.pieces.iter().map(|p| differentiate(p)).collect(),
        }
    }

    pub fn nth_derivative(&self, order: usize) -> Self {
        (0..order).fold(self.clone(), |f, _| f.derivative())
    }

    /// Running integral from 0; the result is continuous and vanishes at 0.
    pub fn antiderivative(&self) -> Result<Self> {
        if self.degree() + 1 > MAX_DEGREE {
            return Err(Error::DegreeOverflow {
                degree: self.degree() + 1,
                max: MAX_DEGREE,
            });
        }
        let mut pieces = Vec::with_capacity(self.pieces.len());
        let mut acc = 0.0;
        for (i, coeffs) in self.pieces.iter().enumerate() {
            let mut integrated = Vec::with_capacity(coeffs.len() + 1);
            integrated.push(acc);
            integrated.extend(coeffs.iter().enumerate().map(|(p, &c)| c / (p + 1) as f64));
            let width = self.breakpoints[i + 1] - self.breakpoints[i];
            acc = horner(&integrated, width);
            pieces.push(integrated);
        }
        Ok(Self {
            breakpoints: self.breakpoints.clone(),
            pieces,
        })
    }

    /// Exact integral over `[0, span]`.
    pub fn integral(&self) -> f64 {
        self.pieces
            .iter()
            .enumerate()
            .map(|(i, coeffs)| {
                let width = self.breakpoints[i + 1] - self.breakpoints[i];
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(p, &c)| c * width.powi(p as i32 + 1) / (p + 1) as f64)
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            pieces: self
                .pieces
                .iter()
                .map(|p| p.iter().map(|c| c * factor).collect())
                .collect(),
        }
    }

    /// Places weighted copies of each part side by side: the i-th copy occupies
    /// `[offset_i, offset_i + span_i]` where offsets accumulate the spans.
    pub fn concat(parts: &[(f64, &PiecewisePoly)]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Domain("cannot concatenate zero parts".into()));
        }
        let mut breakpoints = vec![0.0];
        let mut pieces = Vec::new();
        let mut offset = 0.0;
        for (weight, part) in parts {
            for (i, coeffs) in part.pieces.iter().enumerate() {
                pieces.push(coeffs.iter().map(|c| c * weight).collect());
                breakpoints.push(offset + part.breakpoints[i + 1]);
            }
            offset += part.span();
        }
        Self::new(breakpoints, pieces)
    }

    /// Largest absolute slope over all pieces of a piecewise-linear (or lower) function.
    pub fn max_abs_slope(&self) -> Option<f64> {
        if self.degree() > 1 {
            return None;
        }
        Some(
            self.pieces
                .iter()
                .map(|p| p.get(1).copied().unwrap_or(0.0).abs())
                .fold(0.0, f64::max),
        )
    }
}
