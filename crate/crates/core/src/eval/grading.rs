//! 4-point grading, curve fits against the EI score and inverse scaling.

use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::numeric::solve_linear;

/// Maps an accuracy in percent linearly onto [0, 4].
pub fn accuracy_to_4point(accuracy: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&accuracy) {
        return Err(EvalError::OutOfRange(accuracy));
    }
    Ok(accuracy * 0.04)
}

/// `y = a x^2 + b x + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Quadratic {
    pub fn eval(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }

    pub fn vertex(&self) -> f64 {
        -self.b / (2.0 * self.a)
    }
}

/// `y = a e^(b x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponential {
    pub a: f64,
    pub b: f64,
}

impl Exponential {
    pub fn eval(&self, x: f64) -> f64 {
        self.a * (self.b * x).exp()
    }
}

fn distinct(xs: &[f64]) -> usize {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

fn check_pairs(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch(xs.len(), ys.len()));
    }
    Ok(())
}

/// Least squares on {x^2, x, 1} through the normal equations.
pub fn fit_quadratic(xs: &[f64], ys: &[f64]) -> Result<Quadratic> {
    check_pairs(xs, ys)?;
    if distinct(xs) < 3 {
        return Err(EvalError::RankDeficient);
    }
    let mut ata = vec![vec![0.0; 3]; 3];
    let mut aty = vec![0.0; 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let row = [x * x, x, 1.0];
        for i in 0..3 {
            aty[i] += row[i] * y;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let s = solve_linear(&ata, &aty).ok_or(EvalError::RankDeficient)?;
    Ok(Quadratic {
        a: s[0],
        b: s[1],
        c: s[2],
    })
}

/// Least squares of `ln y` on `x`.
pub fn fit_exponential(xs: &[f64], ys: &[f64]) -> Result<Exponential> {
    check_pairs(xs, ys)?;
    if let Some(&y) = ys.iter().find(|&&y| !(y > 0.0)) {
        return Err(EvalError::NonPositiveY(y));
    }
    if distinct(xs) < 2 {
        return Err(EvalError::RankDeficient);
    }
    let n = xs.len() as f64;
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let b = sxy / sxx;
    Ok(Exponential {
        a: (my - b * mx).exp(),
        b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaled {
    pub value: f64,
    /// The input was outside the invertible range and was clamped.
    pub clamped: bool,
}

/// Root of `f(x) = y` on the increasing branch (x at or below the vertex)
/// of a concave quadratic. A `y` above the maximum returns the vertex.
pub fn invert_quadratic(q: &Quadratic, y: f64) -> Result<Scaled> {
    if !(q.a < 0.0) {
        return Err(EvalError::ConvexFit(q.a));
    }
    let disc = q.b * q.b - 4.0 * q.a * (q.c - y);
    if disc < 0.0 {
        return Ok(Scaled {
            value: q.vertex(),
            clamped: true,
        });
    }
    Ok(Scaled {
        value: (-q.b + disc.sqrt()) / (2.0 * q.a),
        clamped: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EiScaling {
    /// Invert the DB fit on `100 - |EI|`.
    ForDb(Quadratic),
    /// Invert the 4-point fit on `|EI|`, clamped to at least 1.
    For4Point(Exponential),
}

/// EI scores mapped onto a method's score scale.
pub fn scale_ei(ei: &[f64], method: EiScaling) -> Result<Vec<Scaled>> {
    ei.iter()
        .map(|e| match method {
            EiScaling::ForDb(q) => invert_quadratic(&q, 100.0 - e.abs()),
            EiScaling::For4Point(f) => {
                let clamped = e.abs() < 1.0;
                Ok(Scaled {
                    value: (e.abs().max(1.0) / f.a).ln() / f.b,
                    clamped,
                })
            }
        })
        .collect()
}
