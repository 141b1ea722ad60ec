//! Agreement between a grading method and the scaled EI score.

use serde::{Deserialize, Serialize};

use super::grading::{fit_exponential, fit_quadratic, scale_ei, EiScaling, Exponential, Quadratic};
use super::{EvalError, Result};
use crate::numeric::{mean, pearson, sample_sd};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub bias: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub within: usize,
    pub n: usize,
    pub fraction: f64,
    pub means: Vec<f64>,
    pub differences: Vec<f64>,
}

/// Bias and 95% limits of agreement of `a - b` (sample SD).
///
/// A difference counts as within the limits up to a round-off slack of
/// `1e-12 (1 + |bias|)`, so constant offsets give a fraction of 1.
pub fn bland_altman(a: &[f64], b: &[f64]) -> Result<BlandAltman> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 3 {
        return Err(EvalError::TooFewSamples {
            need: 3,
            got: a.len(),
        });
    }
    let differences: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let means = a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect();
    let bias = mean(&differences);
    let sd = sample_sd(&differences);
    let half = 1.96 * sd;
    let slack = 1e-12 * (1.0 + bias.abs());
    let within = differences
        .iter()
        .filter(|d| (*d - bias).abs() <= half + slack)
        .count();
    Ok(BlandAltman {
        bias,
        sd,
        lower: bias - half,
        upper: bias + half,
        within,
        n: a.len(),
        fraction: within as f64 / a.len() as f64,
        means,
        differences,
    })
}

impl BlandAltman {
    /// Plot data with columns `mean,difference,bias,upper,lower`.
    pub fn plot_csv(&self) -> String {
        let mut out = String::from("mean,difference,bias,upper,lower\n");
        for (m, d) in self.means.iter().zip(&self.differences) {
            out.push_str(&format!(
                "{m},{d},{},{},{}\n",
                self.bias, self.upper, self.lower
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub pearson_r: f64,
    pub rmse_percent: f64,
}

/// Pearson r and RMSE as a percentage of `scale_range`.
pub fn agreement_stats(
    scores: &[f64],
    scaled_ei: &[f64],
    scale_range: f64,
) -> Result<AgreementStats> {
    if scores.len() != scaled_ei.len() {
        return Err(EvalError::LengthMismatch(scores.len(), scaled_ei.len()));
    }
    let r = pearson(scores, scaled_ei).ok_or(EvalError::ZeroVariance)?;
    let mse = scores
        .iter()
        .zip(scaled_ei)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / scores.len() as f64;
    Ok(AgreementStats {
        pearson_r: r,
        rmse_percent: mse.sqrt() / scale_range * 100.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// DB score, higher = more ambidextrous.
    Db,
    /// 4-point classifier grade, higher = more unidextrous.
    FourPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fit {
    Quadratic(Quadratic),
    Exponential(Exponential),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub method: Method,
    pub fit: Fit,
    pub scaled_ei: Vec<f64>,
    pub clamped: usize,
    pub bland_altman: BlandAltman,
    pub stats: AgreementStats,
}

/// Fits the method's curve against the EI scores, scales EI onto the score
/// axis with its inverse and measures agreement.
///
/// DB: quadratic on `(score, 100 - |EI|)`, RMSE range = largest score.
/// 4-point: exponential on `(score, |EI|)`, RMSE range = 4.
pub fn compare_with_ei(scores: &[f64], ei: &[f64], method: Method) -> Result<AgreementReport> {
    if scores.len() != ei.len() {
        return Err(EvalError::LengthMismatch(scores.len(), ei.len()));
    }
    let (fit, scaling, range) = match method {
        Method::Db => {
            let ys: Vec<f64> = ei.iter().map(|e| 100.0 - e.abs()).collect();
            let q = fit_quadratic(scores, &ys)?;
            let max = scores.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
            (Fit::Quadratic(q), EiScaling::ForDb(q), max)
        }
        Method::FourPoint => {
            let ys: Vec<f64> = ei.iter().map(|e| e.abs()).collect();
            let f = fit_exponential(scores, &ys)?;
            (Fit::Exponential(f), EiScaling::For4Point(f), 4.0)
        }
    };
    let scaled = scale_ei(ei, scaling)?;
    let scaled_ei: Vec<f64> = scaled.iter().map(|s| s.value).collect();
    Ok(AgreementReport {
        method,
        fit,
        clamped: scaled.iter().filter(|s| s.clamped).count(),
        bland_altman: bland_altman(scores, &scaled_ei)?,
        stats: agreement_stats(scores, &scaled_ei, range)?,
        scaled_ei,
    })
}
