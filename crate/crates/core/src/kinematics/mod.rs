//! Filtering, differentiation and stroke segmentation.
//!
//! A trial is low-pass filtered, its vertical velocity is computed and
//! mean-corrected over the whole trial, and strokes are cut at the sign
//! changes of that velocity. Consecutive strokes share their boundary
//! sample.

mod filter;

pub use filter::{butterworth_lowpass, butterworth_sections, Biquad};

use thiserror::Error;

use crate::ingest::{PenSample, Trial, TrialKey};

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("cutoff {cutoff_hz} Hz must lie in (0, {nyquist_hz}) Hz")]
    CutoffOutOfRange { cutoff_hz: f64, nyquist_hz: f64 },
    #[error("filter order {0} must be even and positive")]
    InvalidOrder(usize),
    #[error("signal has {len} samples, need at least {need}")]
    SignalTooShort { len: usize, need: usize },
    #[error("trial has {len} samples, need at least {need}")]
    TrialTooShort { len: usize, need: usize },
}

/// Uniformly sampled real series.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub values: Vec<f64>,
    pub sample_rate_hz: f64,
}

impl Signal {
    pub fn new(values: Vec<f64>, sample_rate_hz: f64) -> Self {
        Signal {
            values,
            sample_rate_hz,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Central differences inside, one-sided differences at both ends, scaled
/// to units per second.
pub fn differentiate(signal: &Signal) -> Result<Signal, KinematicsError> {
    let v = &signal.values;
    let n = v.len();
    if n < 3 {
        return Err(KinematicsError::SignalTooShort { len: n, need: 3 });
    }
    let fs = signal.sample_rate_hz;
    let mut out = Vec::with_capacity(n);
    out.push((v[1] - v[0]) * fs);
    out.extend(v.windows(3).map(|w| (w[2] - w[0]) * 0.5 * fs));
    out.push((v[n - 1] - v[n - 2]) * fs);
    Ok(Signal::new(out, fs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentConfig {
    pub cutoff_hz: f64,
    pub order: usize,
    pub zero_phase: bool,
    pub min_stroke_samples: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            cutoff_hz: 15.0,
            order: 4,
            zero_phase: true,
            min_stroke_samples: 4,
        }
    }
}

/// Whole-trial channels after filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialKinematics {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub ax: Vec<f64>,
    pub ay: Vec<f64>,
    /// Vertical jerk.
    pub jy: Vec<f64>,
    /// Jerk magnitude `sqrt(jx^2 + jy^2)`.
    pub jerk: Vec<f64>,
    /// `vy - mean(vy)` over the whole trial.
    pub vy_corrected: Vec<f64>,
}

/// A slice of a trial between two vertical-velocity zero crossings.
///
/// `start` and `end` are inclusive sample indices; samples carry the
/// filtered positions with the original times and pressures. The derived
/// channels are aligned with `samples`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stroke {
    pub key: TrialKey,
    pub start: usize,
    pub end: usize,
    pub samples: Vec<PenSample>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub ax: Vec<f64>,
    pub ay: Vec<f64>,
    pub jy: Vec<f64>,
    pub jerk: Vec<f64>,
}

impl Stroke {
    /// Number of samples, boundaries included.
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Builds a stroke directly from (already smooth) samples, deriving the
    /// velocity, acceleration and jerk channels without filtering.
    pub fn from_samples(
        key: TrialKey,
        samples: Vec<PenSample>,
        sample_rate_hz: f64,
    ) -> Result<Stroke, KinematicsError> {
        let n = samples.len();
        let x = Signal::new(samples.iter().map(|s| s.x).collect(), sample_rate_hz);
        let y = Signal::new(samples.iter().map(|s| s.y).collect(), sample_rate_hz);
        let vx = differentiate(&x)?;
        let vy = differentiate(&y)?;
        let ax = differentiate(&vx)?;
        let ay = differentiate(&vy)?;
        let jx = differentiate(&ax)?;
        let jy = differentiate(&ay)?;
        let jerk = jx
            .values
            .iter()
            .zip(&jy.values)
            .map(|(a, b)| a.hypot(*b))
            .collect();
        Ok(Stroke {
            key,
            start: 0,
            end: n - 1,
            samples,
            vx: vx.values,
            vy: vy.values,
            ax: ax.values,
            ay: ay.values,
            jy: jy.values,
            jerk,
        })
    }
}

/// Filters the trial and computes all derivative channels.
pub fn trial_kinematics(
    trial: &Trial,
    config: &SegmentConfig,
) -> Result<TrialKinematics, KinematicsError> {
    let fs = trial.sample_rate_hz;
    let need = (3 * config.order + 1).max(crate::ingest::MIN_TRIAL_SAMPLES);
    if trial.samples.len() < need {
        return Err(KinematicsError::TrialTooShort {
            len: trial.samples.len(),
            need,
        });
    }
    let raw_x = Signal::new(trial.samples.iter().map(|s| s.x).collect(), fs);
    let raw_y = Signal::new(trial.samples.iter().map(|s| s.y).collect(), fs);
    let x = butterworth_lowpass(&raw_x, config.cutoff_hz, config.order, config.zero_phase)?;
    let y = butterworth_lowpass(&raw_y, config.cutoff_hz, config.order, config.zero_phase)?;
    let vx = differentiate(&x)?;
    let vy = differentiate(&y)?;
    let ax = differentiate(&vx)?;
    let ay = differentiate(&vy)?;
    let jx = differentiate(&ax)?;
    let jy = differentiate(&ay)?;
    let jerk = jx
        .values
        .iter()
        .zip(&jy.values)
        .map(|(a, b)| a.hypot(*b))
        .collect();
    let mean = vy.values.iter().sum::<f64>() / vy.len() as f64;
    let vy_corrected = vy.values.iter().map(|v| v - mean).collect();
    Ok(TrialKinematics {
        x: x.values,
        y: y.values,
        vx: vx.values,
        vy: vy.values,
        ax: ax.values,
        ay: ay.values,
        jy: jy.values,
        jerk,
        vy_corrected,
    })
}

/// Indices `i` such that the velocity sign flips between `i` and the next
/// nonzero sample. Values within `tol` of zero carry no sign.
pub fn zero_crossings(values: &[f64], tol: f64) -> Vec<usize> {
    let sign = |v: f64| {
        if v > tol {
            1i8
        } else if v < -tol {
            -1
        } else {
            0
        }
    };
    let mut crossings = Vec::new();
    let mut last = 0i8;
    for (i, &v) in values.iter().enumerate() {
        let s = sign(v);
        if s == 0 {
            continue;
        }
        if last != 0 && s != last {
            crossings.push(i - 1);
        }
        last = s;
    }
    crossings
}

/// Inclusive `(start, end)` ranges from crossing positions, with strokes
/// shorter than `min_len` merged into their predecessor (or successor for
/// the first one).
pub fn stroke_bounds(n: usize, crossings: &[usize], min_len: usize) -> Vec<(usize, usize)> {
    let mut cuts: Vec<usize> = Vec::with_capacity(crossings.len() + 2);
    cuts.push(0);
    cuts.extend(crossings.iter().copied().filter(|&c| c > 0 && c < n - 1));
    cuts.push(n - 1);
    cuts.dedup();

    let mut bounds: Vec<(usize, usize)> = Vec::with_capacity(cuts.len());
    for w in cuts.windows(2) {
        let (s, e) = (w[0], w[1]);
        match bounds.last_mut() {
            Some(prev) if e - s + 1 < min_len => prev.1 = e,
            _ => bounds.push((s, e)),
        }
    }
    if bounds.len() > 1 && bounds[0].1 - bounds[0].0 + 1 < min_len {
        let first = bounds.remove(0);
        bounds[0].0 = first.0;
    }
    bounds
}

/// Segments a trial into strokes.
pub fn segment_trial(
    trial: &Trial,
    config: &SegmentConfig,
) -> Result<Vec<Stroke>, KinematicsError> {
    let kin = trial_kinematics(trial, config)?;
    Ok(strokes_from_kinematics(trial, &kin, config))
}

fn crossing_tolerance(kin: &TrialKinematics, fs: f64) -> f64 {
    let scale = kin.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    1e-9 * (1.0 + scale) * fs
}

pub(crate) fn strokes_from_kinematics(
    trial: &Trial,
    kin: &TrialKinematics,
    config: &SegmentConfig,
) -> Vec<Stroke> {
    let n = trial.samples.len();
    let tol = crossing_tolerance(kin, trial.sample_rate_hz);
    let crossings = zero_crossings(&kin.vy_corrected, tol);
    stroke_bounds(n, &crossings, config.min_stroke_samples)
        .into_iter()
        .map(|(start, end)| {
            let samples = (start..=end)
                .map(|i| PenSample {
                    t: trial.samples[i].t,
                    x: kin.x[i],
                    y: kin.y[i],
                    pressure: trial.samples[i].pressure,
                })
                .collect();
            Stroke {
                key: trial.key.clone(),
                start,
                end,
                samples,
                vx: kin.vx[start..=end].to_vec(),
                vy: kin.vy[start..=end].to_vec(),
                ax: kin.ax[start..=end].to_vec(),
                ay: kin.ay[start..=end].to_vec(),
                jy: kin.jy[start..=end].to_vec(),
                jerk: kin.jerk[start..=end].to_vec(),
            }
        })
        .collect()
}

/// Plot-data dump: `t,x_filt,y_filt,vy_meancorr,stroke_id`. A boundary
/// sample is attributed to the stroke it starts.
pub fn debug_dump(trial: &Trial, config: &SegmentConfig) -> Result<String, KinematicsError> {
    let kin = trial_kinematics(trial, config)?;
    let strokes = strokes_from_kinematics(trial, &kin, config);
    let mut ids = vec![0usize; trial.samples.len()];
    for (id, s) in strokes.iter().enumerate() {
        for slot in &mut ids[s.start..=s.end] {
            *slot = id;
        }
    }
    let mut out = String::from("t,x_filt,y_filt,vy_meancorr,stroke_id\n");
    for (i, s) in trial.samples.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.t, kin.x[i], kin.y[i], kin.vy_corrected[i], ids[i]
        ));
    }
    Ok(out)
}
