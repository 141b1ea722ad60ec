//! Synthetic pen-trace cohorts from an oscillatory handwriting model.
//!
//! The vertical pen position swings between alternating extremes
//! `e_k = (-1)^k L_k`, one stroke per swing, while the pen drifts rightwards.
//! Within stroke `k` the local phase `psi` runs from 0 to pi:
//!
//! ```text
//! x(t) = v t + Ax sin(k pi + psi) + noise
//! y(t) = e_k + (e_{k+1} - e_k) (1 - cos psi) / 2 + noise
//! ```
//!
//! With constant levels this is the sinusoid `y = L cos(phase)`. Each stroke
//! gets its own level `L_k` and duration, and the trial ends on a stroke
//! boundary back at its starting level, so the vertical velocity is
//! continuous and averages to zero. The non-dominant hand scales amplitudes,
//! noise and pressure spread by `m = 1 + delta * gain` and widens the spread
//! of stroke levels, durations, loop sizes and velocity-profile warps. Its
//! mean stroke rate matches the dominant hand, so both hands yield about the
//! same number of strokes per trial.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{
    serialize_trial, write_atomic, Dataset, DatasetManifest, DeclaredHand, Group, Hand,
    IngestError, PenSample, SubjectMeta, Trial, TrialEntry, TrialKey, DEFAULT_SAMPLE_RATE_HZ,
};
use crate::numeric::mix_seed;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid cohort config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] IngestError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Per-task gains: an increasing ramp `1 + 0.05 (task - 1)`.
pub const DEFAULT_TASK_GAINS: [f64; 7] = [1.0, 1.05, 1.1, 1.15, 1.2, 1.25, 1.3];

/// Growth of the log-SD of the per-stroke level with `delta * gain`.
const AMPLITUDE_SKEW_SLOPE: f64 = 2.5;
/// Growth of the log-SD of the per-stroke duration with `delta * gain`.
const DURATION_SKEW_SLOPE: f64 = 0.6;
/// Per-stroke level factor bounds; the upper one is scaled by `m^2`.
const LEVEL_RANGE: (f64, f64) = (0.25, 8.0);
/// Growth of the log-SD of the per-stroke horizontal loop size.
const LOOP_SKEW_SLOPE: f64 = 1.0;
/// Growth of the spread of the per-stroke velocity-profile warp.
const WARP_SKEW_SLOPE: f64 = 0.5;
/// Largest warp; the time map `u + a u (1 - u)` stays monotone below 1.
const MAX_WARP: f64 = 0.8;
/// Range of the per-stroke duration factor.
const STRETCH_RANGE: (f64, f64) = (0.6, 1.6);
/// Mean of a half-normal variate, `sqrt(2 / pi)`.
const HALF_NORMAL_MEAN: f64 = 0.797_884_560_802_865_4;

/// One writer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: String,
    /// 0 = both hands alike, 1 = maximally unidextrous.
    pub delta: f64,
    /// Horizontal drift, mm/s.
    pub drift_velocity: f64,
    /// Horizontal loop amplitude, mm.
    pub amplitude_x: f64,
    /// Vertical stroke amplitude, mm.
    pub amplitude_y: f64,
    /// Vertical oscillation frequency, Hz. Two strokes per period.
    pub frequency: f64,
    /// Log-SD of the per-stroke amplitude factor.
    pub amplitude_irregularity: f64,
    /// Log-SD of the per-stroke duration factor.
    pub duration_irregularity: f64,
    pub pressure_mean: f64,
    pub pressure_sd: f64,
    /// Additive position noise, mm.
    pub noise_sd: f64,
    pub task_gains: [f64; 7],
    pub seed: u64,
}

impl SubjectProfile {
    /// Draws the base oscillator parameters from `seed`.
    pub fn sample(subject_id: impl Into<String>, delta: f64, seed: u64) -> SubjectProfile {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[0]));
        SubjectProfile {
            subject_id: subject_id.into(),
            delta,
            drift_velocity: rng.random_range(9.6..10.4),
            amplitude_x: rng.random_range(1.92..2.08),
            amplitude_y: rng.random_range(4.8..5.2),
            frequency: rng.random_range(0.86..0.93),
            amplitude_irregularity: 0.2,
            duration_irregularity: 0.1,
            pressure_mean: rng.random_range(0.5..0.7),
            pressure_sd: 0.05,
            noise_sd: 0.02,
            task_gains: DEFAULT_TASK_GAINS,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| {
            Err(SynthError::InvalidProfile(format!(
                "{}: {m}",
                self.subject_id
            )))
        };
        if !(0.0..=1.0).contains(&self.delta) {
            return bad("delta outside [0, 1]");
        }
        if !(self.frequency > 0.0 && self.frequency < 15.0) {
            return bad("frequency must lie in (0, 15) Hz");
        }
        if !(self.amplitude_x > 0.0 && self.amplitude_y > 0.0) {
            return bad("amplitudes must be positive");
        }
        let spreads = [
            self.amplitude_irregularity,
            self.duration_irregularity,
            self.pressure_sd,
            self.noise_sd,
        ];
        if spreads.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !self.drift_velocity.is_finite()
        {
            return bad("spreads must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.pressure_mean) {
            return bad("pressure mean outside [0, 1]");
        }
        if self
            .task_gains
            .iter()
            .any(|g| !(g.is_finite() && *g >= 0.0))
        {
            return bad("task gains must be finite and non-negative");
        }
        Ok(())
    }

    /// Perturbation strength `delta * gain` of `hand` on `task`.
    fn degradation(&self, task: u8, hand: Hand) -> f64 {
        match hand {
            Hand::Dominant => 0.0,
            Hand::NonDominant => self.delta * self.task_gains[task as usize - 1],
        }
    }

    /// Sub-seed of one trial.
    pub fn trial_seed(&self, task: u8, hand: Hand, trial: u8) -> u64 {
        mix_seed(self.seed, &[task as u64, hand.label() as u64, trial as u64])
    }
}

/// Longest trial in seconds; trials end on the last stroke boundary before it.
pub const TRIAL_SECONDS: f64 = 8.0;

pub fn generate_trial(profile: &SubjectProfile, task: u8, hand: Hand, trial: u8) -> Result<Trial> {
    generate_trial_with_seed(
        profile,
        task,
        hand,
        trial,
        profile.trial_seed(task, hand, trial),
    )
}

/// As [`generate_trial`] with an explicit sub-seed.
pub fn generate_trial_with_seed(
    profile: &SubjectProfile,
    task: u8,
    hand: Hand,
    trial: u8,
    seed: u64,
) -> Result<Trial> {
    profile.validate()?;
    if !(1..=7).contains(&task) {
        return Err(SynthError::InvalidProfile(format!(
            "task {task} outside 1..7"
        )));
    }
    let fs = DEFAULT_SAMPLE_RATE_HZ;
    let d = profile.degradation(task, hand);
    let m = 1.0 + d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = move |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let amp_y = profile.amplitude_y * m * (1.0 + 0.02 * normal(&mut rng));
    let amp_x = profile.amplitude_x * m * (1.0 + 0.02 * normal(&mut rng));
    let freq = profile.frequency * (1.0 + 0.01 * normal(&mut rng));
    let amp_sd = profile.amplitude_irregularity + AMPLITUDE_SKEW_SLOPE * d;
    let dur_sd = profile.duration_irregularity + DURATION_SKEW_SLOPE * d;
    let noise_sd = profile.noise_sd * m;
    let pressure_sd = profile.pressure_sd * m;

    let level_cap = LEVEL_RANGE.1 * m * m;
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let level =
        |rng: &mut ChaCha8Rng| amp_y * (amp_sd * normal(rng)).exp().clamp(LEVEL_RANGE.0, level_cap);
    // right-skewed duration factor with zero log-mean
    let stretch = |rng: &mut ChaCha8Rng| {
        (dur_sd * (normal(rng).abs() - HALF_NORMAL_MEAN))
            .exp()
            .clamp(STRETCH_RANGE.0, STRETCH_RANGE.1)
    };
    let loop_sd = LOOP_SKEW_SLOPE * d;
    let warp_sd = WARP_SKEW_SLOPE * d;
    let mut extremes = vec![sign * level(&mut rng)];
    let mut bounds = vec![0.0];
    // per stroke: horizontal loop factor and velocity-profile warp
    let mut shapes: Vec<(f64, f64)> = Vec::new();
    loop {
        let end = bounds[bounds.len() - 1] + stretch(&mut rng) / (2.0 * freq);
        let next = level(&mut rng);
        let loop_scale = (loop_sd * normal(&mut rng)).exp().max(LEVEL_RANGE.0);
        let warp = MAX_WARP * (warp_sd * normal(&mut rng)).tanh();
        if end > TRIAL_SECONDS {
            break;
        }
        bounds.push(end);
        extremes.push(-extremes[extremes.len() - 1].signum() * next);
        shapes.push((loop_scale, warp));
    }
    // an even stroke count returns to the starting level
    if bounds.len() > 2 && bounds.len() % 2 == 0 {
        bounds.pop();
        extremes.pop();
    }
    let last = extremes.len() - 1;
    if last > 0 && last % 2 == 0 {
        extremes[last] = extremes[0];
    }
    let duration = if last == 0 {
        TRIAL_SECONDS
    } else {
        bounds[last]
    };

    let n = (duration * fs).floor() as usize + 1;
    let mut samples = Vec::with_capacity(n);
    let mut k = 0;
    for i in 0..n {
        let t = i as f64 / fs;
        while k + 1 < last && t > bounds[k + 1] {
            k += 1;
        }
        let (y, psi, loop_scale) = if last == 0 {
            (extremes[0], 0.0, 1.0)
        } else {
            let (loop_scale, warp) = shapes[k];
            let u = ((t - bounds[k]) / (bounds[k + 1] - bounds[k])).clamp(0.0, 1.0);
            let psi = std::f64::consts::PI * (u + warp * u * (1.0 - u));
            (
                extremes[k] + (extremes[k + 1] - extremes[k]) * (1.0 - psi.cos()) / 2.0,
                psi,
                loop_scale,
            )
        };
        let loop_x = loop_scale * if k % 2 == 0 { psi.sin() } else { -psi.sin() };
        let x = profile.drift_velocity * t + amp_x * loop_x + noise_sd * normal(&mut rng);
        let y = y + noise_sd * normal(&mut rng);
        let pressure = (profile.pressure_mean + pressure_sd * normal(&mut rng)).clamp(0.01, 1.0);
        samples.push(PenSample { t, x, y, pressure });
    }
    Trial::new(
        TrialKey::new(profile.subject_id.clone(), task, hand, trial),
        samples,
        fs,
    )
    .map_err(SynthError::Io)
}

/// Cohort description; stored next to the generated manifest as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub subjects: usize,
    /// Subject `i` gets `deltas[i % deltas.len()]`.
    pub deltas: Vec<f64>,
    pub tasks: Vec<u8>,
    pub trials_per_hand: u8,
    pub seed: u64,
    /// Non-dominant degradation gain per task.
    #[serde(default = "default_task_gains")]
    pub task_gains: [f64; 7],
}

fn default_task_gains() -> [f64; 7] {
    DEFAULT_TASK_GAINS
}

impl CohortConfig {
    pub fn new(deltas: Vec<f64>, seed: u64) -> CohortConfig {
        CohortConfig {
            subjects: deltas.len(),
            deltas,
            tasks: vec![1, 2],
            trials_per_hand: 6,
            seed,
            task_gains: DEFAULT_TASK_GAINS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.subjects == 0 {
            return bad("at least one subject is required".into());
        }
        if self.deltas.is_empty() {
            return bad("at least one delta is required".into());
        }
        if let Some(d) = self.deltas.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return bad(format!("delta {d} outside [0, 1]"));
        }
        if self.tasks.is_empty() {
            return bad("at least one task is required".into());
        }
        let mut tasks = self.tasks.clone();
        tasks.sort_unstable();
        tasks.dedup();
        if tasks.len() != self.tasks.len() || tasks.iter().any(|t| !(1..=7).contains(t)) {
            return bad("tasks must be distinct values in 1..7".into());
        }
        if self
            .task_gains
            .iter()
            .any(|g| !(g.is_finite() && *g >= 0.0))
        {
            return bad("task gains must be finite and non-negative".into());
        }
        if !(1..=6).contains(&self.trials_per_hand) {
            return bad(format!(
                "trials per hand {} outside 1..6",
                self.trials_per_hand
            ));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<CohortConfig> {
        let cfg: CohortConfig =
            toml::from_str(text).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("cohort config is representable as TOML")
    }

    pub fn profiles(&self) -> Vec<SubjectProfile> {
        (0..self.subjects)
            .map(|i| {
                let delta = self.deltas[i % self.deltas.len()];
                let mut p =
                    SubjectProfile::sample(subject_id(i), delta, mix_seed(self.seed, &[i as u64]));
                p.task_gains = self.task_gains;
                p
            })
            .collect()
    }
}

fn subject_id(i: usize) -> String {
    format!("S{:02}", i + 1)
}

/// `round_to_10(10 + 80 delta)`, signed by the writing hand.
pub fn synthetic_ei(delta: f64, hand: DeclaredHand) -> i32 {
    let magnitude = ((10.0 + 80.0 * delta) / 10.0).round() as i32 * 10;
    match hand {
        DeclaredHand::Right => magnitude,
        DeclaredHand::Left => -magnitude,
    }
}

fn group_of(delta: f64) -> Group {
    if delta >= 0.6 {
        Group::U
    } else if delta >= 0.25 {
        Group::PU
    } else {
        Group::A
    }
}

fn subject_meta(profile: &SubjectProfile) -> SubjectMeta {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(profile.seed, &[1]));
    let declared_hand = if rng.random_bool(0.8) {
        DeclaredHand::Right
    } else {
        DeclaredHand::Left
    };
    SubjectMeta {
        id: profile.subject_id.clone(),
        group: group_of(profile.delta),
        declared_hand,
        ei_responses: None,
        ei_score: Some(synthetic_ei(profile.delta, declared_hand)),
    }
}

/// A generated cohort before it touches the disk. Trial paths are relative
/// to the manifest.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub config: CohortConfig,
    pub manifest: DatasetManifest,
    pub trials: Vec<Trial>,
}

impl Cohort {
    pub fn into_dataset(self) -> Dataset {
        Dataset {
            root: PathBuf::new(),
            sample_rate_hz: self.manifest.sample_rate_hz,
            subjects: self.manifest.subjects,
            trials: self.trials,
        }
    }
}

pub fn generate_cohort(config: &CohortConfig) -> Result<Cohort> {
    config.validate()?;
    let mut manifest = DatasetManifest {
        sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
        subjects: Vec::new(),
        trials: Vec::new(),
    };
    let mut trials = Vec::new();
    for profile in config.profiles() {
        manifest.subjects.push(subject_meta(&profile));
        for &task in &config.tasks {
            for hand in [Hand::Dominant, Hand::NonDominant] {
                for trial in 1..=config.trials_per_hand {
                    let path = PathBuf::from("trials").join(format!(
                        "{}_t{}_{}_{}.csv",
                        profile.subject_id,
                        task,
                        hand.code(),
                        trial
                    ));
                    manifest.trials.push(TrialEntry {
                        subject: profile.subject_id.clone(),
                        task,
                        hand,
                        trial,
                        path,
                    });
                    trials.push(generate_trial(&profile, task, hand, trial)?);
                }
            }
        }
    }
    Ok(Cohort {
        config: config.clone(),
        manifest,
        trials,
    })
}

/// Name of the manifest inside a cohort directory.
pub const MANIFEST_FILE: &str = "manifest.toml";
/// Name of the stored cohort config.
pub const CONFIG_FILE: &str = "cohort.toml";

/// Generates a cohort and writes `manifest.toml`, `cohort.toml` and one CSV
/// per trial under `dir`. Returns the manifest path.
pub fn write_cohort(config: &CohortConfig, dir: &Path) -> Result<PathBuf> {
    let cohort = generate_cohort(config)?;
    for (entry, trial) in cohort.manifest.trials.iter().zip(&cohort.trials) {
        write_atomic(&dir.join(&entry.path), serialize_trial(trial).as_bytes())?;
    }
    write_atomic(&dir.join(CONFIG_FILE), config.to_toml().as_bytes())?;
    let manifest = dir.join(MANIFEST_FILE);
    write_atomic(&manifest, cohort.manifest.to_toml().as_bytes())?;
    Ok(manifest)
}
