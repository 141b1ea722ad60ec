//! Pen-trace data model, trial CSV parsing, dataset manifests and
//! Edinburgh Inventory laterality quotients.
//!
//! Trial files are UTF-8 CSV with the header `t,x,y,pressure` (the pressure
//! column may be omitted, in which case every sample gets pressure 1.0).
//! Times are seconds, positions millimeters.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Digitizer rate of the reference recordings.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 134.0;
/// Trials shorter than this cannot be filtered or segmented.
pub const MIN_TRIAL_SAMPLES: usize = 8;
/// Longest accepted trial: the 8 s recording window plus slack.
pub const MAX_TRIAL_SECONDS: f64 = 8.5;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("trial file has no data rows")]
    EmptyTrial,
    #[error("time is not strictly increasing at row {row} ({prev} -> {next})")]
    NonMonotonicTime { row: usize, prev: f64, next: f64 },
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("invalid trial: {0}")]
    InvalidTrial(String),
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("duplicate trial key {0}")]
    DuplicateTrialKey(TrialKey),
    #[error("trial entry references unknown subject {0:?}")]
    UnknownSubject(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("Edinburgh tally is empty (no checks on either side)")]
    EmptyTally,
    #[error("expected 10 Edinburgh items, got {0}")]
    WrongItemCount(usize),
    #[error("{path}: {source}")]
    Trial {
        path: PathBuf,
        #[source]
        source: Box<IngestError>,
    },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, IngestError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub pressure: f64,
}

/// Which hand produced a trial. `Dominant` is the positive class (label 1)
/// throughout the classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hand {
    #[serde(rename = "D")]
    Dominant,
    #[serde(rename = "ND")]
    NonDominant,
}

impl Hand {
    pub fn label(self) -> u8 {
        match self {
            Hand::Dominant => 1,
            Hand::NonDominant => 0,
        }
    }

    pub fn from_label(label: u8) -> Hand {
        if label == 1 {
            Hand::Dominant
        } else {
            Hand::NonDominant
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Hand::Dominant => "D",
            Hand::NonDominant => "ND",
        }
    }
}

impl fmt::Display for Hand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Hand {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "D" | "d" | "dominant" => Ok(Hand::Dominant),
            "ND" | "nd" | "non-dominant" => Ok(Hand::NonDominant),
            other => Err(format!("unknown hand {other:?} (expected D or ND)")),
        }
    }
}

/// Identity of one recording.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrialKey {
    pub subject: String,
    pub task: u8,
    pub hand: Hand,
    pub trial: u8,
}

impl TrialKey {
    pub fn new(subject: impl Into<String>, task: u8, hand: Hand, trial: u8) -> Self {
        TrialKey {
            subject: subject.into(),
            task,
            hand,
            trial,
        }
    }
}

impl fmt::Display for TrialKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, task{}, {}, {})",
            self.subject, self.task, self.hand, self.trial
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub key: TrialKey,
    pub samples: Vec<PenSample>,
    pub sample_rate_hz: f64,
}

impl Trial {
    /// Builds a trial and checks the structural invariants.
    pub fn new(key: TrialKey, samples: Vec<PenSample>, sample_rate_hz: f64) -> Result<Trial> {
        let trial = Trial {
            key,
            samples,
            sample_rate_hz,
        };
        trial.validate()?;
        Ok(trial)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=7).contains(&self.key.task) {
            return Err(IngestError::InvalidTrial(format!(
                "task {} outside 1..7",
                self.key.task
            )));
        }
        if !(1..=6).contains(&self.key.trial) {
            return Err(IngestError::InvalidTrial(format!(
                "trial index {} outside 1..6",
                self.key.trial
            )));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(IngestError::InvalidTrial(
                "sample rate must be positive".into(),
            ));
        }
        if self.samples.is_empty() {
            return Err(IngestError::EmptyTrial);
        }
        for (i, s) in self.samples.iter().enumerate() {
            if !(s.t.is_finite() && s.x.is_finite() && s.y.is_finite() && s.pressure.is_finite()) {
                return Err(IngestError::InvalidTrial(format!(
                    "non-finite value in sample {i}"
                )));
            }
            if !(0.0..=1.0).contains(&s.pressure) {
                return Err(IngestError::InvalidTrial(format!(
                    "pressure {} outside [0,1] in sample {i}",
                    s.pressure
                )));
            }
        }
        for (i, w) in self.samples.windows(2).enumerate() {
            if w[1].t <= w[0].t {
                return Err(IngestError::NonMonotonicTime {
                    row: i + 2,
                    prev: w[0].t,
                    next: w[1].t,
                });
            }
        }
        if self.samples.len() < MIN_TRIAL_SAMPLES {
            return Err(IngestError::InvalidTrial(format!(
                "{} samples, need at least {MIN_TRIAL_SAMPLES}",
                self.samples.len()
            )));
        }
        if self.duration() > MAX_TRIAL_SECONDS {
            return Err(IngestError::InvalidTrial(format!(
                "duration {:.3} s exceeds {MAX_TRIAL_SECONDS} s",
                self.duration()
            )));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Parses trial CSV content.
///
/// Times are re-zeroed so the first sample sits at `t = 0`. Only the
/// row-level errors (`EmptyTrial`, `NonMonotonicTime`, `MalformedRow`) are
/// reported here; use [`Trial::validate`] for the full invariant set.
pub fn parse_trial_file(bytes: &[u8], key: TrialKey, sample_rate_hz: f64) -> Result<Trial> {
    let text = std::str::from_utf8(bytes).map_err(|e| IngestError::MalformedRow {
        row: 0,
        reason: format!("not UTF-8: {e}"),
    })?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(IngestError::EmptyTrial)?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let has_pressure = match columns.as_slice() {
        ["t", "x", "y", "pressure"] => true,
        ["t", "x", "y"] => false,
        _ => {
            return Err(IngestError::MalformedRow {
                row: 1,
                reason: format!("expected header `t,x,y,pressure`, found `{header}`"),
            })
        }
    };
    let expected = if has_pressure { 4 } else { 3 };

    let mut samples: Vec<PenSample> = Vec::new();
    for (lineno, line) in lines {
        let row = lineno + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != expected {
            return Err(IngestError::MalformedRow {
                row,
                reason: format!("expected {expected} fields, found {}", fields.len()),
            });
        }
        let mut values = [1.0f64; 4];
        for (slot, field) in values.iter_mut().zip(&fields) {
            *slot = field
                .parse::<f64>()
                .map_err(|_| IngestError::MalformedRow {
                    row,
                    reason: format!("not a number: {field:?}"),
                })?;
            if !slot.is_finite() {
                return Err(IngestError::MalformedRow {
                    row,
                    reason: format!("non-finite value {field:?}"),
                });
            }
        }
        let sample = PenSample {
            t: values[0],
            x: values[1],
            y: values[2],
            pressure: values[3],
        };
        if let Some(prev) = samples.last() {
            if sample.t <= prev.t {
                return Err(IngestError::NonMonotonicTime {
                    row,
                    prev: prev.t,
                    next: sample.t,
                });
            }
        }
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(IngestError::EmptyTrial);
    }
    let t0 = samples[0].t;
    for s in &mut samples {
        s.t -= t0;
    }
    Ok(Trial {
        key,
        samples,
        sample_rate_hz,
    })
}

/// Writes a trial in the canonical CSV layout. Floats use the shortest
/// representation that reads back to the same bits.
pub fn serialize_trial(trial: &Trial) -> String {
    let mut out = String::with_capacity(trial.samples.len() * 48 + 16);
    out.push_str("t,x,y,pressure\n");
    for s in &trial.samples {
        out.push_str(&format!("{},{},{},{}\n", s.t, s.x, s.y, s.pressure));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    U,
    PU,
    A,
}

impl FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "U" => Ok(Group::U),
            "PU" => Ok(Group::PU),
            "A" => Ok(Group::A),
            other => Err(format!("unknown group {other:?}")),
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::U => "U",
            Group::PU => "PU",
            Group::A => "A",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeclaredHand {
    Left,
    Right,
}

/// One Edinburgh Inventory item, encoded as left/right check marks:
/// strong preference puts two checks on one side, weak preference one, and
/// indifference one on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EiResponse {
    #[serde(rename = "LL")]
    StrongLeft,
    #[serde(rename = "L")]
    WeakLeft,
    #[serde(rename = "LR")]
    Either,
    #[serde(rename = "R")]
    WeakRight,
    #[serde(rename = "RR")]
    StrongRight,
}

impl EiResponse {
    pub const ALL: [EiResponse; 5] = [
        EiResponse::StrongLeft,
        EiResponse::WeakLeft,
        EiResponse::Either,
        EiResponse::WeakRight,
        EiResponse::StrongRight,
    ];

    /// `(left checks, right checks)`.
    pub fn checks(self) -> (u32, u32) {
        match self {
            EiResponse::StrongLeft => (2, 0),
            EiResponse::WeakLeft => (1, 0),
            EiResponse::Either => (1, 1),
            EiResponse::WeakRight => (0, 1),
            EiResponse::StrongRight => (0, 2),
        }
    }

    pub fn mirror(self) -> EiResponse {
        match self {
            EiResponse::StrongLeft => EiResponse::StrongRight,
            EiResponse::WeakLeft => EiResponse::WeakRight,
            EiResponse::Either => EiResponse::Either,
            EiResponse::WeakRight => EiResponse::WeakLeft,
            EiResponse::StrongRight => EiResponse::StrongLeft,
        }
    }
}

/// Laterality quotient `round(100 (R - L) / (R + L))` from raw check tallies.
pub fn ei_score_from_tally(right: u32, left: u32) -> Result<i32> {
    let total = right + left;
    if total == 0 {
        return Err(IngestError::EmptyTally);
    }
    let lq = 100.0 * (right as f64 - left as f64) / total as f64;
    Ok(lq.round() as i32)
}

/// Laterality quotient of a full 10-item questionnaire. Negative is left.
pub fn ei_score(responses: &[EiResponse]) -> Result<i32> {
    if responses.len() != 10 {
        return Err(IngestError::WrongItemCount(responses.len()));
    }
    let (left, right) = responses.iter().fold((0, 0), |(l, r), item| {
        let (cl, cr) = item.checks();
        (l + cl, r + cr)
    });
    ei_score_from_tally(right, left)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMeta {
    pub id: String,
    pub group: Group,
    pub declared_hand: DeclaredHand,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ei_responses: Option<Vec<EiResponse>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ei_score: Option<i32>,
}

impl SubjectMeta {
    /// The stored score, or the one computed from the responses.
    pub fn resolved_ei(&self) -> Result<Option<i32>> {
        match (&self.ei_responses, self.ei_score) {
            (Some(resp), _) => Ok(Some(ei_score(resp)?)),
            (None, score) => Ok(score),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEntry {
    pub subject: String,
    pub task: u8,
    pub hand: Hand,
    pub trial: u8,
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
}

impl TrialEntry {
    pub fn key(&self) -> TrialKey {
        TrialKey::new(self.subject.clone(), self.task, self.hand, self.trial)
    }
}

/// On-disk dataset description (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub subjects: Vec<SubjectMeta>,
    #[serde(default)]
    pub trials: Vec<TrialEntry>,
}

fn default_rate() -> f64 {
    DEFAULT_SAMPLE_RATE_HZ
}

impl DatasetManifest {
    pub fn from_toml(text: &str) -> Result<DatasetManifest> {
        toml::from_str(text).map_err(|e| IngestError::InvalidManifest(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest is always representable as TOML")
    }

    /// Checks the key-uniqueness and subject-reference invariants, and that
    /// stored EI scores agree with any recorded responses.
    pub fn check(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for s in &self.subjects {
            if !ids.insert(s.id.as_str()) {
                return Err(IngestError::InvalidManifest(format!(
                    "subject {:?} listed twice",
                    s.id
                )));
            }
            if let (Some(resp), Some(score)) = (&s.ei_responses, s.ei_score) {
                let computed = ei_score(resp)?;
                if computed != score {
                    return Err(IngestError::InvalidManifest(format!(
                        "subject {:?}: ei_score {score} disagrees with responses ({computed})",
                        s.id
                    )));
                }
            }
            if let Some(score) = s.ei_score {
                if !(-100..=100).contains(&score) {
                    return Err(IngestError::InvalidManifest(format!(
                        "subject {:?}: ei_score {score} outside [-100, 100]",
                        s.id
                    )));
                }
            }
        }
        let mut keys = HashSet::new();
        for entry in &self.trials {
            if !ids.contains(entry.subject.as_str()) {
                return Err(IngestError::UnknownSubject(entry.subject.clone()));
            }
            let key = entry.key();
            if !keys.insert(key.clone()) {
                return Err(IngestError::DuplicateTrialKey(key));
            }
        }
        Ok(())
    }
}

/// A loaded, validated dataset. Immutable once built.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub sample_rate_hz: f64,
    pub subjects: Vec<SubjectMeta>,
    pub trials: Vec<Trial>,
}

impl Dataset {
    pub fn subject(&self, id: &str) -> Option<&SubjectMeta> {
        self.subjects.iter().find(|s| s.id == id)
    }

    /// Trial count per subject id, in id order.
    pub fn counts_per_subject(&self) -> BTreeMap<String, usize> {
        let mut counts: BTreeMap<String, usize> =
            self.subjects.iter().map(|s| (s.id.clone(), 0)).collect();
        for t in &self.trials {
            *counts.entry(t.key.subject.clone()).or_default() += 1;
        }
        counts
    }

    pub fn tasks(&self) -> Vec<u8> {
        let mut tasks: Vec<u8> = self.trials.iter().map(|t| t.key.task).collect();
        tasks.sort_unstable();
        tasks.dedup();
        tasks
    }
}

/// Writes `bytes` to a temporary sibling and renames it over `path`, so
/// readers never see a partial file. Missing parent directories are created.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        io(e)
    })
}

/// Reads a manifest and every trial it references.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    load_manifest_with_rate(path, None)
}

/// As [`load_manifest`], overriding the manifest's sample rate when given.
pub fn load_manifest_with_rate(path: &Path, rate_override: Option<f64>) -> Result<Dataset> {
    if !path.exists() {
        return Err(IngestError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let manifest = DatasetManifest::from_toml(&text)?;
    manifest.check()?;
    let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let rate = rate_override.unwrap_or(manifest.sample_rate_hz);

    let mut trials = Vec::with_capacity(manifest.trials.len());
    for entry in &manifest.trials {
        let file = root.join(&entry.path);
        if !file.is_file() {
            return Err(IngestError::MissingFile(file));
        }
        let bytes = std::fs::read(&file).map_err(|source| IngestError::Io {
            path: file.clone(),
            source,
        })?;
        let wrap = |source: IngestError| IngestError::Trial {
            path: file.clone(),
            source: Box::new(source),
        };
        let trial = parse_trial_file(&bytes, entry.key(), rate).map_err(wrap)?;
        trial.validate().map_err(wrap)?;
        trials.push(trial);
    }
    Ok(Dataset {
        root,
        sample_rate_hz: rate,
        subjects: manifest.subjects,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key() -> TrialKey {
        TrialKey::new("S1", 1, Hand::Dominant, 1)
    }

    #[test]
    fn parses_three_rows() {
        let csv = "t,x,y,pressure\n0,1,2,0.5\n0.00746,1.1,2.1,0.5\n0.01493,1.2,2.2,0.6\n";
        let trial = parse_trial_file(csv.as_bytes(), key(), 134.0).unwrap();
        assert_eq!(trial.samples.len(), 3);
        assert_eq!(trial.samples[0].t, 0.0);
        assert_eq!(trial.samples[2].pressure, 0.6);
    }

    #[test]
    fn rezeroes_time() {
        let csv = "t,x,y,pressure\n10,0,0,1\n10.5,0,0,1\n";
        let trial = parse_trial_file(csv.as_bytes(), key(), 134.0).unwrap();
        assert_eq!(trial.samples[0].t, 0.0);
        assert_eq!(trial.samples[1].t, 0.5);
    }

    #[test]
    fn rejects_backwards_time() {
        let csv = "t,x,y,pressure\n0,0,0,1\n0.01,0,0,1\n0.005,0,0,1\n";
        let err = parse_trial_file(csv.as_bytes(), key(), 134.0).unwrap_err();
        assert!(
            matches!(err, IngestError::NonMonotonicTime { row: 4, .. }),
            "{err}"
        );
    }

    #[test]
    fn header_only_is_empty() {
        let err = parse_trial_file(b"t,x,y,pressure\n", key(), 134.0).unwrap_err();
        assert!(matches!(err, IngestError::EmptyTrial));
        let err = parse_trial_file(b"", key(), 134.0).unwrap_err();
        assert!(matches!(err, IngestError::EmptyTrial));
    }

    #[test]
    fn malformed_rows() {
        let err = parse_trial_file(b"t,x,y,pressure\n0,1,2\n", key(), 134.0).unwrap_err();
        assert!(matches!(err, IngestError::MalformedRow { row: 2, .. }));
        let err = parse_trial_file(b"t,x,y,pressure\n0,1,abc,1\n", key(), 134.0).unwrap_err();
        assert!(matches!(err, IngestError::MalformedRow { row: 2, .. }));
        let err = parse_trial_file(b"time,x,y\n0,1,2\n", key(), 134.0).unwrap_err();
        assert!(matches!(err, IngestError::MalformedRow { row: 1, .. }));
    }

    #[test]
    fn missing_pressure_defaults_to_one() {
        let trial = parse_trial_file(b"t,x,y\n0,1,2\n0.1,1,3\n", key(), 134.0).unwrap();
        assert!(trial.samples.iter().all(|s| s.pressure == 1.0));
    }

    #[test]
    fn validate_catches_short_and_long_trials() {
        let mk = |n: usize, dt: f64| {
            let samples = (0..n)
                .map(|i| PenSample {
                    t: i as f64 * dt,
                    x: 0.0,
                    y: 0.0,
                    pressure: 1.0,
                })
                .collect();
            Trial::new(key(), samples, 134.0)
        };
        assert!(mk(7, 0.01).is_err());
        assert!(mk(8, 0.01).is_ok());
        assert!(mk(10, 1.0).is_err());
    }

    #[test]
    fn ei_boundaries() {
        assert_eq!(ei_score(&[EiResponse::StrongRight; 10]).unwrap(), 100);
        assert_eq!(ei_score(&[EiResponse::StrongLeft; 10]).unwrap(), -100);
        assert_eq!(ei_score_from_tally(17, 3).unwrap(), 70);
        assert!(matches!(
            ei_score_from_tally(0, 0),
            Err(IngestError::EmptyTally)
        ));
        assert!(matches!(
            ei_score(&[EiResponse::Either; 9]),
            Err(IngestError::WrongItemCount(9))
        ));
    }

    #[test]
    fn ei_seven_strong_right_three_either() {
        // R = 14 + 3 = 17, L = 3
        let mut r = vec![EiResponse::StrongRight; 7];
        r.extend([EiResponse::Either; 3]);
        assert_eq!(ei_score(&r).unwrap(), 70);
    }

    fn responses() -> impl Strategy<Value = Vec<EiResponse>> {
        prop::collection::vec(prop::sample::select(EiResponse::ALL.to_vec()), 10)
    }

    fn two_check_responses() -> impl Strategy<Value = Vec<EiResponse>> {
        let items = vec![
            EiResponse::StrongLeft,
            EiResponse::Either,
            EiResponse::StrongRight,
        ];
        prop::collection::vec(prop::sample::select(items), 10)
    }

    fn trial_strategy() -> impl Strategy<Value = Trial> {
        prop::collection::vec(
            (
                1e-4f64..0.05,
                -500.0f64..500.0,
                -500.0f64..500.0,
                0.0f64..=1.0,
            ),
            MIN_TRIAL_SAMPLES..60,
        )
        .prop_map(|rows| {
            let mut t = 0.0;
            let samples = rows
                .into_iter()
                .enumerate()
                .map(|(i, (dt, x, y, p))| {
                    if i > 0 {
                        t += dt;
                    }
                    PenSample {
                        t,
                        x,
                        y,
                        pressure: p,
                    }
                })
                .collect();
            Trial {
                key: TrialKey::new("S9", 3, Hand::NonDominant, 2),
                samples,
                sample_rate_hz: 134.0,
            }
        })
    }

    proptest! {
        #[test]
        fn ei_is_antisymmetric(r in responses()) {
            let mirrored: Vec<_> = r.iter().map(|x| x.mirror()).collect();
            prop_assert_eq!(ei_score(&r).unwrap(), -ei_score(&mirrored).unwrap());
        }

        #[test]
        fn ei_in_range(r in responses()) {
            let s = ei_score(&r).unwrap();
            prop_assert!((-100..=100).contains(&s));
        }

        #[test]
        fn ei_multiple_of_ten_with_two_checks_per_item(r in two_check_responses()) {
            prop_assert_eq!(ei_score(&r).unwrap() % 10, 0);
        }

        #[test]
        fn csv_round_trip(trial in trial_strategy()) {
            let text = serialize_trial(&trial);
            let back = parse_trial_file(text.as_bytes(), trial.key.clone(), 134.0).unwrap();
            prop_assert_eq!(back, trial);
        }
    }
}
