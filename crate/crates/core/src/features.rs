//! Per-stroke handwriting features, per-trial min-max normalization,
//! collinearity filtering and feature ranking.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use thiserror::Error;

use crate::ingest::{Dataset, Hand, Trial, TrialKey};
use crate::kinematics::{segment_trial, KinematicsError, SegmentConfig, Stroke};
use crate::numeric::{average_ranks, pearson, spearman};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("stroke has {0} samples, need at least 4")]
    StrokeTooShort(usize),
    #[error("labels contain a single class")]
    SingleClassLabels,
    #[error("{rows} rows but {labels} labels")]
    LabelMismatch { rows: usize, labels: usize },
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("malformed feature table: {0}")]
    Malformed(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

macro_rules! features {
    ($($variant:ident => $name:literal,)*) => {
        /// The 25 stroke features, in table order (time, static, dynamic).
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Feature {
            $($variant,)*
        }

        impl Feature {
            pub const ALL: [Feature; 25] = [$(Feature::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Feature::$variant => $name,)*
                }
            }
        }

        impl FromStr for Feature {
            type Err = FeatureError;

            fn from_str(s: &str) -> Result<Feature> {
                match s {
                    $($name => Ok(Feature::$variant),)*
                    other => Err(FeatureError::UnknownFeature(other.to_string())),
                }
            }
        }
    };
}

features! {
    StartTime => "start_time",
    TimeDuration => "time_duration",
    RelativeTimeToPeakVv => "relative_time_to_peak_vv",
    InitialVerticalPosition => "initial_vertical_position",
    VerticalSize => "vertical_size",
    InitialHorizontalPosition => "initial_horizontal_position",
    HorizontalSize => "horizontal_size",
    StraightnessIrregularity => "straightness_irregularity",
    Slant => "slant",
    LoopSurfaceArea => "loop_surface_area",
    RelativeInitialSlant => "relative_initial_slant",
    AbsoluteSize => "absolute_size",
    SegmentLength => "segment_length",
    PeakHorizontalVelocity => "peak_horizontal_velocity",
    PeakHorizontalAcceleration => "peak_horizontal_acceleration",
    PeakVerticalVelocity => "peak_vertical_velocity",
    PeakVerticalAcceleration => "peak_vertical_acceleration",
    AverageAbsoluteVelocity => "average_absolute_velocity",
    AbsoluteVerticalJerk => "absolute_vertical_jerk",
    AbsoluteJerk => "absolute_jerk",
    NpaPointsPerSegment => "npa_points_per_segment",
    AveragePenPressure => "average_pen_pressure",
    NumberOfStrokes => "number_of_strokes",
    Energy => "energy",
    Pv => "pv",
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// All 25 features of one stroke, indexable by [`Feature`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; 25]);

impl Index<Feature> for FeatureVector {
    type Output = f64;

    fn index(&self, f: Feature) -> &f64 {
        &self.0[f as usize]
    }
}

impl IndexMut<Feature> for FeatureVector {
    fn index_mut(&mut self, f: Feature) -> &mut f64 {
        &mut self.0[f as usize]
    }
}

/// Trial-level context a stroke needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialContext {
    pub stroke_count: usize,
    pub trial_start_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrokeFeatures {
    pub values: FeatureVector,
    /// Endpoints coincide: straightness irregularity and slant were set to 0.
    pub degenerate: bool,
}

const INITIAL_SLANT_WINDOW_S: f64 = 0.08;
const DEGENERATE_DISTANCE: f64 = 1e-12;

fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn rms(xs: &[f64]) -> f64 {
    (xs.iter().map(|v| v * v).sum::<f64>() / xs.len() as f64).sqrt()
}

fn range(xs: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    hi - lo
}

/// Absolute shoelace area of the closed polygon through `points`.
pub fn polygon_area(points: &[(f64, f64)]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let n = points.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (x0, y0) = points[i];
            let (x1, y1) = points[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum();
    twice.abs() / 2.0
}

/// Root-mean-square perpendicular distance to the total-least-squares line.
fn rms_line_deviation(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in points {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let (sxx, syy, sxy) = (sxx / n, syy / n, sxy / n);
    let half_trace = (sxx + syy) / 2.0;
    let disc = (((sxx - syy) / 2.0).powi(2) + sxy * sxy).sqrt();
    (half_trace - disc).max(0.0).sqrt()
}

/// Computes the 25 features of `stroke`.
///
/// `next` is the following stroke of the same trial, used for the loop
/// area; the last stroke of a trial gets area 0.
pub fn extract_stroke_features(
    stroke: &Stroke,
    next: Option<&Stroke>,
    ctx: TrialContext,
) -> Result<StrokeFeatures> {
    let s = &stroke.samples;
    let n = s.len();
    if n < 4 {
        return Err(FeatureError::StrokeTooShort(n));
    }
    let mut v = FeatureVector([0.0; 25]);
    let first = s[0];
    let last = s[n - 1];
    let duration = last.t - first.t;

    // peak vertical velocity sample, kept off the ends for the energy operator
    let peak = (0..n)
        .max_by(|&a, &b| stroke.vy[a].abs().total_cmp(&stroke.vy[b].abs()))
        .unwrap();
    let p = peak.clamp(1, n - 2);

    v[Feature::StartTime] = first.t - ctx.trial_start_time;
    v[Feature::TimeDuration] = duration;
    v[Feature::RelativeTimeToPeakVv] = (s[peak].t - first.t) / duration;

    v[Feature::InitialVerticalPosition] = first.y;
    v[Feature::InitialHorizontalPosition] = first.x;
    let vsize = range(s.iter().map(|p| p.y));
    let hsize = range(s.iter().map(|p| p.x));
    v[Feature::VerticalSize] = vsize;
    v[Feature::HorizontalSize] = hsize;
    v[Feature::AbsoluteSize] = vsize.hypot(hsize);

    let points: Vec<(f64, f64)> = s.iter().map(|p| (p.x, p.y)).collect();
    let (dx, dy) = (last.x - first.x, last.y - first.y);
    let chord = dx.hypot(dy);
    let degenerate = chord < DEGENERATE_DISTANCE;
    let slant = if degenerate { 0.0 } else { dy.atan2(dx) };
    v[Feature::Slant] = slant;
    v[Feature::StraightnessIrregularity] = if degenerate {
        0.0
    } else {
        rms_line_deviation(&points) / chord
    };

    let q = s
        .iter()
        .rposition(|p| p.t - first.t <= INITIAL_SLANT_WINDOW_S)
        .unwrap_or(0)
        .max(1);
    let (idx, idy) = (s[q].x - first.x, s[q].y - first.y);
    let initial_slant = if idx == 0.0 && idy == 0.0 {
        0.0
    } else {
        idy.atan2(idx)
    };
    v[Feature::RelativeInitialSlant] = if slant == 0.0 {
        1.0
    } else {
        initial_slant / slant
    };

    v[Feature::LoopSurfaceArea] = match next {
        Some(nx) => {
            let mut poly = points.clone();
            poly.extend(nx.samples.iter().skip(1).map(|p| (p.x, p.y)));
            polygon_area(&poly)
        }
        None => 0.0,
    };
    v[Feature::SegmentLength] = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
        .sum();

    v[Feature::PeakHorizontalVelocity] = max_abs(&stroke.vx);
    v[Feature::PeakHorizontalAcceleration] = max_abs(&stroke.ax);
    v[Feature::PeakVerticalVelocity] = max_abs(&stroke.vy);
    v[Feature::PeakVerticalAcceleration] = max_abs(&stroke.ay);
    let speed = stroke
        .vx
        .iter()
        .zip(&stroke.vy)
        .map(|(a, b)| a.hypot(*b))
        .sum::<f64>()
        / n as f64;
    v[Feature::AverageAbsoluteVelocity] = speed;
    v[Feature::AbsoluteVerticalJerk] = rms(&stroke.jy);
    v[Feature::AbsoluteJerk] = rms(&stroke.jerk);

    let accel: Vec<f64> = stroke
        .ax
        .iter()
        .zip(&stroke.ay)
        .map(|(a, b)| a.hypot(*b))
        .collect();
    let peaks = accel
        .windows(3)
        .filter(|w| w[1] > w[0] && w[1] >= w[2])
        .count();
    v[Feature::NpaPointsPerSegment] = peaks.max(1) as f64;

    let pressure = s.iter().map(|p| p.pressure).sum::<f64>() / n as f64;
    v[Feature::AveragePenPressure] = pressure;
    v[Feature::NumberOfStrokes] = ctx.stroke_count as f64;
    let vy = &stroke.vy;
    v[Feature::Energy] = vy[p] * vy[p] - vy[p - 1] * vy[p + 1];
    v[Feature::Pv] = speed * pressure;

    Ok(StrokeFeatures {
        values: v,
        degenerate,
    })
}

/// Features of every stroke of an already segmented trial.
pub fn features_of_strokes(
    strokes: &[Stroke],
    trial_start_time: f64,
) -> Result<Vec<StrokeFeatures>> {
    let ctx = TrialContext {
        stroke_count: strokes.len(),
        trial_start_time,
    };
    strokes
        .iter()
        .enumerate()
        .map(|(i, s)| extract_stroke_features(s, strokes.get(i + 1), ctx))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub values: Vec<f64>,
    pub key: TrialKey,
}

impl FeatureRow {
    pub fn hand(&self) -> Hand {
        self.key.hand
    }

    pub fn label(&self) -> u8 {
        self.key.hand.label()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMeta {
    pub name: String,
    pub normalized: bool,
}

/// Rows are strokes, columns named features; each row carries its trial key
/// (hand label, subject, task, trial).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<ColumnMeta>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureMatrix {
    pub fn empty_full() -> FeatureMatrix {
        FeatureMatrix {
            columns: Feature::ALL
                .iter()
                .map(|f| ColumnMeta {
                    name: f.name().to_string(),
                    normalized: false,
                })
                .collect(),
            rows: Vec::new(),
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.values[j]).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(FeatureRow::label).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Keeps only the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<FeatureMatrix> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| FeatureError::UnknownFeature(n.clone()))
            })
            .collect::<Result<_>>()?;
        Ok(FeatureMatrix {
            columns: idx.iter().map(|&j| self.columns[j].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| FeatureRow {
                    values: idx.iter().map(|&j| r.values[j]).collect(),
                    key: r.key.clone(),
                })
                .collect(),
        })
    }

    /// Rows matching `keep`.
    pub fn filter_rows(&self, mut keep: impl FnMut(&FeatureRow) -> bool) -> FeatureMatrix {
        FeatureMatrix {
            columns: self.columns.clone(),
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            columns: self.columns.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.values.clone()).collect()
    }

    /// CSV with the feature columns followed by `hand,subject,task,trial`.
    pub fn to_csv(&self) -> String {
        let mut out = self.names().join(",");
        out.push_str(",hand,subject,task,trial\n");
        for r in &self.rows {
            for v in &r.values {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.key.hand, r.key.subject, r.key.task, r.key.trial
            ));
        }
        out
    }

    /// Reads [`FeatureMatrix::to_csv`] output. Columns are marked normalized
    /// when `normalized` is set.
    pub fn from_csv(text: &str, normalized: bool) -> Result<FeatureMatrix> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| FeatureError::Malformed(e.to_string()))?
            .clone();
        let h: Vec<&str> = headers.iter().collect();
        if h.len() < 4 || h[h.len() - 4..] != ["hand", "subject", "task", "trial"] {
            return Err(FeatureError::Malformed(
                "header must end with hand,subject,task,trial".into(),
            ));
        }
        let nf = h.len() - 4;
        let columns = h[..nf]
            .iter()
            .map(|n| ColumnMeta {
                name: n.to_string(),
                normalized,
            })
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| FeatureError::Malformed(e.to_string()))?;
            let bad = |what: &str| FeatureError::Malformed(format!("row {}: bad {what}", i + 2));
            let values = (0..nf)
                .map(|j| rec[j].parse::<f64>().map_err(|_| bad(&h[j].to_string())))
                .collect::<Result<Vec<f64>>>()?;
            let hand = rec[nf].parse::<Hand>().map_err(|_| bad("hand"))?;
            let task = rec[nf + 2].parse::<u8>().map_err(|_| bad("task"))?;
            let trial = rec[nf + 3].parse::<u8>().map_err(|_| bad("trial"))?;
            rows.push(FeatureRow {
                values,
                key: TrialKey::new(rec[nf + 1].to_string(), task, hand, trial),
            });
        }
        Ok(FeatureMatrix { columns, rows })
    }
}

/// Segments a trial and extracts one full feature row per stroke.
pub fn trial_feature_rows(trial: &Trial, config: &SegmentConfig) -> Result<Vec<FeatureRow>> {
    let strokes = segment_trial(trial, config)?;
    let t0 = trial.samples.first().map_or(0.0, |s| s.t);
    Ok(features_of_strokes(&strokes, t0)?
        .into_iter()
        .map(|f| FeatureRow {
            values: f.values.0.to_vec(),
            key: trial.key.clone(),
        })
        .collect())
}

/// Unnormalized 25-column matrix for a whole dataset, rows in trial order.
pub fn build_feature_matrix(dataset: &Dataset, config: &SegmentConfig) -> Result<FeatureMatrix> {
    let mut m = FeatureMatrix::empty_full();
    for trial in &dataset.trials {
        m.rows.extend(trial_feature_rows(trial, config)?);
    }
    Ok(m)
}

/// Min-max scales every column within each trial. A column that is constant
/// inside a trial maps to 0.5 there.
pub fn normalize_per_trial(matrix: &FeatureMatrix) -> FeatureMatrix {
    let mut groups: BTreeMap<&TrialKey, Vec<usize>> = BTreeMap::new();
    for (i, r) in matrix.rows.iter().enumerate() {
        groups.entry(&r.key).or_default().push(i);
    }
    let mut out = matrix.clone();
    for idx in groups.values() {
        for j in 0..matrix.columns.len() {
            let (lo, hi) = idx
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = matrix.rows[i].values[j];
                    (lo.min(v), hi.max(v))
                });
            for &i in idx {
                let v = matrix.rows[i].values[j];
                out.rows[i].values[j] = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            }
        }
    }
    for c in &mut out.columns {
        c.normalized = true;
    }
    out
}

/// Greedy pass over the columns in order: a column survives unless its
/// |Spearman rho| with an already kept column exceeds `threshold`.
pub fn colinearity_filter(matrix: &FeatureMatrix, threshold: f64) -> Vec<String> {
    let cols: Vec<Vec<f64>> = (0..matrix.columns.len())
        .map(|j| matrix.column(j))
        .collect();
    let ranks: Vec<Vec<f64>> = cols.iter().map(|c| average_ranks(c)).collect();
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..cols.len() {
        let redundant = kept.iter().any(|&k| {
            pearson(&ranks[j], &ranks[k])
                .map(|r| r.abs() > threshold)
                .unwrap_or(false)
        });
        if !redundant {
            kept.push(j);
        }
    }
    kept.into_iter()
        .map(|j| matrix.columns[j].name.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedFeature {
    pub name: String,
    /// |Spearman rho| with the label (0 for a constant column).
    pub spearman: f64,
    /// Training accuracy of the best single-threshold stump, in [0, 1].
    pub stump_accuracy: f64,
    /// Mean of the two rank positions (1 = best).
    pub combined_rank: f64,
}

/// Features ordered best first.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRanking {
    pub entries: Vec<RankedFeature>,
}

impl FeatureRanking {
    pub fn top(&self, k: usize) -> Vec<String> {
        self.entries
            .iter()
            .take(k)
            .map(|e| e.name.clone())
            .collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }
}

/// Best training accuracy of a depth-1 threshold split on one feature.
pub fn stump_accuracy(values: &[f64], labels: &[u8]) -> f64 {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total_pos = labels.iter().filter(|&&l| l == 1).count();
    let total_neg = n - total_pos;
    // split with nothing on the left: predict one class everywhere
    let mut best = total_pos.max(total_neg);
    let (mut left_pos, mut left_neg) = (0usize, 0usize);
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] == 1 {
            left_pos += 1;
        } else {
            left_neg += 1;
        }
        let boundary = rank + 1 == n || values[order[rank + 1]] != values[i];
        if boundary {
            let right_pos = total_pos - left_pos;
            let right_neg = total_neg - left_neg;
            best = best.max(left_neg + right_pos).max(left_pos + right_neg);
        }
    }
    best as f64 / n as f64
}

fn positions_desc(scores: &[f64]) -> Vec<f64> {
    // rank 1 = largest score; ties broken by column order
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut pos = vec![0.0; scores.len()];
    for (p, &i) in order.iter().enumerate() {
        pos[i] = (p + 1) as f64;
    }
    pos
}

/// Ranks the matrix columns by label correlation and stump accuracy.
pub fn rank_features(matrix: &FeatureMatrix, labels: &[u8]) -> Result<FeatureRanking> {
    if labels.len() != matrix.rows.len() {
        return Err(FeatureError::LabelMismatch {
            rows: matrix.rows.len(),
            labels: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(FeatureError::SingleClassLabels);
    }
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let p = matrix.columns.len();
    let mut rho = Vec::with_capacity(p);
    let mut acc = Vec::with_capacity(p);
    for j in 0..p {
        let col = matrix.column(j);
        rho.push(spearman(&col, &y).map(f64::abs).unwrap_or(0.0));
        acc.push(stump_accuracy(&col, labels));
    }
    let (rp, ap) = (positions_desc(&rho), positions_desc(&acc));
    let mut entries: Vec<(usize, RankedFeature)> = (0..p)
        .map(|j| {
            (
                j,
                RankedFeature {
                    name: matrix.columns[j].name.clone(),
                    spearman: rho[j],
                    stump_accuracy: acc[j],
                    combined_rank: (rp[j] + ap[j]) / 2.0,
                },
            )
        })
        .collect();
    entries.sort_by(|a, b| {
        a.1.combined_rank
            .total_cmp(&b.1.combined_rank)
            .then(a.0.cmp(&b.0))
    });
    Ok(FeatureRanking {
        entries: entries.into_iter().map(|(_, e)| e).collect(),
    })
}

/// Top `k` columns after the collinearity filter, ranked against the hand
/// labels of the rows.
pub fn select_top_features(
    matrix: &FeatureMatrix,
    k: usize,
    colinearity_threshold: f64,
) -> Result<Vec<String>> {
    let kept = colinearity_filter(matrix, colinearity_threshold);
    let reduced = matrix.select(&kept)?;
    Ok(rank_features(&reduced, &reduced.labels())?.top(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::PenSample;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const FS: f64 = 134.0;

    fn key() -> TrialKey {
        TrialKey::new("S1", 1, Hand::Dominant, 1)
    }

    fn stroke(points: impl Fn(f64) -> (f64, f64), n: usize) -> Stroke {
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / FS;
                let (x, y) = points(t);
                PenSample {
                    t,
                    x,
                    y,
                    pressure: 0.7,
                }
            })
            .collect();
        Stroke::from_samples(key(), samples, FS).unwrap()
    }

    fn ctx() -> TrialContext {
        TrialContext {
            stroke_count: 5,
            trial_start_time: 0.0,
        }
    }

    #[test]
    fn horizontal_line() {
        let s = stroke(|t| (10.0 * t, 3.0), 135);
        let f = extract_stroke_features(&s, None, ctx()).unwrap().values;
        assert_eq!(f[Feature::Slant], 0.0);
        assert!(f[Feature::StraightnessIrregularity].abs() < 1e-12);
        assert!((f[Feature::SegmentLength] - f[Feature::HorizontalSize]).abs() < 1e-9);
        assert_eq!(f[Feature::VerticalSize], 0.0);
        assert_eq!(f[Feature::LoopSurfaceArea], 0.0);
        assert_eq!(f[Feature::NumberOfStrokes], 5.0);
        assert!((f[Feature::Pv] - f[Feature::AverageAbsoluteVelocity] * 0.7).abs() < 1e-12);
    }

    #[test]
    fn ten_millimetre_line() {
        let n = 135;
        let s = stroke(|t| (10.0 * t * FS / (n as f64 - 1.0), 0.0), n);
        let f = extract_stroke_features(&s, None, ctx()).unwrap().values;
        assert!((f[Feature::SegmentLength] - 10.0).abs() < 1e-9);
        assert!((f[Feature::HorizontalSize] - 10.0).abs() < 1e-9);
        assert!((f[Feature::AbsoluteSize] - 10.0).abs() < 1e-9);
        assert!((f[Feature::TimeDuration] - 1.0).abs() < 1e-12);
        assert_eq!(f[Feature::RelativeInitialSlant], 1.0);
    }

    #[test]
    fn closed_square_is_degenerate() {
        let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)];
        let mut samples = Vec::new();
        for w in corners.windows(2) {
            for k in 0..10 {
                let a = k as f64 / 10.0;
                samples.push((
                    w[0].0 + a * (w[1].0 - w[0].0),
                    w[0].1 + a * (w[1].1 - w[0].1),
                ));
            }
        }
        samples.push((0.0, 0.0));
        let samples = samples
            .into_iter()
            .enumerate()
            .map(|(i, (x, y))| PenSample {
                t: i as f64 / FS,
                x,
                y,
                pressure: 1.0,
            })
            .collect();
        let s = Stroke::from_samples(key(), samples, FS).unwrap();
        let f = extract_stroke_features(&s, None, ctx()).unwrap();
        assert!(f.degenerate);
        assert_eq!(f.values[Feature::Slant], 0.0);
        assert_eq!(f.values[Feature::StraightnessIrregularity], 0.0);
    }

    #[test]
    fn semicircle_arc_length() {
        let r = 5.0;
        let n = 134;
        let s = stroke(
            |t| {
                let a = PI * t * FS / (n as f64 - 1.0);
                (r * a.cos(), r * a.sin())
            },
            n,
        );
        let f = extract_stroke_features(&s, None, ctx()).unwrap().values;
        // oracle: analytic arc length
        let expected = PI * r;
        assert!((f[Feature::SegmentLength] / expected - 1.0).abs() < 0.01);
        assert!(f[Feature::StraightnessIrregularity] > 0.0);
        // endpoints (5,0) -> (-5,0)
        assert!((f[Feature::Slant].abs() - PI).abs() < 1e-9);
    }

    #[test]
    fn loop_area_uses_next_stroke() {
        // upper and lower half circles close a disc
        let n = 100;
        let upper = stroke(
            |t| {
                let a = PI * t * FS / (n as f64 - 1.0);
                (a.cos(), a.sin())
            },
            n,
        );
        let lower = stroke(
            |t| {
                let a = PI + PI * t * FS / (n as f64 - 1.0);
                (a.cos(), a.sin())
            },
            n,
        );
        let f = extract_stroke_features(&upper, Some(&lower), ctx())
            .unwrap()
            .values;
        assert!((f[Feature::LoopSurfaceArea] - PI).abs() < 0.01);
    }

    #[test]
    fn too_short() {
        let s = stroke(|t| (t, t), 3);
        assert!(matches!(
            extract_stroke_features(&s, None, ctx()),
            Err(FeatureError::StrokeTooShort(3))
        ));
    }

    #[test]
    fn feature_names_round_trip() {
        for f in Feature::ALL {
            assert_eq!(f.name().parse::<Feature>().unwrap(), f);
        }
        assert_eq!(Feature::ALL.len(), 25);
    }

    fn matrix_from(trials: &[(&[f64], u8)]) -> FeatureMatrix {
        let mut rows = Vec::new();
        for (vals, trial) in trials {
            for v in *vals {
                rows.push(FeatureRow {
                    values: vec![*v],
                    key: TrialKey::new("S1", 1, Hand::Dominant, *trial),
                });
            }
        }
        FeatureMatrix {
            columns: vec![ColumnMeta {
                name: "f".into(),
                normalized: false,
            }],
            rows,
        }
    }

    #[test]
    fn normalize_affine() {
        let m = normalize_per_trial(&matrix_from(&[(&[2.0, 4.0, 6.0], 1)]));
        assert_eq!(m.column(0), vec![0.0, 0.5, 1.0]);
        assert!(m.columns[0].normalized);
    }

    #[test]
    fn normalize_constant() {
        let m = normalize_per_trial(&matrix_from(&[(&[3.0, 3.0, 3.0], 1)]));
        assert_eq!(m.column(0), vec![0.5; 3]);
    }

    #[test]
    fn normalize_trials_independently() {
        let m = normalize_per_trial(&matrix_from(&[(&[0.0, 10.0], 1), (&[5.0, 15.0], 2)]));
        // brute force: min-max of each trial's own values
        let expected: Vec<f64> = [[0.0f64, 10.0], [5.0, 15.0]]
            .iter()
            .flat_map(|t| {
                let (lo, hi) = (t[0].min(t[1]), t[0].max(t[1]));
                t.iter()
                    .map(move |v| (v - lo) / (hi - lo))
                    .collect::<Vec<_>>()
            })
            .collect();
        assert_eq!(m.column(0), expected);
        assert_eq!(expected, vec![0.0, 1.0, 0.0, 1.0]);
    }

    fn matrix_with_columns(cols: Vec<Vec<f64>>) -> FeatureMatrix {
        let n = cols[0].len();
        FeatureMatrix {
            columns: (0..cols.len())
                .map(|j| ColumnMeta {
                    name: format!("c{j}"),
                    normalized: true,
                })
                .collect(),
            rows: (0..n)
                .map(|i| FeatureRow {
                    values: cols.iter().map(|c| c[i]).collect(),
                    key: TrialKey::new("S1", 1, Hand::from_label((i % 2) as u8), 1),
                })
                .collect(),
        }
    }

    #[test]
    fn colinearity_duplicates_and_negations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..100).map(|_| rng.random()).collect();
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        let m = matrix_with_columns(vec![a.clone(), a.clone()]);
        assert_eq!(colinearity_filter(&m, 0.95), vec!["c0"]);
        let m = matrix_with_columns(vec![a, neg]);
        assert_eq!(colinearity_filter(&m, 0.95), vec!["c0"]);
    }

    #[test]
    fn colinearity_keeps_independent_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let cols: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..500).map(|_| rng.random::<f64>()).collect())
            .collect();
        // oracle: brute-force rho for every pair is far below the threshold
        for i in 0..6 {
            for j in 0..i {
                let rho = brute_spearman(&cols[i], &cols[j]);
                assert!(rho.abs() < 0.2, "{rho}");
            }
        }
        let m = matrix_with_columns(cols);
        assert_eq!(colinearity_filter(&m, 0.95).len(), 6);
    }

    /// Textbook formula for distinct values: 1 - 6 sum d^2 / (n (n^2 - 1)).
    fn brute_spearman(a: &[f64], b: &[f64]) -> f64 {
        let rank = |v: &[f64], i: usize| v.iter().filter(|x| **x < v[i]).count() as f64;
        let n = a.len() as f64;
        let d2: f64 = (0..a.len())
            .map(|i| (rank(a, i) - rank(b, i)).powi(2))
            .sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    }

    /// Exhaustive stump search: every threshold, both orientations.
    fn brute_stump(values: &[f64], labels: &[u8]) -> f64 {
        let mut cands: Vec<f64> = values.to_vec();
        cands.push(f64::NEG_INFINITY);
        let mut best = 0;
        for &thr in &cands {
            for flip in [false, true] {
                let correct = values
                    .iter()
                    .zip(labels)
                    .filter(|(v, l)| ((**v > thr) ^ flip) as u8 == **l)
                    .count();
                best = best.max(correct);
            }
        }
        best as f64 / values.len() as f64
    }

    #[test]
    fn noise_stump_is_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..1000).map(|_| rng.random()).collect();
        let labels: Vec<u8> = (0..1000).map(|i| (i % 2) as u8).collect();
        let acc = stump_accuracy(&values, &labels);
        assert_eq!(acc, brute_stump(&values, &labels));
        assert!((acc - 0.5).abs() <= 0.05, "{acc}");
    }

    #[test]
    fn label_identical_feature_ranks_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let labels: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
        let noise: Vec<f64> = (0..200).map(|_| rng.random()).collect();
        let informative: Vec<f64> = labels
            .iter()
            .map(|&l| l as f64 * 0.3 + rng.random::<f64>() * 0.5)
            .collect();
        let ident: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
        let m = matrix_with_columns(vec![noise, informative, ident]);
        let r = rank_features(&m, &labels).unwrap();
        assert_eq!(r.names(), vec!["c2", "c1", "c0"]);
        assert!((r.entries[0].spearman - 1.0).abs() < 1e-12);
        assert_eq!(r.entries[0].stump_accuracy, 1.0);
    }

    #[test]
    fn single_class_rejected() {
        let m = matrix_with_columns(vec![vec![0.1, 0.2, 0.3]]);
        assert!(matches!(
            rank_features(&m, &[1, 1, 1]),
            Err(FeatureError::SingleClassLabels)
        ));
    }

    #[test]
    fn csv_reload_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..20).map(|_| rng.random::<f64>() * 1e3 - 500.0).collect())
            .collect();
        let m = matrix_with_columns(cols);
        let back = FeatureMatrix::from_csv(&m.to_csv(), true).unwrap();
        assert_eq!(back, m);
    }

    proptest! {
        #[test]
        fn stump_matches_exhaustive_search(
            data in prop::collection::vec((0u8..6, 0u8..2), 2..40)
        ) {
            let values: Vec<f64> = data.iter().map(|d| d.0 as f64).collect();
            let labels: Vec<u8> = data.iter().map(|d| d.1).collect();
            prop_assert_eq!(stump_accuracy(&values, &labels), brute_stump(&values, &labels));
        }

        #[test]
        fn translation_moves_only_initial_position(
            dx in -100.0f64..100.0,
            dy in -100.0f64..100.0,
            f in 0.5f64..2.0,
        ) {
            let base = |t: f64| (3.0 * t + 0.5 * (2.0 * PI * f * t).cos(), 2.0 * (2.0 * PI * f * t).sin());
            let a = stroke(base, 60);
            let a2 = stroke(|t| (base(t).0 + 1.0, base(t).1 - 2.0), 60);
            let b = stroke(|t| (base(t).0 + dx, base(t).1 + dy), 60);
            let b2 = stroke(|t| (base(t).0 + 1.0 + dx, base(t).1 - 2.0 + dy), 60);
            let fa = extract_stroke_features(&a, Some(&a2), ctx()).unwrap().values;
            let fb = extract_stroke_features(&b, Some(&b2), ctx()).unwrap().values;
            for feat in Feature::ALL {
                let (va, vb) = (fa[feat], fb[feat]);
                match feat {
                    Feature::InitialHorizontalPosition => prop_assert!((vb - va - dx).abs() < 1e-9),
                    Feature::InitialVerticalPosition => prop_assert!((vb - va - dy).abs() < 1e-9),
                    _ => prop_assert!((vb - va).abs() <= 1e-6 * (1.0 + va.abs()), "{feat}: {va} vs {vb}"),
                }
            }
        }

        #[test]
        fn time_shift_moves_only_start_time(c in -5.0f64..5.0) {
            let a = stroke(|t| (t, (2.0 * PI * t).sin()), 50);
            let mut b = a.clone();
            for s in &mut b.samples {
                s.t += c;
            }
            let fa = extract_stroke_features(&a, None, ctx()).unwrap().values;
            let fb = extract_stroke_features(&b, None, ctx()).unwrap().values;
            for feat in Feature::ALL {
                if feat == Feature::StartTime {
                    prop_assert!((fb[feat] - fa[feat] - c).abs() < 1e-9);
                } else {
                    prop_assert!((fb[feat] - fa[feat]).abs() <= 1e-9 * (1.0 + fa[feat].abs()), "{feat}");
                }
            }
        }

        #[test]
        fn normalization_is_idempotent(vals in prop::collection::vec(-50.0f64..50.0, 2..30)) {
            let m = matrix_from(&[(&vals, 1)]);
            let once = normalize_per_trial(&m);
            let twice = normalize_per_trial(&once);
            for (a, b) in once.column(0).iter().zip(twice.column(0)) {
                prop_assert!((a - b).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(a));
            }
        }
    }
}
