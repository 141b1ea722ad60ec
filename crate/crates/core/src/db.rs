//! Two-cluster Davies-Bouldin index per feature and the per-subject DB score.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::features::{select_top_features, FeatureError, FeatureMatrix};
use crate::ingest::Hand;

#[derive(Debug, Error)]
pub enum DbError {
    #[error("empty cluster")]
    EmptyCluster,
    #[error("subject {subject} has no {hand:?} strokes")]
    MissingHand { subject: String, hand: Hand },
    #[error("no strokes for subject {0}")]
    UnknownSubject(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

pub type Result<T> = std::result::Result<T, DbError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbConfig {
    /// Number of top-ranked features summed into the score.
    pub k: usize,
    /// Value used when the two centroids coincide.
    pub cap: f64,
    /// |Spearman rho| above which a feature counts as redundant.
    pub colinearity_threshold: f64,
}

impl Default for DbConfig {
    fn default() -> Self {
        DbConfig {
            k: 10,
            cap: 1e6,
            colinearity_threshold: 0.95,
        }
    }
}

/// Index value, `capped` set when the centroids coincided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbIndex {
    pub value: f64,
    pub capped: bool,
}

const COINCIDENT: f64 = 1e-12;

fn centroid_and_scatter(v: &[f64]) -> (f64, f64) {
    let c = v.iter().sum::<f64>() / v.len() as f64;
    let s = v.iter().map(|x| (x - c).abs()).sum::<f64>() / v.len() as f64;
    (c, s)
}

/// (S1 + S2) / |c1 - c2| with L1 scatter around each centroid.
pub fn db_index_feature(d: &[f64], nd: &[f64], cap: f64) -> Result<DbIndex> {
    if d.is_empty() || nd.is_empty() {
        return Err(DbError::EmptyCluster);
    }
    let (c1, s1) = centroid_and_scatter(d);
    let (c2, s2) = centroid_and_scatter(nd);
    let gap = (c1 - c2).abs();
    if gap < COINCIDENT {
        return Ok(DbIndex {
            value: cap,
            capped: true,
        });
    }
    Ok(DbIndex {
        value: (s1 + s2) / gap,
        capped: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDb {
    pub feature: String,
    pub index: DbIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbScoreReport {
    pub subject: String,
    pub k: usize,
    pub per_feature: Vec<FeatureDb>,
    pub db_score: f64,
    /// Every feature hit the cap: the two hands are indistinguishable.
    pub maximal_ambidexterity: bool,
}

impl DbScoreReport {
    pub fn any_capped(&self) -> bool {
        self.per_feature.iter().any(|f| f.index.capped)
    }
}

/// Sums the per-feature indices of one subject over `features`.
///
/// Values are pooled over every task and trial of the subject.
pub fn db_score(
    matrix: &FeatureMatrix,
    subject: &str,
    features: &[String],
    cap: f64,
) -> Result<DbScoreReport> {
    let rows = matrix.filter_rows(|r| r.key.subject == subject);
    if rows.is_empty() {
        return Err(DbError::UnknownSubject(subject.to_string()));
    }
    let rows = rows.select(features)?;
    let split = |hand: Hand| rows.filter_rows(|r| r.key.hand == hand);
    let (d, nd) = (split(Hand::Dominant), split(Hand::NonDominant));
    for (m, hand) in [(&d, Hand::Dominant), (&nd, Hand::NonDominant)] {
        if m.is_empty() {
            return Err(DbError::MissingHand {
                subject: subject.to_string(),
                hand,
            });
        }
    }
    let per_feature = features
        .iter()
        .enumerate()
        .map(|(j, name)| {
            Ok(FeatureDb {
                feature: name.clone(),
                index: db_index_feature(&d.column(j), &nd.column(j), cap)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let db_score = per_feature.iter().map(|f| f.index.value).sum();
    let maximal_ambidexterity =
        !per_feature.is_empty() && per_feature.iter().all(|f| f.index.capped);
    Ok(DbScoreReport {
        subject: subject.to_string(),
        k: features.len(),
        per_feature,
        db_score,
        maximal_ambidexterity,
    })
}

/// DB reports for every subject in the (normalized) matrix, in subject order.
pub fn grade_all(matrix: &FeatureMatrix, config: &DbConfig) -> Result<Vec<DbScoreReport>> {
    let features = select_top_features(matrix, config.k, config.colinearity_threshold)?;
    let subjects: BTreeSet<&str> = matrix.rows.iter().map(|r| r.key.subject.as_str()).collect();
    subjects
        .into_iter()
        .map(|s| db_score(matrix, s, &features, config.cap))
        .collect()
}

/// CSV with one `subject,k,feature,db_index` line per feature plus a
/// `total` summary line per subject.
pub fn reports_to_csv(reports: &[DbScoreReport]) -> String {
    let mut out = String::from("subject,k,feature,db_index\n");
    for r in reports {
        for f in &r.per_feature {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.subject, r.k, f.feature, f.index.value
            ));
        }
        out.push_str(&format!("{},{},total,{}\n", r.subject, r.k, r.db_score));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{ColumnMeta, FeatureRow};
    use crate::ingest::TrialKey;
    use proptest::prelude::*;

    fn idx(d: &[f64], nd: &[f64]) -> DbIndex {
        db_index_feature(d, nd, 1e6).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(idx(&[0.0, 0.0], &[1.0, 1.0]).value, 0.0);
        assert_eq!(idx(&[0.0, 2.0], &[1.0, 3.0]).value, 2.0);
        let c = idx(&[0.0, 1.0], &[0.0, 1.0]);
        assert!(c.capped);
        assert_eq!(c.value, 1e6);
        assert!(matches!(
            db_index_feature(&[], &[1.0], 1e6),
            Err(DbError::EmptyCluster)
        ));
    }

    fn matrix(cols: &[(&str, &[f64], &[f64])]) -> FeatureMatrix {
        let n_d = cols[0].1.len();
        let n_nd = cols[0].2.len();
        let mut rows = Vec::new();
        for i in 0..n_d {
            rows.push(FeatureRow {
                values: cols.iter().map(|c| c.1[i]).collect(),
                key: TrialKey::new("S1", 1, Hand::Dominant, 1),
            });
        }
        for i in 0..n_nd {
            rows.push(FeatureRow {
                values: cols.iter().map(|c| c.2[i]).collect(),
                key: TrialKey::new("S1", 1, Hand::NonDominant, 1),
            });
        }
        FeatureMatrix {
            columns: cols
                .iter()
                .map(|c| ColumnMeta {
                    name: c.0.to_string(),
                    normalized: true,
                })
                .collect(),
            rows,
        }
    }

    #[test]
    fn score_reduces_to_single_feature() {
        let m = matrix(&[("a", &[0.0, 2.0], &[1.0, 3.0])]);
        let r = db_score(&m, "S1", &["a".to_string()], 1e6).unwrap();
        assert_eq!(r.db_score, 2.0);
        assert_eq!(r.k, 1);
    }

    #[test]
    fn identical_hands_flagged() {
        let m = matrix(&[
            ("a", &[0.1, 0.4], &[0.1, 0.4]),
            ("b", &[0.9, 0.2], &[0.9, 0.2]),
        ]);
        let r = db_score(&m, "S1", &["a".into(), "b".into()], 1e6).unwrap();
        assert!(r.maximal_ambidexterity);
        assert_eq!(r.db_score, 2e6);
    }

    #[test]
    fn missing_hand() {
        let mut m = matrix(&[("a", &[0.0, 2.0], &[1.0, 3.0])]);
        m.rows.retain(|r| r.key.hand == Hand::Dominant);
        assert!(matches!(
            db_score(&m, "S1", &["a".into()], 1e6),
            Err(DbError::MissingHand { .. })
        ));
    }

    #[test]
    fn csv_has_summary_row() {
        let m = matrix(&[("a", &[0.0, 2.0], &[1.0, 3.0])]);
        let r = db_score(&m, "S1", &["a".into()], 1e6).unwrap();
        assert_eq!(
            reports_to_csv(&[r]),
            "subject,k,feature,db_index\nS1,1,a,2\nS1,1,total,2\n"
        );
    }

    proptest! {
        #[test]
        fn symmetric(d in prop::collection::vec(-10.0f64..10.0, 1..10),
                     nd in prop::collection::vec(-10.0f64..10.0, 1..10)) {
            prop_assert_eq!(idx(&d, &nd), idx(&nd, &d));
        }

        #[test]
        fn separating_centroids_lowers_index(
            d in prop::collection::vec(-1.0f64..1.0, 2..10),
            nd in prop::collection::vec(-1.0f64..1.0, 2..10),
            shift in 0.1f64..5.0,
        ) {
            let a = idx(&d, &nd);
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let dir = if mean(&nd) >= mean(&d) { 1.0 } else { -1.0 };
            let moved: Vec<f64> = nd.iter().map(|v| v + dir * shift).collect();
            let b = idx(&d, &moved);
            prop_assume!(!a.capped);
            prop_assert!(b.value < a.value || (a.value == 0.0 && b.value == 0.0));
        }

        #[test]
        fn additive_over_features(
            a in prop::collection::vec(0.0f64..1.0, 6),
            b in prop::collection::vec(0.0f64..1.0, 6),
        ) {
            let m = matrix(&[("a", &a[..3], &a[3..]), ("b", &b[..3], &b[3..])]);
            let both = db_score(&m, "S1", &["a".into(), "b".into()], 1e6).unwrap();
            let only_a = db_score(&m, "S1", &["a".into()], 1e6).unwrap();
            let ib = both.per_feature[1].index.value;
            prop_assert!((both.db_score - ib - only_a.db_score).abs() <= 1e-9 * both.db_score.abs().max(1.0));
        }
    }
}
