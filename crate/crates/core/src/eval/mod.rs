//! Cross-validation plans, grading, EI agreement analysis and statistics.

mod agreement;
mod folds;
mod grading;
mod pipeline;
mod stats;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::BaselineError;
use crate::db::DbError;
use crate::features::FeatureError;
use crate::kinematics::KinematicsError;
use crate::neural::NeuralError;

pub use agreement::{
    agreement_stats, bland_altman, compare_with_ei, AgreementReport, AgreementStats, BlandAltman,
    Fit, Method,
};
pub use folds::{loso_plan, stratified_kfold_plan, stratified_split, Fold, FoldPlan, Scheme};
pub use grading::{
    accuracy_to_4point, fit_exponential, fit_quadratic, invert_quadratic, scale_ei, EiScaling,
    Exponential, Quadratic, Scaled,
};
pub use pipeline::{
    baseline_grid, build_stroke_table, cross_validate_net, loso_evaluate, task_effect, GridConfig,
    GridRow, MeanSd, NetKind, NetRunConfig, StrokeTable, SubjectResult, TaskEffectConfig,
    TaskEffectRow,
};
pub use stats::{
    kolmogorov_q, ks_normality, mann_whitney_statistic, mann_whitney_u, t_test_unpaired,
    StatTestResult,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("class {class} has {count} rows, fewer than the {k} folds")]
    ClassTooSmall { class: u8, count: usize, k: usize },
    #[error("{0} subjects; leave-one-subject-out needs at least 3")]
    TooFewSubjects(usize),
    #[error("accuracy {0} outside [0, 100]")]
    OutOfRange(f64),
    #[error("fit is rank deficient")]
    RankDeficient,
    #[error("non-positive y value {0} in exponential fit")]
    NonPositiveY(f64),
    #[error("quadratic fit is not concave (a = {0})")]
    ConvexFit(f64),
    #[error("paired arrays differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("zero variance")]
    ZeroVariance,
    #[error("malformed grade table: {0}")]
    MalformedGrades(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Db(#[from] DbError),
}

impl EvalError {
    /// Numerical rather than data-validation failure.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            EvalError::RankDeficient
                | EvalError::ConvexFit(_)
                | EvalError::ZeroVariance
                | EvalError::Neural(NeuralError::DivergedLoss { .. })
        )
    }
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// One subject's grades; any method may be missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectGrade {
    pub subject: String,
    pub class: String,
    pub db_score: Option<f64>,
    pub mlp_accuracy: Option<f64>,
    pub four_point_mlp: Option<f64>,
    pub cnn_accuracy: Option<f64>,
    pub four_point_cnn: Option<f64>,
    pub ei_score: Option<f64>,
}

const GRADE_HEADER: &str = "subject,class,dbs,mlp_acc,fourpt_mlp,cnn_acc,fourpt_cnn,eis";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes grades with the columns
/// `subject,class,dbs,mlp_acc,fourpt_mlp,cnn_acc,fourpt_cnn,eis`.
pub fn grades_to_csv(grades: &[SubjectGrade]) -> String {
    let mut out = format!("{GRADE_HEADER}\n");
    for g in grades {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            g.subject,
            g.class,
            opt(g.db_score),
            opt(g.mlp_accuracy),
            opt(g.four_point_mlp),
            opt(g.cnn_accuracy),
            opt(g.four_point_cnn),
            opt(g.ei_score)
        )
        .unwrap();
    }
    out
}

pub fn grades_from_csv(text: &str) -> Result<Vec<SubjectGrade>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| EvalError::MalformedGrades(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.join(",") != GRADE_HEADER {
        return Err(EvalError::MalformedGrades(format!(
            "expected header {GRADE_HEADER}"
        )));
    }
    reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| EvalError::MalformedGrades(e.to_string()))?;
            let num = |j: usize| -> Result<Option<f64>> {
                let s = rec[j].trim();
                if s.is_empty() {
                    return Ok(None);
                }
                s.parse::<f64>().map(Some).map_err(|_| {
                    EvalError::MalformedGrades(format!("row {}: bad {}", i + 2, header[j]))
                })
            };
            Ok(SubjectGrade {
                subject: rec[0].to_string(),
                class: rec[1].to_string(),
                db_score: num(2)?,
                mlp_accuracy: num(3)?,
                four_point_mlp: num(4)?,
                cnn_accuracy: num(5)?,
                four_point_cnn: num(6)?,
                ei_score: num(7)?,
            })
        })
        .collect()
}

/// The published 43-subject grade table.
pub fn table2() -> Vec<SubjectGrade> {
    grades_from_csv(include_str!("../../../../fixtures/table2.csv"))
        .expect("bundled fixture parses")
}
