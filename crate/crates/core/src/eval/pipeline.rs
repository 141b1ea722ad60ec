//! End-to-end runs over a dataset: leave-one-subject-out and k-fold network
//! evaluation, the baseline comparison grid and the per-task study.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::folds::{loso_plan, stratified_kfold_plan, stratified_split, Fold};
use super::grading::accuracy_to_4point;
use super::Result;
use crate::baselines::{bagged, train_baseline, BaselineKind, BaselineParams, Bootstrap};
use crate::features::{
    features_of_strokes, normalize_per_trial, select_top_features, FeatureMatrix, FeatureRow,
};
use crate::ingest::Dataset;
use crate::kinematics::{segment_trial, SegmentConfig};
use crate::neural::{
    cnn_prepare_stroke, Architecture, CnnConfig, MlpConfig, Model, Samples, TrainReport,
    STROKE_LENGTH,
};
use crate::numeric::{mean, mix_seed, sample_sd};

/// Every stroke of a dataset as a feature row and as a CNN input.
#[derive(Debug, Clone, PartialEq)]
pub struct StrokeTable {
    pub raw: FeatureMatrix,
    /// Per-trial min-max normalized copy of `raw`.
    pub normalized: FeatureMatrix,
    /// `(x, y, t)` channel-major arrays of `STROKE_LENGTH` samples.
    pub strokes: Vec<Vec<f64>>,
    /// Strokes longer than `STROKE_LENGTH` that were center-cropped.
    pub cropped: usize,
}

impl StrokeTable {
    pub fn labels(&self) -> Vec<u8> {
        self.normalized.labels()
    }

    pub fn subjects(&self) -> Vec<String> {
        self.normalized
            .rows
            .iter()
            .map(|r| r.key.subject.clone())
            .collect()
    }
}

pub fn build_stroke_table(dataset: &Dataset, config: &SegmentConfig) -> Result<StrokeTable> {
    let mut raw = FeatureMatrix::empty_full();
    let mut strokes = Vec::new();
    let mut cropped = 0;
    for trial in &dataset.trials {
        let segs = segment_trial(trial, config)?;
        let t0 = trial.samples.first().map_or(0.0, |s| s.t);
        for (s, f) in segs.iter().zip(features_of_strokes(&segs, t0)?) {
            raw.rows.push(FeatureRow {
                values: f.values.0.to_vec(),
                key: trial.key.clone(),
            });
            let p = cnn_prepare_stroke(s, STROKE_LENGTH);
            cropped += p.cropped as usize;
            strokes.push(p.data);
        }
    }
    Ok(StrokeTable {
        normalized: normalize_per_trial(&raw),
        raw,
        strokes,
        cropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    Mlp,
    Cnn,
}

/// Network evaluation settings. `None` overrides keep the architecture
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetRunConfig {
    pub kind: NetKind,
    /// Features fed to the MLP.
    pub k: usize,
    pub colinearity_threshold: f64,
    pub seed: u64,
    pub learning_rate: Option<f64>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
}

impl NetRunConfig {
    pub fn new(kind: NetKind, seed: u64) -> NetRunConfig {
        NetRunConfig {
            kind,
            k: 10,
            colinearity_threshold: 0.95,
            seed,
            learning_rate: None,
            max_epochs: None,
            patience: None,
        }
    }

    fn architecture(&self, input_dim: usize) -> Architecture {
        let mut arch = match self.kind {
            NetKind::Mlp => Architecture::Mlp(MlpConfig::new(input_dim, self.seed)),
            NetKind::Cnn => Architecture::Cnn(CnnConfig::new(self.seed)),
        };
        let t = arch.train_options_mut();
        if let Some(lr) = self.learning_rate {
            t.learning_rate = lr;
        }
        if let Some(e) = self.max_epochs {
            t.max_epochs = e;
        }
        if let Some(p) = self.patience {
            t.patience = p;
        }
        arch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectResult {
    pub subject: String,
    /// Test accuracy in percent.
    pub accuracy: f64,
    pub four_point: f64,
    /// Feature columns used (MLP only).
    pub features: Vec<String>,
    pub report: TrainReport,
}

/// Trains on `fold.train`, stops early on `fold.validation` and returns the
/// test accuracy with the training report.
fn run_fold(
    table: &StrokeTable,
    fold: &Fold,
    cfg: &NetRunConfig,
) -> Result<(f64, Vec<String>, TrainReport)> {
    let labels = table.labels();
    let (inputs, features): (Vec<Vec<f64>>, Vec<String>) = match cfg.kind {
        NetKind::Mlp => {
            let train_rows = table.normalized.subset(&fold.train);
            let names = select_top_features(&train_rows, cfg.k, cfg.colinearity_threshold)?;
            let selected = table.normalized.select(&names)?;
            (selected.values(), names)
        }
        NetKind::Cnn => (table.strokes.clone(), Vec::new()),
    };
    let all = Samples { inputs, labels };
    let mut model = Model::new(cfg.architecture(features.len().max(1)))?;
    let report = model.fit(&all.subset(&fold.train), &all.subset(&fold.validation))?;
    let acc = model.accuracy(&all.subset(&fold.test))?;
    Ok((acc, features, report))
}

/// Leave-one-subject-out: the held-out subject's test accuracy is its grade.
/// Every fold starts from the same initial weights.
pub fn loso_evaluate(table: &StrokeTable, cfg: &NetRunConfig) -> Result<Vec<SubjectResult>> {
    let plan = loso_plan(&table.subjects(), &table.labels(), cfg.seed)?;
    plan.folds
        .iter()
        .map(|fold| {
            let (accuracy, features, report) = run_fold(table, fold, cfg)?;
            Ok(SubjectResult {
                subject: fold.subject.clone().unwrap_or_default(),
                accuracy,
                four_point: accuracy_to_4point(accuracy)?,
                features,
                report,
            })
        })
        .collect()
}

/// Stratified k-fold test accuracies; each fold's training rows are split
/// 80/20 for early stopping.
pub fn cross_validate_net(table: &StrokeTable, cfg: &NetRunConfig, k: usize) -> Result<Vec<f64>> {
    let labels = table.labels();
    let plan = stratified_kfold_plan(&labels, k, cfg.seed)?;
    plan.folds
        .into_iter()
        .enumerate()
        .map(|(i, mut fold)| {
            let (train, val) = stratified_split(
                &fold.train,
                &labels,
                0.2,
                mix_seed(cfg.seed, &[i as u64, 7]),
            );
            fold.train = train;
            fold.validation = val;
            Ok(run_fold(table, &fold, cfg)?.0)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> MeanSd {
        MeanSd {
            mean: mean(values),
            sd: if values.len() > 1 {
                sample_sd(values)
            } else {
                0.0
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub kinds: Vec<BaselineKind>,
    pub params: BaselineParams,
    pub k: usize,
    pub colinearity_threshold: f64,
    pub folds: usize,
    pub n_estimators: usize,
    pub seed: u64,
}

impl GridConfig {
    pub fn new(seed: u64) -> GridConfig {
        GridConfig {
            kinds: BaselineKind::ALL.to_vec(),
            params: BaselineParams::default(),
            k: 10,
            colinearity_threshold: 0.95,
            folds: 10,
            n_estimators: 10,
            seed,
        }
    }
}

/// One classifier's fold accuracies (%) without feature selection, with it,
/// and with feature selection plus bagging.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub kind: BaselineKind,
    pub params: String,
    pub without_fs: MeanSd,
    pub with_fs: MeanSd,
    pub with_fs_bagging: MeanSd,
}

impl GridRow {
    pub fn csv_header() -> &'static str {
        "kind,params,without_fs_mean,without_fs_sd,with_fs_mean,with_fs_sd,with_fs_bagging_mean,with_fs_bagging_sd"
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.kind,
            self.params,
            self.without_fs.mean,
            self.without_fs.sd,
            self.with_fs.mean,
            self.with_fs.sd,
            self.with_fs_bagging.mean,
            self.with_fs_bagging.sd
        )
    }
}

struct GridFold {
    full_train: FeatureMatrix,
    full_test: FeatureMatrix,
    fs_train: FeatureMatrix,
    fs_test: FeatureMatrix,
    train_labels: Vec<u8>,
    test_labels: Vec<u8>,
}

fn grid_folds(
    matrix: &FeatureMatrix,
    k: usize,
    threshold: f64,
    folds: usize,
    seed: u64,
) -> Result<Vec<GridFold>> {
    let labels = matrix.labels();
    let plan = stratified_kfold_plan(&labels, folds, seed)?;
    plan.folds
        .iter()
        .map(|f| {
            let full_train = matrix.subset(&f.train);
            let full_test = matrix.subset(&f.test);
            let names = select_top_features(&full_train, k, threshold)?;
            Ok(GridFold {
                fs_train: full_train.select(&names)?,
                fs_test: full_test.select(&names)?,
                train_labels: full_train.labels(),
                test_labels: full_test.labels(),
                full_train,
                full_test,
            })
        })
        .collect()
}

/// Stratified k-fold comparison of the conventional classifiers. Feature
/// selection is fit on each fold's training rows only.
pub fn baseline_grid(matrix: &FeatureMatrix, cfg: &GridConfig) -> Result<Vec<GridRow>> {
    let folds = grid_folds(
        matrix,
        cfg.k,
        cfg.colinearity_threshold,
        cfg.folds,
        cfg.seed,
    )?;
    cfg.kinds
        .iter()
        .map(|&kind| {
            let mut acc = [Vec::new(), Vec::new(), Vec::new()];
            for (i, f) in folds.iter().enumerate() {
                let seed = mix_seed(cfg.seed, &[i as u64]);
                let m = train_baseline(kind, &cfg.params, &f.full_train, &f.train_labels, seed)?;
                acc[0].push(m.predict(&f.full_test)?.accuracy(&f.test_labels) * 100.0);
                let m = train_baseline(kind, &cfg.params, &f.fs_train, &f.train_labels, seed)?;
                acc[1].push(m.predict(&f.fs_test)?.accuracy(&f.test_labels) * 100.0);
                let m = bagged(
                    kind,
                    &cfg.params,
                    cfg.n_estimators,
                    Bootstrap::Resample,
                    &f.fs_train,
                    &f.train_labels,
                    seed,
                )?;
                acc[2].push(m.predict(&f.fs_test)?.accuracy(&f.test_labels) * 100.0);
            }
            Ok(GridRow {
                kind,
                params: cfg.params.describe(kind),
                without_fs: MeanSd::of(&acc[0]),
                with_fs: MeanSd::of(&acc[1]),
                with_fs_bagging: MeanSd::of(&acc[2]),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskEffectConfig {
    pub params: BaselineParams,
    pub k: usize,
    pub colinearity_threshold: f64,
    pub folds: usize,
    pub n_estimators: usize,
    pub seed: u64,
}

impl TaskEffectConfig {
    pub fn new(seed: u64) -> TaskEffectConfig {
        TaskEffectConfig {
            params: BaselineParams::default(),
            k: 10,
            colinearity_threshold: 0.95,
            folds: 10,
            n_estimators: 10,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEffectRow {
    pub task: u8,
    /// Best fold accuracy (%).
    pub best: f64,
    /// Mean fold accuracy (%).
    pub mean: f64,
    pub folds: Vec<f64>,
}

/// Per task: bagged random forest on the top-ranked features, stratified
/// k-fold. Rows come back sorted by mean accuracy, best first.
pub fn task_effect(matrix: &FeatureMatrix, cfg: &TaskEffectConfig) -> Result<Vec<TaskEffectRow>> {
    let tasks: BTreeSet<u8> = matrix.rows.iter().map(|r| r.key.task).collect();
    let mut rows = tasks
        .into_iter()
        .map(|task| {
            let m = matrix.filter_rows(|r| r.key.task == task);
            let folds = grid_folds(
                &m,
                cfg.k,
                cfg.colinearity_threshold,
                cfg.folds,
                mix_seed(cfg.seed, &[task as u64]),
            )?;
            let acc = folds
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let model = bagged(
                        BaselineKind::RandomForest,
                        &cfg.params,
                        cfg.n_estimators,
                        Bootstrap::Resample,
                        &f.fs_train,
                        &f.train_labels,
                        mix_seed(cfg.seed, &[task as u64, i as u64]),
                    )?;
                    Ok(model.predict(&f.fs_test)?.accuracy(&f.test_labels) * 100.0)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(TaskEffectRow {
                task,
                best: acc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean: mean(&acc),
                folds: acc,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.mean.total_cmp(&a.mean).then(a.task.cmp(&b.task)));
    Ok(rows)
}
