//! Conventional classifiers for the dominant/non-dominant task, with an
//! optional bagging wrapper.

mod tree;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::{FeatureError, FeatureMatrix};
use crate::numeric::{mix_seed, solve_linear};

pub use tree::{bootstrap_indices, Bootstrap, Forest, ForestParams, MaxFeatures, Tree, TreeParams};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("labels contain a single class")]
    SingleClassLabels,
    #[error("non-finite value in feature {feature} row {row}")]
    NonFiniteFeature { feature: String, row: usize },
    #[error("feature {0:?} missing from prediction input")]
    FeatureMismatch(String),
    #[error("{rows} rows but {labels} labels")]
    LabelMismatch { rows: usize, labels: usize },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

pub type Result<T> = std::result::Result<T, BaselineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    LogisticRegression,
    DecisionTree,
    Knn,
    GaussianNaiveBayes,
    RandomForest,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::LogisticRegression,
        BaselineKind::DecisionTree,
        BaselineKind::Knn,
        BaselineKind::GaussianNaiveBayes,
        BaselineKind::RandomForest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::LogisticRegression => "logistic_regression",
            BaselineKind::DecisionTree => "decision_tree",
            BaselineKind::Knn => "knn",
            BaselineKind::GaussianNaiveBayes => "gaussian_nb",
            BaselineKind::RandomForest => "random_forest",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineParams {
    pub lr_max_iter: usize,
    pub lr_ridge: f64,
    pub tree_max_depth: usize,
    pub knn_k: usize,
    pub rf_trees: usize,
    pub rf_max_features: MaxFeatures,
    pub rf_bootstrap: Bootstrap,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            lr_max_iter: 100,
            lr_ridge: 1e-4,
            tree_max_depth: 12,
            knn_k: 5,
            rf_trees: 100,
            rf_max_features: MaxFeatures::Sqrt,
            rf_bootstrap: Bootstrap::Resample,
        }
    }
}

impl BaselineParams {
    /// Short description of the parameters that matter for `kind`.
    pub fn describe(&self, kind: BaselineKind) -> String {
        match kind {
            BaselineKind::LogisticRegression => {
                format!("max_iter={} ridge={}", self.lr_max_iter, self.lr_ridge)
            }
            BaselineKind::DecisionTree => {
                format!("criterion=gini max_depth={}", self.tree_max_depth)
            }
            BaselineKind::Knn => format!("k={} algorithm=brute", self.knn_k),
            BaselineKind::GaussianNaiveBayes => "var_smoothing=1e-9".to_string(),
            BaselineKind::RandomForest => format!(
                "trees={} criterion=gini max_depth={} max_features={:?}",
                self.rf_trees, self.tree_max_depth, self.rf_max_features
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Logistic {
        weights: Vec<f64>,
        bias: f64,
    },
    Tree(Tree),
    Knn {
        x: Vec<Vec<f64>>,
        y: Vec<u8>,
        k: usize,
    },
    NaiveBayes(NaiveBayes),
    Forest(Forest),
    /// Majority vote of the members; ties go to class 0.
    Bagged(Vec<Model>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayes {
    log_prior: [f64; 2],
    mean: [Vec<f64>; 2],
    var: [Vec<f64>; 2],
    /// Features with zero overall variance carry no information.
    active: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedBaseline {
    pub kind: BaselineKind,
    pub bagging: Option<usize>,
    pub features: Vec<String>,
    pub seed: u64,
    pub model: Model,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<u8>,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    pub fn accuracy(&self, labels: &[u8]) -> f64 {
        let hits = self
            .labels
            .iter()
            .zip(labels)
            .filter(|(a, b)| a == b)
            .count();
        hits as f64 / labels.len() as f64
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Newton iterations on the ridge-penalized cross-entropy.
fn fit_logistic(x: &[Vec<f64>], y: &[u8], max_iter: usize, ridge: f64) -> Model {
    let p = x[0].len();
    let d = p + 1;
    let mut w = vec![0.0; d];
    for _ in 0..max_iter {
        let mut grad = vec![0.0; d];
        let mut hess = vec![vec![0.0; d]; d];
        for (row, &label) in x.iter().zip(y) {
            let z = w[p] + row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let mu = sigmoid(z);
            let r = mu - label as f64;
            let s = mu * (1.0 - mu);
            for i in 0..d {
                let xi = if i < p { row[i] } else { 1.0 };
                grad[i] += r * xi;
                for j in 0..=i {
                    let xj = if j < p { row[j] } else { 1.0 };
                    hess[i][j] += s * xi * xj;
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                hess[j][i] = hess[i][j];
            }
        }
        for i in 0..p {
            grad[i] += ridge * w[i];
            hess[i][i] += ridge;
        }
        // keeps the intercept direction invertible on separable data
        hess[p][p] += 1e-12;
        let Some(step) = solve_linear(&hess, &grad) else {
            break;
        };
        let mut size = 0.0f64;
        for (wi, si) in w.iter_mut().zip(&step) {
            *wi -= si;
            size = size.max(si.abs());
        }
        if size < 1e-10 {
            break;
        }
    }
    let bias = w.pop().unwrap();
    Model::Logistic { weights: w, bias }
}

fn fit_naive_bayes(x: &[Vec<f64>], y: &[u8]) -> Model {
    let p = x[0].len();
    let n = x.len() as f64;
    let mut count = [0usize; 2];
    let mut mean = [vec![0.0; p], vec![0.0; p]];
    for (row, &c) in x.iter().zip(y) {
        count[c as usize] += 1;
        for j in 0..p {
            mean[c as usize][j] += row[j];
        }
    }
    for c in 0..2 {
        for m in &mut mean[c] {
            *m /= count[c] as f64;
        }
    }
    let mut var = [vec![0.0; p], vec![0.0; p]];
    for (row, &c) in x.iter().zip(y) {
        for j in 0..p {
            var[c as usize][j] += (row[j] - mean[c as usize][j]).powi(2);
        }
    }
    let mut active = vec![true; p];
    for j in 0..p {
        let mu = x.iter().map(|r| r[j]).sum::<f64>() / n;
        let total = x.iter().map(|r| (r[j] - mu).powi(2)).sum::<f64>() / n;
        let eps = 1e-9 * total;
        active[j] = total > 0.0;
        for c in 0..2 {
            var[c][j] = var[c][j] / count[c] as f64 + eps;
            if var[c][j] == 0.0 {
                active[j] = false;
            }
        }
    }
    Model::NaiveBayes(NaiveBayes {
        log_prior: [(count[0] as f64 / n).ln(), (count[1] as f64 / n).ln()],
        mean,
        var,
        active,
    })
}

impl Model {
    fn fit(
        kind: BaselineKind,
        params: &BaselineParams,
        x: &[Vec<f64>],
        y: &[u8],
        seed: u64,
    ) -> Model {
        let tree = TreeParams {
            max_depth: params.tree_max_depth,
            max_features: MaxFeatures::All,
        };
        match kind {
            BaselineKind::LogisticRegression => {
                fit_logistic(x, y, params.lr_max_iter, params.lr_ridge)
            }
            BaselineKind::DecisionTree => Model::Tree(Tree::fit(x, y, tree, seed)),
            BaselineKind::Knn => Model::Knn {
                x: x.to_vec(),
                y: y.to_vec(),
                k: params.knn_k,
            },
            BaselineKind::GaussianNaiveBayes => fit_naive_bayes(x, y),
            BaselineKind::RandomForest => Model::Forest(Forest::fit(
                x,
                y,
                ForestParams {
                    n_trees: params.rf_trees,
                    tree: TreeParams {
                        max_features: params.rf_max_features,
                        ..tree
                    },
                    bootstrap: params.rf_bootstrap,
                },
                seed,
            )),
        }
    }

    /// (label, probability of class 1) for one row.
    pub fn predict_row(&self, row: &[f64]) -> (u8, f64) {
        let p = match self {
            Model::Logistic { weights, bias } => {
                sigmoid(bias + row.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>())
            }
            Model::Tree(t) => t.predict_proba(row),
            Model::Forest(f) => f.predict_proba(row),
            Model::Knn { x, y, k } => {
                let mut d: Vec<(f64, usize)> = x
                    .iter()
                    .enumerate()
                    .map(|(i, r)| (r.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum(), i))
                    .collect();
                let k = (*k).min(d.len());
                d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d[..k].iter().filter(|(_, i)| y[*i] == 1).count() as f64 / k as f64
            }
            Model::NaiveBayes(nb) => {
                let mut ll = nb.log_prior;
                for (c, l) in ll.iter_mut().enumerate() {
                    for j in 0..row.len() {
                        if !nb.active[j] {
                            continue;
                        }
                        let v = nb.var[c][j];
                        *l -= 0.5 * (2.0 * std::f64::consts::PI * v).ln()
                            + (row[j] - nb.mean[c][j]).powi(2) / (2.0 * v);
                    }
                }
                sigmoid(ll[1] - ll[0])
            }
            Model::Bagged(members) => {
                let votes = members.iter().filter(|m| m.predict_row(row).0 == 1).count();
                let frac = votes as f64 / members.len() as f64;
                return ((2 * votes > members.len()) as u8, frac);
            }
        };
        ((p > 0.5) as u8, p)
    }
}

fn check_training(matrix: &FeatureMatrix, labels: &[u8]) -> Result<()> {
    if labels.len() != matrix.len() {
        return Err(BaselineError::LabelMismatch {
            rows: matrix.len(),
            labels: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(BaselineError::SingleClassLabels);
    }
    for (i, r) in matrix.rows.iter().enumerate() {
        if let Some(j) = r.values.iter().position(|v| !v.is_finite()) {
            return Err(BaselineError::NonFiniteFeature {
                feature: matrix.columns[j].name.clone(),
                row: i,
            });
        }
    }
    Ok(())
}

/// Fits one classifier of `kind` on every row of `matrix`.
pub fn train_baseline(
    kind: BaselineKind,
    params: &BaselineParams,
    matrix: &FeatureMatrix,
    labels: &[u8],
    seed: u64,
) -> Result<TrainedBaseline> {
    check_training(matrix, labels)?;
    Ok(TrainedBaseline {
        kind,
        bagging: None,
        features: matrix.names(),
        seed,
        model: Model::fit(kind, params, &matrix.values(), labels, seed),
    })
}

/// `n_estimators` members, each fit on its own bootstrap sample.
pub fn bagged(
    kind: BaselineKind,
    params: &BaselineParams,
    n_estimators: usize,
    bootstrap: Bootstrap,
    matrix: &FeatureMatrix,
    labels: &[u8],
    seed: u64,
) -> Result<TrainedBaseline> {
    check_training(matrix, labels)?;
    let x = matrix.values();
    let members = (0..n_estimators)
        .map(|m| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[m as u64, 0]));
            let mut idx = bootstrap_indices(x.len(), bootstrap, &mut rng);
            let mut by: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            // a one-class resample is redrawn so every member sees both hands
            while by.iter().all(|&l| l == by[0]) {
                idx = bootstrap_indices(x.len(), bootstrap, &mut rng);
                by = idx.iter().map(|&i| labels[i]).collect();
            }
            let bx: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
            let member_seed = if bootstrap == Bootstrap::Identity && n_estimators == 1 {
                seed
            } else {
                mix_seed(seed, &[m as u64, 1])
            };
            Model::fit(kind, params, &bx, &by, member_seed)
        })
        .collect();
    Ok(TrainedBaseline {
        kind,
        bagging: Some(n_estimators),
        features: matrix.names(),
        seed,
        model: Model::Bagged(members),
    })
}

impl TrainedBaseline {
    pub fn predict(&self, matrix: &FeatureMatrix) -> Result<Prediction> {
        for f in &self.features {
            if matrix.column_index(f).is_none() {
                return Err(BaselineError::FeatureMismatch(f.clone()));
            }
        }
        let m = matrix.select(&self.features)?;
        let (labels, probabilities) = m
            .rows
            .iter()
            .map(|r| self.model.predict_row(&r.values))
            .unzip();
        Ok(Prediction {
            labels,
            probabilities,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{ColumnMeta, FeatureRow};
    use crate::ingest::{Hand, TrialKey};
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn to_matrix(x: &[Vec<f64>], y: &[u8]) -> FeatureMatrix {
        FeatureMatrix {
            columns: (0..x[0].len())
                .map(|j| ColumnMeta {
                    name: format!("f{j}"),
                    normalized: true,
                })
                .collect(),
            rows: x
                .iter()
                .zip(y)
                .map(|(r, &l)| FeatureRow {
                    values: r.clone(),
                    key: TrialKey::new("S1", 1, Hand::from_label(l), 1),
                })
                .collect(),
        }
    }

    fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = (i % 2) as u8;
            let centre = if c == 1 { 2.0 } else { -2.0 };
            x.push(vec![
                centre + noise.sample(&mut rng),
                centre + noise.sample(&mut rng),
            ]);
            y.push(c);
        }
        (x, y)
    }

    fn fast_params() -> BaselineParams {
        BaselineParams {
            rf_trees: 20,
            ..BaselineParams::default()
        }
    }

    #[test]
    fn separable_blobs_are_learned_by_every_kind() {
        let (x, y) = blobs(200, 7);
        let m = to_matrix(&x, &y);
        for kind in BaselineKind::ALL {
            let model = train_baseline(kind, &fast_params(), &m, &y, 7).unwrap();
            let acc = model.predict(&m).unwrap().accuracy(&y);
            assert!(acc >= 0.99, "{kind}: {acc}");
            let bag = bagged(kind, &fast_params(), 10, Bootstrap::Resample, &m, &y, 7).unwrap();
            let bag_acc = bag.predict(&m).unwrap().accuracy(&y);
            assert!(bag_acc >= acc - 0.01, "{kind}: {bag_acc} vs {acc}");
        }
    }

    #[test]
    fn single_class_rejected() {
        let (x, _) = blobs(10, 1);
        let y = vec![1; 10];
        for kind in BaselineKind::ALL {
            assert!(matches!(
                train_baseline(kind, &fast_params(), &to_matrix(&x, &y), &y, 0),
                Err(BaselineError::SingleClassLabels)
            ));
        }
    }

    #[test]
    fn non_finite_rejected() {
        let (mut x, y) = blobs(10, 1);
        x[3][1] = f64::NAN;
        assert!(matches!(
            train_baseline(BaselineKind::Knn, &fast_params(), &to_matrix(&x, &y), &y, 0),
            Err(BaselineError::NonFiniteFeature { row: 3, .. })
        ));
    }

    #[test]
    fn one_nn_recalls_training_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.random(), rng.random()]).collect();
        let y: Vec<u8> = (0..100).map(|_| rng.random_range(0..2)).collect();
        let params = BaselineParams {
            knn_k: 1,
            ..BaselineParams::default()
        };
        let m = to_matrix(&x, &y);
        let model = train_baseline(BaselineKind::Knn, &params, &m, &y, 0).unwrap();
        assert_eq!(model.predict(&m).unwrap().labels, y);
    }

    #[test]
    fn logistic_midpoint_is_uncertain() {
        // mirror-symmetric classes around the origin
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..100 {
            let p = vec![1.0 + noise.sample(&mut rng), 1.0 + noise.sample(&mut rng)];
            x.push(vec![-p[0], -p[1]]);
            y.push(0);
            x.push(p);
            y.push(1);
        }
        let model = train_baseline(
            BaselineKind::LogisticRegression,
            &fast_params(),
            &to_matrix(&x, &y),
            &y,
            0,
        )
        .unwrap();
        let probe = to_matrix(&[vec![0.0, 0.0]], &[0]);
        let p = model.predict(&probe).unwrap().probabilities[0];
        assert!((p - 0.5).abs() <= 0.05, "{p}");
    }

    #[test]
    fn missing_column_is_a_mismatch() {
        let (x, y) = blobs(20, 3);
        let m = to_matrix(&x, &y);
        let model =
            train_baseline(BaselineKind::GaussianNaiveBayes, &fast_params(), &m, &y, 0).unwrap();
        let reduced = m.select(&["f1".to_string()]).unwrap();
        assert!(
            matches!(model.predict(&reduced), Err(BaselineError::FeatureMismatch(f)) if f == "f0")
        );
    }

    #[test]
    fn naive_bayes_is_affine_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.random(), rng.random(), rng.random()])
            .collect();
        let y: Vec<u8> = x
            .iter()
            .map(|r| (r[0] + 0.3 * r[1] + 0.2 * rng.random::<f64>() > 0.75) as u8)
            .collect();
        let scale = [3.0, -0.5, 1e4];
        let shift = [10.0, 2.0, -7.0];
        let xs: Vec<Vec<f64>> = x
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .map(|(j, v)| v * scale[j] + shift[j])
                    .collect()
            })
            .collect();
        let kind = BaselineKind::GaussianNaiveBayes;
        let a = train_baseline(kind, &fast_params(), &to_matrix(&x, &y), &y, 0).unwrap();
        let b = train_baseline(kind, &fast_params(), &to_matrix(&xs, &y), &y, 0).unwrap();
        let pa = a.predict(&to_matrix(&x, &y)).unwrap();
        let pb = b.predict(&to_matrix(&xs, &y)).unwrap();
        assert_eq!(pa.labels, pb.labels);
        for (u, v) in pa.probabilities.iter().zip(&pb.probabilities) {
            assert!((u - v).abs() < 1e-6);
        }
    }

    #[test]
    fn single_tree_forest_equals_decision_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x: Vec<Vec<f64>> = (0..150)
            .map(|_| vec![rng.random(), rng.random(), rng.random()])
            .collect();
        let y: Vec<u8> = x
            .iter()
            .map(|r| ((r[0] > 0.5) ^ (r[2] > 0.3)) as u8)
            .collect();
        let params = BaselineParams {
            rf_trees: 1,
            rf_max_features: MaxFeatures::All,
            rf_bootstrap: Bootstrap::Identity,
            ..BaselineParams::default()
        };
        let m = to_matrix(&x, &y);
        let dt = train_baseline(BaselineKind::DecisionTree, &params, &m, &y, 9).unwrap();
        let rf = train_baseline(BaselineKind::RandomForest, &params, &m, &y, 9).unwrap();
        let probe: Vec<Vec<f64>> = (0..300)
            .map(|_| vec![rng.random(), rng.random(), rng.random()])
            .collect();
        let pm = to_matrix(&probe, &vec![0; 300]);
        assert_eq!(dt.predict(&pm).unwrap(), rf.predict(&pm).unwrap());
    }

    #[test]
    fn identity_bag_of_one_equals_base() {
        let (x, y) = blobs(60, 8);
        let m = to_matrix(&x, &y);
        for kind in BaselineKind::ALL {
            let base = train_baseline(kind, &fast_params(), &m, &y, 3).unwrap();
            let bag = bagged(kind, &fast_params(), 1, Bootstrap::Identity, &m, &y, 3).unwrap();
            assert_eq!(
                base.predict(&m).unwrap().labels,
                bag.predict(&m).unwrap().labels,
                "{kind}"
            );
        }
    }

    #[test]
    fn vote_tie_goes_to_class_zero() {
        let bag = Model::Bagged(vec![
            Model::Logistic {
                weights: vec![0.0],
                bias: 5.0,
            },
            Model::Logistic {
                weights: vec![0.0],
                bias: -5.0,
            },
        ]);
        assert_eq!(bag.predict_row(&[0.0]), (0, 0.5));
    }

    #[test]
    fn fits_are_reproducible() {
        let (x, y) = blobs(80, 10);
        let m = to_matrix(&x, &y);
        for kind in BaselineKind::ALL {
            let a = bagged(kind, &fast_params(), 3, Bootstrap::Resample, &m, &y, 42).unwrap();
            let b = bagged(kind, &fast_params(), 3, Bootstrap::Resample, &m, &y, 42).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn tree_depth_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<Vec<f64>> = (0..500).map(|_| vec![rng.random()]).collect();
        let y: Vec<u8> = (0..500).map(|_| rng.random_range(0..2)).collect();
        let params = TreeParams {
            max_depth: 4,
            max_features: MaxFeatures::All,
        };
        assert!(Tree::fit(&x, &y, params, 0).depth() <= 4);
    }
}
