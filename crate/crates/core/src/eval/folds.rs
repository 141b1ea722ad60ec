//! Stratified k-fold and leave-one-subject-out plans over row indices.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EvalError, Result};
use crate::numeric::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    StratifiedKFold(usize),
    LeaveOneSubjectOut,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    /// Held-out subject for leave-one-subject-out folds.
    pub subject: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub scheme: Scheme,
    pub folds: Vec<Fold>,
}

fn by_class(indices: &[usize], labels: &[u8]) -> [Vec<usize>; 2] {
    let mut classes = [Vec::new(), Vec::new()];
    for &i in indices {
        classes[labels[i] as usize].push(i);
    }
    classes
}

/// Shuffles each class, concatenates the classes and deals row `i` of the
/// concatenation to fold `i % k`, so every fold's class counts are within
/// one of proportional.
pub fn stratified_kfold_plan(labels: &[u8], k: usize, seed: u64) -> Result<FoldPlan> {
    let all: Vec<usize> = (0..labels.len()).collect();
    let mut classes = by_class(&all, labels);
    for (c, rows) in classes.iter().enumerate() {
        if rows.len() < k {
            return Err(EvalError::ClassTooSmall {
                class: c as u8,
                count: rows.len(),
                k,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for rows in &mut classes {
        rows.shuffle(&mut rng);
    }
    let mut tests = vec![Vec::new(); k];
    for (pos, &i) in classes.iter().flatten().enumerate() {
        tests[pos % k].push(i);
    }
    let folds = tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let train = all
                .iter()
                .copied()
                .filter(|i| test.binary_search(i).is_err())
                .collect();
            Fold {
                train,
                validation: Vec::new(),
                test,
                subject: None,
            }
        })
        .collect();
    Ok(FoldPlan {
        scheme: Scheme::StratifiedKFold(k),
        folds,
    })
}

/// Splits `indices` into (train, validation) with `val_fraction` of each
/// class (rounded) going to validation.
pub fn stratified_split(
    indices: &[usize],
    labels: &[u8],
    val_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for mut rows in by_class(indices, labels) {
        rows.shuffle(&mut rng);
        let n_val = (rows.len() as f64 * val_fraction).round() as usize;
        val.extend_from_slice(&rows[..n_val]);
        train.extend_from_slice(&rows[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// One fold per subject (in subject order); the other subjects' rows are
/// split 80/20 into train and validation, stratified by label.
pub fn loso_plan(subjects: &[String], labels: &[u8], seed: u64) -> Result<FoldPlan> {
    let mut rows: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in subjects.iter().enumerate() {
        rows.entry(s).or_default().push(i);
    }
    if rows.len() < 3 {
        return Err(EvalError::TooFewSubjects(rows.len()));
    }
    let folds = rows
        .iter()
        .enumerate()
        .map(|(f, (subject, test))| {
            let rest: Vec<usize> = (0..labels.len())
                .filter(|i| subjects[*i] != *subject)
                .collect();
            let (train, validation) =
                stratified_split(&rest, labels, 0.2, mix_seed(seed, &[f as u64]));
            Fold {
                train,
                validation,
                test: test.clone(),
                subject: Some(subject.to_string()),
            }
        })
        .collect();
    Ok(FoldPlan {
        scheme: Scheme::LeaveOneSubjectOut,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(pos: usize, neg: usize) -> Vec<u8> {
        let mut v = vec![1; pos];
        v.extend(vec![0; neg]);
        v
    }

    #[test]
    fn exact_division() {
        let y = labels(50, 50);
        let plan = stratified_kfold_plan(&y, 10, 1).unwrap();
        for f in &plan.folds {
            let pos = f.test.iter().filter(|&&i| y[i] == 1).count();
            assert_eq!((pos, f.test.len() - pos), (5, 5));
        }
    }

    #[test]
    fn uneven_classes() {
        let y = labels(52, 51);
        let plan = stratified_kfold_plan(&y, 10, 2).unwrap();
        for f in &plan.folds {
            assert!(f.test.len() == 10 || f.test.len() == 11);
            let pos = f.test.iter().filter(|&&i| y[i] == 1).count();
            assert!((pos as f64 - 5.2).abs() <= 1.0);
            assert!(((f.test.len() - pos) as f64 - 5.1).abs() <= 1.0);
        }
    }

    #[test]
    fn small_class_rejected() {
        assert!(matches!(
            stratified_kfold_plan(&labels(4, 40), 10, 0),
            Err(EvalError::ClassTooSmall {
                class: 1,
                count: 4,
                k: 10
            })
        ));
    }

    fn subjects(n: usize, per: usize) -> (Vec<String>, Vec<u8>) {
        let s = (0..n * per).map(|i| format!("S{}", i / per)).collect();
        let y = (0..n * per).map(|i| (i % 2) as u8).collect();
        (s, y)
    }

    #[test]
    fn loso_excludes_held_out_subject() {
        let (s, y) = subjects(3, 20);
        let plan = loso_plan(&s, &y, 4).unwrap();
        assert_eq!(plan.folds.len(), 3);
        for f in &plan.folds {
            let held = f.subject.as_ref().unwrap();
            assert!(f.test.iter().all(|&i| &s[i] == held));
            assert!(f.train.iter().chain(&f.validation).all(|&i| &s[i] != held));
            assert_eq!(f.train.len() + f.validation.len(), 40);
            assert_eq!(f.validation.len(), 8);
        }
        assert_eq!(plan, loso_plan(&s, &y, 4).unwrap());
    }

    #[test]
    fn loso_counts_subjects() {
        let (s, y) = subjects(43, 4);
        assert_eq!(loso_plan(&s, &y, 0).unwrap().folds.len(), 43);
        let (s, y) = subjects(2, 4);
        assert!(matches!(
            loso_plan(&s, &y, 0),
            Err(EvalError::TooFewSubjects(2))
        ));
    }

    proptest! {
        #[test]
        fn kfold_partitions_rows(pos in 10usize..60, neg in 10usize..60, k in 2usize..10, seed in 0u64..1000) {
            let y = labels(pos, neg);
            let plan = stratified_kfold_plan(&y, k, seed).unwrap();
            let mut seen = vec![0; y.len()];
            for f in &plan.folds {
                for &i in &f.test {
                    seen[i] += 1;
                }
                prop_assert_eq!(f.train.len() + f.test.len(), y.len());
                let p = f.test.iter().filter(|&&i| y[i] == 1).count() as f64;
                prop_assert!((p - pos as f64 / k as f64).abs() <= 1.0);
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }

        #[test]
        fn loso_partitions_rows(n in 3usize..8, per in 2usize..10, seed in 0u64..1000) {
            let (s, y) = subjects(n, per);
            let plan = loso_plan(&s, &y, seed).unwrap();
            let mut seen = vec![0; y.len()];
            for f in &plan.folds {
                for &i in &f.test {
                    seen[i] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }
    }
}
