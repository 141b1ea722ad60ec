use handedness::baselines::BaselineKind;
use handedness::eval::{
    baseline_grid, build_stroke_table, loso_evaluate, task_effect, GridConfig, NetKind,
    NetRunConfig, StrokeTable, TaskEffectConfig,
};
use handedness::kinematics::SegmentConfig;
use handedness::synth::{generate_cohort, CohortConfig};

fn table(deltas: Vec<f64>, tasks: Vec<u8>, seed: u64) -> StrokeTable {
    let mut config = CohortConfig::new(deltas, seed);
    config.tasks = tasks;
    config.trials_per_hand = 4;
    let dataset = generate_cohort(&config).unwrap().into_dataset();
    build_stroke_table(&dataset, &SegmentConfig::default()).unwrap()
}

fn grid(kinds: Vec<BaselineKind>, seed: u64) -> GridConfig {
    let mut cfg = GridConfig::new(seed);
    cfg.kinds = kinds;
    cfg.folds = 5;
    cfg.n_estimators = 3;
    cfg.params.rf_trees = 20;
    cfg
}

#[test]
fn identical_hands_stay_near_chance_across_subjects() {
    let t = table(vec![0.0, 0.0, 0.0], vec![1, 2], 21);
    let results = loso_evaluate(&t, &NetRunConfig::new(NetKind::Mlp, 21)).unwrap();
    assert_eq!(results.len(), 3);
    for r in results {
        assert!(
            (r.accuracy - 50.0).abs() <= 7.0,
            "{} {}",
            r.subject,
            r.accuracy
        );
    }
}

#[test]
fn distinct_hands_are_learned() {
    let t = table(vec![1.0, 1.0], vec![1, 2], 22);
    let rows = baseline_grid(
        &t.normalized,
        &grid(vec![BaselineKind::RandomForest, BaselineKind::Knn], 2),
    )
    .unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r.with_fs.mean > 70.0, "{} {}", r.kind, r.with_fs.mean);
    }
}

#[test]
fn degraded_task_ranks_first() {
    let mut config = CohortConfig::new(vec![1.0, 1.0], 23);
    config.tasks = vec![1, 2];
    config.trials_per_hand = 4;
    config.task_gains = [0.0, 0.8, 1.0, 1.0, 1.0, 1.0, 1.0];
    let dataset = generate_cohort(&config).unwrap().into_dataset();
    let t = build_stroke_table(&dataset, &SegmentConfig::default()).unwrap();
    let mut cfg = TaskEffectConfig::new(3);
    cfg.folds = 5;
    cfg.n_estimators = 3;
    cfg.params.rf_trees = 20;
    let rows = task_effect(&t.normalized, &cfg).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].task, 2);
    assert!(rows[0].mean > rows[1].mean);
    assert!(rows.iter().all(|r| r.folds.len() == 5 && r.best >= r.mean));
}
