use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use handedness::db::{grade_all, reports_to_csv, DbConfig, DbError};
use handedness::eval::{
    baseline_grid, build_stroke_table, compare_with_ei, cross_validate_net, grades_from_csv,
    grades_to_csv, ks_normality, loso_evaluate, mann_whitney_u, stratified_split, t_test_unpaired,
    table2, task_effect, EvalError, GridConfig, GridRow, MeanSd, Method, NetKind, NetRunConfig,
    StrokeTable, SubjectGrade, TaskEffectConfig,
};
use handedness::features::select_top_features;
use handedness::ingest::{load_manifest_with_rate, write_atomic, Dataset, IngestError};
use handedness::kinematics::{segment_trial, SegmentConfig};
use handedness::neural::{
    save_checkpoint, Architecture, CnnConfig, MlpConfig, Model, NeuralError, Samples,
};
use handedness::synth::{
    write_cohort, CohortConfig, SynthError, DEFAULT_TASK_GAINS, MANIFEST_FILE,
};

#[derive(Parser, Serialize)]
#[command(
    name = "handedness",
    version,
    about = "Grade degree of handedness from pen traces"
)]
struct Cli {
    /// Output directory.
    #[arg(
        long,
        global = true,
        env = "HANDEDNESS_OUT",
        default_value = "handedness-out"
    )]
    out: PathBuf,
    /// Override the sample rate of the input data (Hz).
    #[arg(long, global = true)]
    sample_rate: Option<f64>,
    #[command(subcommand)]
    #[serde(flatten)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
enum Command {
    /// Generate a synthetic cohort.
    Synth(SynthArgs),
    /// Validate a dataset and summarize it.
    Ingest(DataArgs),
    /// Segment every trial into strokes.
    Segment(DataArgs),
    /// Extract per-stroke features (raw and per-trial normalized).
    Features(DataArgs),
    /// Per-subject Davies-Bouldin scores.
    GradeDb(GradeDbArgs),
    /// Train a network on an 80/20 stratified split and save a checkpoint.
    Train {
        #[arg(value_enum)]
        model: NetChoice,
        #[command(flatten)]
        args: NetArgs,
    },
    /// Cross-validated or leave-one-subject-out evaluation.
    Eval {
        #[arg(value_enum)]
        scheme: SchemeChoice,
        #[arg(long, value_enum)]
        model: EvalModel,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 10)]
        n_estimators: usize,
        #[command(flatten)]
        args: NetArgs,
    },
    /// Per-task bagged random forest accuracy.
    TaskEffect(TaskEffectArgs),
    /// Agreement of grades with Edinburgh Inventory scores.
    CompareEi(CompareArgs),
    /// Normality and left/right comparison of one grade column.
    Stats(StatsArgs),
}

#[derive(Args, Serialize)]
struct DataArgs {
    /// Manifest file or a directory containing manifest.toml.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 6)]
    subjects: usize,
    /// Comma-separated degradation values, cycled over subjects.
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8,1")]
    deltas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    tasks: Vec<u8>,
    #[arg(long, default_value_t = 6)]
    trials_per_hand: u8,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Cohort config file (TOML); replaces the other options.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct GradeDbArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(Args, Serialize)]
struct NetArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Features fed to the MLP (and the baselines).
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Args, Serialize)]
struct TaskEffectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 10)]
    n_estimators: usize,
}

#[derive(Args, Serialize)]
struct CompareArgs {
    /// Grade table, or `bundled` for the published 43-subject table.
    #[arg(long)]
    grades: String,
    #[arg(long, value_enum)]
    method: CompareMethod,
}

#[derive(Args, Serialize)]
struct StatsArgs {
    /// Grade table, or `bundled` for the published 43-subject table.
    #[arg(long)]
    grades: String,
    #[arg(long, value_enum, default_value = "mlp-acc")]
    column: Column,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum NetChoice {
    Mlp,
    Cnn,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SchemeChoice {
    Cv,
    Loso,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum EvalModel {
    Mlp,
    Cnn,
    Baselines,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum CompareMethod {
    Db,
    Mlp,
    Cnn,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Column {
    Dbs,
    MlpAcc,
    FourptMlp,
    CnnAcc,
    FourptCnn,
}

impl Column {
    fn get(self, g: &SubjectGrade) -> Option<f64> {
        match self {
            Column::Dbs => g.db_score,
            Column::MlpAcc => g.mlp_accuracy,
            Column::FourptMlp => g.four_point_mlp,
            Column::CnnAcc => g.cnn_accuracy,
            Column::FourptCnn => g.four_point_cnn,
        }
    }
}

impl From<NetChoice> for NetKind {
    fn from(c: NetChoice) -> NetKind {
        match c {
            NetChoice::Mlp => NetKind::Mlp,
            NetChoice::Cnn => NetKind::Cnn,
        }
    }
}

enum Failure {
    Data(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Data(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

fn one_line(e: impl std::fmt::Display) -> String {
    e.to_string().replace('\n', " ")
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Failure {
        if e.is_numerical() {
            Failure::Numerical(one_line(e))
        } else {
            Failure::Data(one_line(e))
        }
    }
}

impl From<NeuralError> for Failure {
    fn from(e: NeuralError) -> Failure {
        EvalError::from(e).into()
    }
}

macro_rules! data_failure {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Failure {
                Failure::Data(one_line(e))
            }
        }
    )*};
}

data_failure!(
    IngestError,
    SynthError,
    DbError,
    handedness::features::FeatureError,
    handedness::kinematics::KinematicsError,
    handedness::baselines::BaselineError
);

type Outcome<T> = Result<T, Failure>;

struct Output<'a> {
    dir: &'a Path,
    config: Value,
}

impl Output<'_> {
    fn write(&self, name: &str, contents: &str) -> Outcome<()> {
        write_atomic(&self.dir.join(name), contents.as_bytes())?;
        Ok(())
    }

    /// JSON report embedding the invocation's configuration.
    fn report(&self, name: &str, result: Value) -> Outcome<()> {
        let doc = json!({ "config": self.config, "result": result });
        let text = serde_json::to_string_pretty(&doc).expect("report serializes") + "\n";
        self.write(name, &text)
    }
}

fn load(data: &DataArgs, rate: Option<f64>) -> Outcome<Dataset> {
    let path = if data.data.is_dir() {
        data.data.join(MANIFEST_FILE)
    } else {
        data.data.clone()
    };
    Ok(load_manifest_with_rate(&path, rate)?)
}

fn load_grades(source: &str) -> Outcome<Vec<SubjectGrade>> {
    if source == "bundled" {
        return Ok(table2());
    }
    let text =
        std::fs::read_to_string(source).map_err(|e| Failure::Data(format!("{source}: {e}")))?;
    Ok(grades_from_csv(&text)?)
}

fn blank_grade(ds: &Dataset, subject: &str) -> SubjectGrade {
    let meta = ds.subject(subject);
    SubjectGrade {
        subject: subject.to_string(),
        class: meta.map(|m| m.group.to_string()).unwrap_or_default(),
        db_score: None,
        mlp_accuracy: None,
        four_point_mlp: None,
        cnn_accuracy: None,
        four_point_cnn: None,
        ei_score: meta
            .and_then(|m| m.resolved_ei().ok().flatten())
            .map(f64::from),
    }
}

fn net_config(kind: NetKind, a: &NetArgs) -> NetRunConfig {
    let mut cfg = NetRunConfig::new(kind, a.seed);
    cfg.k = a.k;
    cfg.learning_rate = a.lr;
    cfg.max_epochs = a.epochs;
    cfg.patience = a.patience;
    cfg
}

fn run(cli: &Cli) -> Outcome<()> {
    let out = Output {
        dir: &cli.out,
        config: serde_json::to_value(cli).expect("arguments serialize"),
    };
    let seg = SegmentConfig::default();
    match &cli.command {
        Command::Synth(a) => {
            let cfg = match &a.config {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
                    CohortConfig::from_toml(&text)?
                }
                None => CohortConfig {
                    subjects: a.subjects,
                    deltas: a.deltas.clone(),
                    tasks: a.tasks.clone(),
                    trials_per_hand: a.trials_per_hand,
                    seed: a.seed,
                    task_gains: DEFAULT_TASK_GAINS,
                },
            };
            write_cohort(&cfg, &cli.out)?;
        }
        Command::Ingest(a) => {
            let ds = load(a, cli.sample_rate)?;
            out.report(
                "ingest_report.json",
                json!({
                    "sample_rate_hz": ds.sample_rate_hz,
                    "subjects": ds.subjects.len(),
                    "trials": ds.trials.len(),
                    "tasks": ds.tasks(),
                    "trials_per_subject": ds.counts_per_subject(),
                }),
            )?;
        }
        Command::Segment(a) => {
            let ds = load(a, cli.sample_rate)?;
            let mut csv = String::from("subject,task,hand,trial,stroke,start,end,samples\n");
            let mut total = 0;
            for trial in &ds.trials {
                let k = &trial.key;
                for (i, s) in segment_trial(trial, &seg)?.iter().enumerate() {
                    csv.push_str(&format!(
                        "{},{},{},{},{},{},{},{}\n",
                        k.subject,
                        k.task,
                        k.hand.code(),
                        k.trial,
                        i + 1,
                        s.start,
                        s.end,
                        s.len()
                    ));
                    total += 1;
                }
            }
            out.write("strokes.csv", &csv)?;
            out.report(
                "segment_report.json",
                json!({ "trials": ds.trials.len(), "strokes": total }),
            )?;
        }
        Command::Features(a) => {
            let table = build_stroke_table(&load(a, cli.sample_rate)?, &seg)?;
            out.write("features_raw.csv", &table.raw.to_csv())?;
            out.write("features.csv", &table.normalized.to_csv())?;
            out.report(
                "features_report.json",
                json!({ "strokes": table.raw.len() }),
            )?;
        }
        Command::GradeDb(a) => {
            let ds = load(&a.data, cli.sample_rate)?;
            let table = build_stroke_table(&ds, &seg)?;
            let config = DbConfig {
                k: a.k,
                ..DbConfig::default()
            };
            let reports = grade_all(&table.normalized, &config)?;
            out.write("db_scores.csv", &reports_to_csv(&reports))?;
            let grades: Vec<SubjectGrade> = reports
                .iter()
                .map(|r| SubjectGrade {
                    db_score: Some(r.db_score),
                    ..blank_grade(&ds, &r.subject)
                })
                .collect();
            out.write("db_grades.csv", &grades_to_csv(&grades))?;
            let summary: Vec<Value> = reports
                .iter()
                .map(|r| {
                    json!({
                        "subject": r.subject,
                        "db_score": r.db_score,
                        "capped": r.any_capped(),
                        "maximal_ambidexterity": r.maximal_ambidexterity,
                    })
                })
                .collect();
            out.report("grade_db_report.json", json!({ "subjects": summary }))?;
        }
        Command::Train { model, args } => train(&out, *model, args, cli.sample_rate)?,
        Command::Eval {
            scheme,
            model,
            folds,
            n_estimators,
            args,
        } => {
            let ds = load(&args.data, cli.sample_rate)?;
            let table = build_stroke_table(&ds, &seg)?;
            match (scheme, model) {
                (SchemeChoice::Cv, EvalModel::Baselines) => {
                    let mut cfg = GridConfig::new(args.seed);
                    cfg.k = args.k;
                    cfg.folds = *folds;
                    cfg.n_estimators = *n_estimators;
                    let rows = baseline_grid(&table.normalized, &cfg)?;
                    let mut csv = format!("{}\n", GridRow::csv_header());
                    for r in &rows {
                        csv.push_str(&r.csv_line());
                        csv.push('\n');
                    }
                    out.write("baseline_grid.csv", &csv)?;
                    out.report("eval_report.json", json!({ "classifiers": rows.len() }))?;
                }
                (SchemeChoice::Loso, EvalModel::Baselines) => {
                    return Err(Failure::Data(
                        "leave-one-subject-out supports mlp and cnn only".into(),
                    ));
                }
                (SchemeChoice::Cv, net) => {
                    let kind = if matches!(net, EvalModel::Mlp) {
                        NetKind::Mlp
                    } else {
                        NetKind::Cnn
                    };
                    let acc = cross_validate_net(&table, &net_config(kind, args), *folds)?;
                    let mut csv = String::from("fold,accuracy\n");
                    for (i, a) in acc.iter().enumerate() {
                        csv.push_str(&format!("{},{a}\n", i + 1));
                    }
                    out.write("cv_accuracy.csv", &csv)?;
                    let s = MeanSd::of(&acc);
                    out.report(
                        "eval_report.json",
                        json!({ "mean": s.mean, "sd": s.sd, "folds": acc }),
                    )?;
                }
                (SchemeChoice::Loso, net) => {
                    let kind = if matches!(net, EvalModel::Mlp) {
                        NetKind::Mlp
                    } else {
                        NetKind::Cnn
                    };
                    let results = loso_evaluate(&table, &net_config(kind, args))?;
                    let grades: Vec<SubjectGrade> = results
                        .iter()
                        .map(|r| {
                            let base = blank_grade(&ds, &r.subject);
                            match kind {
                                NetKind::Mlp => SubjectGrade {
                                    mlp_accuracy: Some(r.accuracy),
                                    four_point_mlp: Some(r.four_point),
                                    ..base
                                },
                                NetKind::Cnn => SubjectGrade {
                                    cnn_accuracy: Some(r.accuracy),
                                    four_point_cnn: Some(r.four_point),
                                    ..base
                                },
                            }
                        })
                        .collect();
                    out.write("loso_grades.csv", &grades_to_csv(&grades))?;
                    let acc: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
                    let s = MeanSd::of(&acc);
                    out.report(
                        "eval_report.json",
                        json!({ "mean": s.mean, "sd": s.sd, "subjects": results }),
                    )?;
                }
            }
        }
        Command::TaskEffect(a) => {
            let table = build_stroke_table(&load(&a.data, cli.sample_rate)?, &seg)?;
            let mut cfg = TaskEffectConfig::new(a.seed);
            cfg.k = a.k;
            cfg.folds = a.folds;
            cfg.n_estimators = a.n_estimators;
            let rows = task_effect(&table.normalized, &cfg)?;
            let mut csv = String::from("rank,task,best,mean\n");
            for (i, r) in rows.iter().enumerate() {
                csv.push_str(&format!("{},{},{},{}\n", i + 1, r.task, r.best, r.mean));
            }
            out.write("task_effect.csv", &csv)?;
            out.report("task_effect_report.json", json!({ "tasks": rows }))?;
        }
        Command::CompareEi(a) => {
            let grades = load_grades(&a.grades)?;
            let (column, method, name) = match a.method {
                CompareMethod::Db => (Column::Dbs, Method::Db, "db"),
                CompareMethod::Mlp => (Column::FourptMlp, Method::FourPoint, "mlp"),
                CompareMethod::Cnn => (Column::FourptCnn, Method::FourPoint, "cnn"),
            };
            let (scores, ei): (Vec<f64>, Vec<f64>) = grades
                .iter()
                .filter_map(|g| Some((column.get(g)?, g.ei_score?)))
                .unzip();
            let report = compare_with_ei(&scores, &ei, method)?;
            out.write(
                &format!("bland_altman_{name}.csv"),
                &report.bland_altman.plot_csv(),
            )?;
            out.report(
                &format!("compare_ei_{name}.json"),
                serde_json::to_value(&report).expect("serializes"),
            )?;
        }
        Command::Stats(a) => {
            let grades = load_grades(&a.grades)?;
            let values: Vec<f64> = grades.iter().filter_map(|g| a.column.get(g)).collect();
            let split = |right: bool| -> Vec<f64> {
                grades
                    .iter()
                    .filter(|g| g.ei_score.is_some_and(|e| (e >= 0.0) == right))
                    .filter_map(|g| a.column.get(g))
                    .collect()
            };
            let (right, left) = (split(true), split(false));
            let result = json!({
                "n": values.len(),
                "n_right": right.len(),
                "n_left": left.len(),
                "normality": ks_normality(&values)?,
                "welch_t": t_test_unpaired(&right, &left)?,
                "mann_whitney_u": mann_whitney_u(&right, &left)?,
            });
            out.report("stats_report.json", result)?;
        }
    }
    Ok(())
}

fn train(out: &Output, choice: NetChoice, a: &NetArgs, rate: Option<f64>) -> Outcome<()> {
    let table: StrokeTable = build_stroke_table(&load(&a.data, rate)?, &SegmentConfig::default())?;
    let labels = table.labels();
    let all: Vec<usize> = (0..labels.len()).collect();
    let (train_idx, val_idx) = stratified_split(&all, &labels, 0.2, a.seed);
    let (inputs, features, mut arch) = match choice {
        NetChoice::Mlp => {
            let names = select_top_features(&table.normalized.subset(&train_idx), a.k, 0.95)?;
            let values = table.normalized.select(&names)?.values();
            let arch = Architecture::Mlp(MlpConfig::new(names.len(), a.seed));
            (values, names, arch)
        }
        NetChoice::Cnn => (
            table.strokes.clone(),
            Vec::new(),
            Architecture::Cnn(CnnConfig::new(a.seed)),
        ),
    };
    let t = arch.train_options_mut();
    if let Some(lr) = a.lr {
        t.learning_rate = lr;
    }
    if let Some(e) = a.epochs {
        t.max_epochs = e;
    }
    if let Some(p) = a.patience {
        t.patience = p;
    }
    let samples = Samples { inputs, labels };
    let mut model = Model::new(arch)?;
    let report = model.fit(&samples.subset(&train_idx), &samples.subset(&val_idx))?;
    out.write("model.json", &save_checkpoint(&model))?;
    out.report(
        "train_report.json",
        json!({ "features": features, "report": report }),
    )?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
