use std::path::Path;
use std::process::{Command, Output};

fn handedness(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_handedness"));
    cmd.args(args).env_remove("HANDEDNESS_OUT");
    if let Some(dir) = out {
        cmd.env("HANDEDNESS_OUT", dir);
    }
    cmd.output().expect("binary runs")
}

fn count_files(dir: &Path) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            if p.is_dir() {
                count_files(&p)
            } else {
                1
            }
        })
        .sum()
}

#[test]
fn bad_arguments_exit_2() {
    assert_eq!(handedness(&["grade-db"], None).status.code(), Some(2));
    assert_eq!(
        handedness(&["no-such-command"], None).status.code(),
        Some(2)
    );
    assert_eq!(
        handedness(&["train", "svm", "--data", "x"], None)
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn missing_data_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere.toml");
    let o = handedness(
        &["ingest", "--data", missing.to_str().unwrap()],
        Some(tmp.path()),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn degenerate_fit_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let grades = tmp.path().join("grades.csv");
    let mut csv = String::from("subject,class,dbs,mlp_acc,fourpt_mlp,cnn_acc,fourpt_cnn,eis\n");
    for (i, ei) in [10, 40, 70, 90, -50].iter().enumerate() {
        csv.push_str(&format!("S{i},U,5.0,,,,,{ei}\n"));
    }
    std::fs::write(&grades, csv).unwrap();
    let o = handedness(
        &[
            "compare-ei",
            "--grades",
            grades.to_str().unwrap(),
            "--method",
            "db",
        ],
        Some(tmp.path()),
    );
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn synth_writes_cohort_into_env_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("cohort");
    let o = handedness(
        &[
            "synth",
            "--deltas",
            "0,0.5,1",
            "--subjects",
            "3",
            "--seed",
            "4",
        ],
        Some(&dir),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // 3 subjects x 2 tasks x 2 hands x 6 trials, plus manifest and config
    assert_eq!(count_files(&dir.join("trials")), 72);
    assert!(dir.join("manifest.toml").is_file());
    assert!(dir.join("cohort.toml").is_file());

    let run = tmp.path().join("run");
    let o = handedness(
        &[
            "ingest",
            "--data",
            dir.to_str().unwrap(),
            "--out",
            run.to_str().unwrap(),
        ],
        Some(&dir),
    );
    assert!(o.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("ingest_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["result"]["trials"], 72);
    assert_eq!(report["config"]["subcommand"], "ingest");
}

#[test]
fn bundled_grades_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let o = handedness(
        &["compare-ei", "--grades", "bundled", "--method", "mlp"],
        Some(tmp.path()),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(tmp.path().join("compare_ei_mlp.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["result"]["bland_altman"]["n"], 43);
    let plot = std::fs::read_to_string(tmp.path().join("bland_altman_mlp.csv")).unwrap();
    assert_eq!(plot.lines().count(), 44);
}
