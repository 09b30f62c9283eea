use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn rankae(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rankae"))
        .args(args)
        .current_dir(dir)
        .env("RANKAE_OUTPUT_DIR", dir.join("runs"))
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = rankae(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

/// `rounds.csv` without the wall-clock column.
fn rounds_without_timing(run: &Path) -> Vec<Vec<String>> {
    rows(&run.join("rounds.csv"))
        .into_iter()
        .map(|mut r| {
            r.pop();
            r
        })
        .collect()
}

const TINY: &[&str] = &[
    "--rounds",
    "4",
    "--anchors",
    "5",
    "--inner-max-epochs",
    "2",
    "--steps-per-epoch",
    "4",
    "--hidden",
    "6",
    "--code",
    "3",
    "--k",
    "1",
];

fn train(dir: &Path, data: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec!["train", "--data", data];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    PathBuf::from(ok(dir, &args).trim())
}

#[test]
fn synth_is_deterministic_with_expected_shape() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    for name in ["a.csv", "b.csv"] {
        ok(
            d,
            &[
                "synth", "stiefel", "--n1", "4", "--n2", "2", "--n", "2000", "--seed", "7",
                "--out", name,
            ],
        );
    }
    assert_eq!(
        fs::read(d.join("a.csv")).unwrap(),
        fs::read(d.join("b.csv")).unwrap()
    );
    assert_eq!(
        fs::read(d.join("a.csv.meta.json")).unwrap(),
        fs::read(d.join("b.csv.meta.json")).unwrap()
    );
    let st = rows(&d.join("a.csv"));
    assert_eq!(st.len(), 2000);
    assert!(st.iter().all(|r| r.len() == 8));

    ok(
        d,
        &[
            "synth", "toy", "--n", "5000", "--seed", "1", "--out", "toy.csv",
        ],
    );
    let toy = rows(&d.join("toy.csv"));
    assert_eq!(toy.len(), 5000);
    assert!(toy.iter().all(|r| r.len() == 2));
}

#[test]
fn invalid_configuration_fails_before_training() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    ok(
        d,
        &[
            "synth", "stiefel", "--n1", "3", "--n2", "1", "--n", "50", "--out", "s.csv",
        ],
    );
    let out = rankae(
        d,
        &[
            "train",
            "--data",
            "s.csv",
            "--lambda=-1",
            "--k",
            "9",
            "--code",
            "2",
            "--hidden",
            "4",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lambda"), "{err}");
    assert!(err.contains("k 9"), "{err}");
    assert!(!d.join("runs").exists());
}

#[test]
fn grid_validation_reports_the_offending_combination() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    ok(
        d,
        &[
            "synth", "stiefel", "--n1", "3", "--n2", "1", "--n", "50", "--out", "s.csv",
        ],
    );
    let out = rankae(
        d,
        &[
            "train",
            "--data",
            "s.csv",
            "--code",
            "2",
            "--anchors",
            "5",
            "--grid",
            "k=1,5",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("[k=5]"), "{err}");
    assert!(!err.contains("[k=1]"), "{err}");
}

#[test]
fn training_writes_every_manifest_artifact() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    ok(
        d,
        &[
            "synth", "stiefel", "--n1", "3", "--n2", "1", "--n", "100", "--out", "s.csv",
        ],
    );
    let run = train(d, "s.csv", &[]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["completed"], true);
    assert_eq!(manifest["rounds_completed"], 4);
    let artifacts = manifest["artifacts"].as_array().unwrap();
    assert!(!artifacts.is_empty());
    for a in artifacts {
        assert!(run.join(a.as_str().unwrap()).is_file(), "{a}");
    }
    assert_eq!(rows(&run.join("rounds.csv")).len(), 4);
}

#[test]
fn interrupted_run_resumes_to_the_same_result() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    ok(
        d,
        &[
            "synth", "stiefel", "--n1", "3", "--n2", "1", "--n", "100", "--out", "s.csv",
        ],
    );
    let whole = train(d, "s.csv", &[]);
    let part = train(d, "s.csv", &["--stop-after", "2"]);
    let manifest = fs::read_to_string(part.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"completed\": false"), "{manifest}");

    let elsewhere = TempDir::new().unwrap();
    ok(
        elsewhere.path(),
        &["train", "--resume", part.to_str().unwrap()],
    );
    assert_eq!(
        fs::read(whole.join("net.json")).unwrap(),
        fs::read(part.join("net.json")).unwrap()
    );
    assert_eq!(rounds_without_timing(&whole), rounds_without_timing(&part));
}

#[test]
fn evaluation_commands_emit_their_tables() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    ok(
        d,
        &[
            "synth",
            "components",
            "--n",
            "60",
            "--seed",
            "1",
            "--out",
            "train.csv",
        ],
    );
    ok(
        d,
        &[
            "synth",
            "components",
            "--n",
            "30",
            "--seed",
            "2",
            "--out",
            "test.csv",
        ],
    );
    let run = train(d, "train.csv", &[]);
    let ckpt = run.to_str().unwrap();

    ok(
        d,
        &[
            "eval",
            "knn",
            "--checkpoint",
            ckpt,
            "--train",
            "train.csv",
            "--test",
            "test.csv",
            "--out",
            "knn.csv",
        ],
    );
    let knn = rows(&d.join("knn.csv"));
    assert_eq!(knn.len(), 19);
    assert_eq!(knn[18][0], "19");

    ok(
        d,
        &[
            "eval",
            "mtc",
            "--checkpoint",
            ckpt,
            "--train",
            "train.csv",
            "--test",
            "test.csv",
            "--k",
            "1",
            "--max-epochs",
            "2",
            "--out",
            "mtc.csv",
        ],
    );
    let betas: Vec<String> = rows(&d.join("mtc.csv"))
        .into_iter()
        .map(|r| r[0].clone())
        .collect();
    assert_eq!(betas, ["0", "0.01", "0.1"]);

    ok(
        d,
        &[
            "synth", "stiefel", "--n1", "9", "--n2", "1", "--n", "60", "--out", "s.csv",
        ],
    );
    let out = rankae(
        d,
        &["eval", "knn", "--checkpoint", ckpt, "--train", "s.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stiefel_evaluation_reports_one_row() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    ok(
        d,
        &[
            "synth", "stiefel", "--n1", "3", "--n2", "1", "--n", "100", "--out", "s.csv",
        ],
    );
    let run = train(d, "s.csv", &[]);
    let out = ok(
        d,
        &[
            "eval",
            "stiefel",
            "--checkpoint",
            run.to_str().unwrap(),
            "--n1",
            "3",
            "--n2",
            "1",
            "--samples",
            "50",
        ],
    );
    let mut lines = out.lines();
    assert_eq!(
        lines.next().unwrap(),
        "e1,e2,one_i,zero_i,e1_stderr,e2_stderr,samples"
    );
    assert!(lines.next().unwrap().ends_with(",50"));
    assert!(lines.next().is_none());
}

#[test]
fn verifiers_pass() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    let out = ok(
        d,
        &[
            "verify", "sphere", "--n", "4", "--radius", "2", "--csv", "q.csv",
        ],
    );
    assert!(out.starts_with("PASS"), "{out}");
    assert!(rows(&d.join("q.csv")).len() > 1);
    ok(d, &["verify", "gradients", "--nets", "2"]);
    ok(d, &["verify", "eckart-young", "--trials", "20"]);
    ok(d, &["verify", "encoder-decoder", "--count", "2"]);
}
