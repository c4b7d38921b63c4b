//! End-to-end behaviour of the `mpn` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mpn::data::load_dataset;
use mpn::persist::load_model;
use mpn::train::init_model;

fn mpn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mpn(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    mpn(dir, args).status.code().unwrap()
}

/// Temporary directory holding a 120-sample synthetic dataset `d.jsonl`.
fn workspace() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().to_path_buf();
    ok(
        &p,
        &["generate", "--n", "120", "--seed", "3", "--out", "d.jsonl"],
    );
    (dir, p)
}

#[test]
fn generate_is_reproducible_and_reports_every_label() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let text = ok(
        p,
        &["generate", "--n", "300", "--seed", "7", "--out", "a.jsonl"],
    );
    ok(
        p,
        &["generate", "--n", "300", "--seed", "7", "--out", "b.jsonl"],
    );
    assert_eq!(
        fs::read(p.join("a.jsonl")).unwrap(),
        fs::read(p.join("b.jsonl")).unwrap()
    );
    for name in ["rise_a", "drop_b", "surge_b", "rise_c"] {
        assert!(text.contains(name), "{text}");
    }
    ok(
        p,
        &["generate", "--n", "300", "--seed", "8", "--out", "c.jsonl"],
    );
    assert_ne!(
        fs::read(p.join("a.jsonl")).unwrap(),
        fs::read(p.join("c.jsonl")).unwrap()
    );

    ok(p, &["generate", "--n", "0", "--out", "empty.jsonl"]);
    let (meta, samples) = load_dataset(&p.join("empty.jsonl")).unwrap();
    assert!(samples.is_empty());
    assert_eq!(meta.labels, 4);
}

#[test]
fn training_is_byte_identical_across_runs_and_threads() {
    let (_d, p) = workspace();
    let args = |model: &'static str, threads: &'static str| {
        vec![
            "--threads",
            threads,
            "train",
            "--data",
            "d.jsonl",
            "--model",
            model,
            "--max-epochs",
            "4",
        ]
    };
    ok(&p, &args("m1.json", "1"));
    ok(&p, &args("m2.json", "1"));
    ok(&p, &args("m4.json", "4"));
    let m1 = fs::read(p.join("m1.json")).unwrap();
    assert_eq!(m1, fs::read(p.join("m2.json")).unwrap());
    assert_eq!(m1, fs::read(p.join("m4.json")).unwrap());

    ok(
        &p,
        &[
            "train",
            "--data",
            "d.jsonl",
            "--model",
            "m0.json",
            "--max-epochs",
            "0",
            "--history-csv",
            "h.csv",
        ],
    );
    let file = load_model(&p.join("m0.json")).unwrap();
    assert_eq!(file.model, init_model(file.model.dims, 0).unwrap());
    assert!(file.classifiers.is_some());
    assert_eq!(
        fs::read_to_string(p.join("h.csv")).unwrap().lines().count(),
        1
    );
}

#[test]
fn gridsearch_row_counts() {
    let (_d, p) = workspace();
    fs::write(p.join("grid.json"), r#"[{"eta": 0.01, "lambda": 0.1}]"#).unwrap();
    let base = [
        "gridsearch",
        "--data",
        "d.jsonl",
        "--model",
        "g.json",
        "--max-epochs",
        "1",
        "--report",
        "r.json",
    ];
    let rows = |extra: &[&str]| -> usize {
        let mut args = base.to_vec();
        args.extend_from_slice(extra);
        ok(&p, &args);
        let report: serde_json::Value =
            serde_json::from_slice(&fs::read(p.join("r.json")).unwrap()).unwrap();
        report["rows"].as_array().unwrap().len()
    };
    assert_eq!(rows(&["--grid-file", "grid.json"]), 1);
    assert_eq!(rows(&[]), 9);
    assert_eq!(rows(&["--loss", "siamese"]), 45);
    assert!(load_model(&p.join("g.json")).is_ok());
}

#[test]
fn evaluate_predict_localize_compare() {
    let (_d, p) = workspace();
    ok(
        &p,
        &[
            "train",
            "--data",
            "d.jsonl",
            "--model",
            "m.json",
            "--loss",
            "localize",
            "--max-epochs",
            "5",
        ],
    );
    let text = ok(
        &p,
        &[
            "evaluate",
            "--data",
            "d.jsonl",
            "--model",
            "m.json",
            "--localize",
            "--report",
            "all.json",
        ],
    );
    for section in [
        "[segment svm]",
        "[segment threshold]",
        "[segment nearest]",
        "[localized]",
        "[broadcast]",
    ] {
        assert!(text.contains(section), "{text}");
    }
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(p.join("all.json")).unwrap()).unwrap();
    for part in ["localized", "broadcast"] {
        assert_eq!(report["localization"][part].as_object().unwrap().len(), 6);
    }
    assert_eq!(report["samples"], 48);

    ok(
        &p,
        &[
            "evaluate",
            "--data",
            "d.jsonl",
            "--model",
            "m.json",
            "--classifier",
            "threshold",
            "--report",
            "t.json",
        ],
    );
    let cmp = ok(&p, &["compare", "all.json", "t.json"]);
    // Header, the sample count and six threshold metrics.
    assert_eq!(cmp.lines().count(), 8, "{cmp}");
    assert!(cmp.contains("segment.threshold.micro_f1"));

    ok(
        &p,
        &[
            "predict", "--data", "d.jsonl", "--model", "m.json", "--out", "p.jsonl",
        ],
    );
    let lines = fs::read_to_string(p.join("p.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 120);
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["g"].as_array().unwrap().len(), 4);
    assert_eq!(first["o"].as_array().unwrap().len(), 10);

    ok(
        &p,
        &[
            "localize", "--data", "d.jsonl", "--model", "m.json", "--out", "l.jsonl",
        ],
    );
    assert_eq!(
        fs::read_to_string(p.join("l.jsonl"))
            .unwrap()
            .lines()
            .count(),
        48
    );
}

#[test]
fn gradcheck_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let text = ok(p, &["gradcheck"]);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 3);
    let only = ok(p, &["gradcheck", "--loss", "siamese"]);
    assert_eq!(only.lines().count(), 1);
    assert!(only.contains("siamese"));
    assert_eq!(code(p, &["gradcheck", "--fd-step", "1e-2"]), 3);
}

#[test]
fn exit_codes() {
    let (_d, p) = workspace();
    assert_eq!(code(&p, &["--help"]), 0);
    assert_eq!(code(&p, &["--version"]), 0);
    assert_eq!(code(&p, &[]), 1);
    assert_eq!(code(&p, &["train", "--bogus"]), 1);
    assert_eq!(
        code(
            &p,
            &["train", "--data", "d.jsonl", "--model", "x.json", "--eta", "-1"]
        ),
        1
    );
    assert_eq!(
        code(
            &p,
            &[
                "train",
                "--data",
                "d.jsonl",
                "--model",
                "x.json",
                "--loss",
                "siamese",
                "--batch-size",
                "1"
            ]
        ),
        1
    );
    assert!(!p.join("x.json").exists());
    assert_eq!(
        code(
            &p,
            &["train", "--data", "missing.jsonl", "--model", "x.json"]
        ),
        2
    );
    fs::write(p.join("bad.jsonl"), "{}\n").unwrap();
    assert_eq!(
        code(&p, &["train", "--data", "bad.jsonl", "--model", "x.json"]),
        2
    );
    assert_eq!(code(&p, &["gradcheck", "--fd-step", "0"]), 1);

    // A model whose dimensions disagree with the dataset.
    let other = mpn::data::synth::SynthConfig {
        obs_dim: 4,
        ..Default::default()
    };
    fs::write(p.join("other.json"), serde_json::to_string(&other).unwrap()).unwrap();
    ok(
        &p,
        &[
            "generate",
            "--n",
            "20",
            "--config",
            "other.json",
            "--out",
            "o.jsonl",
        ],
    );
    ok(
        &p,
        &[
            "train",
            "--data",
            "d.jsonl",
            "--model",
            "m.json",
            "--max-epochs",
            "0",
        ],
    );
    assert_eq!(
        code(&p, &["evaluate", "--data", "o.jsonl", "--model", "m.json"]),
        2
    );
}
