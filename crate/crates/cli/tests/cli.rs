use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sonoseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sonoseg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn help_exits_zero() {
    assert_eq!(code(&sonoseg(&["--help"])), 0);
    for verb in [
        "split",
        "synth",
        "train",
        "eval",
        "adapt",
        "interpret",
        "report",
    ] {
        assert_eq!(code(&sonoseg(&[verb, "--help"])), 0, "{verb}");
    }
}

#[test]
fn missing_dataset_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = sonoseg(&[
        "split",
        "--data",
        p(&tmp.path().join("absent")),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let o = sonoseg(&[
        "train",
        "--manifest",
        p(&tmp.path().join("absent.tsv")),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sonoseg(&[
        "split",
        "--data",
        p(tmp.path()),
        "--out",
        p(&tmp.path().join("o")),
        "--set",
        "train.nonsense=1",
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nonsense"));
}

#[test]
fn split_accepts_comma_separated_fractions() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(
        code(&sonoseg(&[
            "synth",
            "--out",
            p(&data),
            "--counts",
            "5,5,5",
            "--size",
            "32"
        ])),
        0
    );
    let o = sonoseg(&[
        "split",
        "--data",
        p(&data),
        "--out",
        p(&tmp.path().join("s")),
        "--fractions",
        "0.6,0.2,0.2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("train\t9"));
    let o = sonoseg(&[
        "split",
        "--data",
        p(&data),
        "--out",
        p(&tmp.path().join("s2")),
        "--fractions",
        "0.5,0.5",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn corrupt_checkpoint_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(
        code(&sonoseg(&[
            "synth",
            "--out",
            p(&data),
            "--counts",
            "1,1,1",
            "--size",
            "32"
        ])),
        0
    );
    let ckpt = tmp.path().join("bad.ckpt");
    std::fs::write(&ckpt, b"not a checkpoint").unwrap();
    let o = sonoseg(&[
        "eval",
        "--checkpoint",
        p(&ckpt),
        "--data",
        p(&data),
        "--split",
        "all",
        "--out",
        p(&tmp.path().join("e")),
    ]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn end_to_end_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let (data, split, run, eval, int, rep) = (
        t.join("busi"),
        t.join("split"),
        t.join("run"),
        t.join("eval"),
        t.join("int"),
        t.join("rep"),
    );

    let ok = |args: &[&str]| {
        let o = sonoseg(args);
        assert_eq!(
            code(&o),
            0,
            "{args:?}\n{}",
            String::from_utf8_lossy(&o.stderr)
        );
        o
    };
    ok(&[
        "synth",
        "--out",
        p(&data),
        "--counts",
        "4,4,4",
        "--size",
        "64",
        "--seed",
        "5",
    ]);
    assert_eq!(
        std::fs::read_dir(data.join("benign")).unwrap().count(),
        9,
        "four images, five masks"
    );

    let o = ok(&["split", "--data", p(&data), "--out", p(&split)]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(
        stdout.contains("train\t10") && stdout.contains("test\t1"),
        "{stdout}"
    );
    let manifest = split.join("manifest.tsv");

    ok(&[
        "train",
        "--manifest",
        p(&manifest),
        "--out",
        p(&run),
        "--epochs",
        "1",
        "--input-size",
        "64",
        "--batch-size",
        "4",
    ]);
    for f in [
        "config.toml",
        "manifest.tsv",
        "history.jsonl",
        "checkpoint_best.ckpt",
        "checkpoint_last.ckpt",
        "run_manifest.json",
    ] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let rm = json(&run.join("run_manifest.json"));
    assert_eq!(rm["config"]["train.epochs"], "1");
    assert_eq!(rm["config"]["model.input_size"], "64");
    assert_eq!(
        std::fs::read_to_string(run.join("history.jsonl"))
            .unwrap()
            .lines()
            .count(),
        1
    );

    // a populated output directory needs --force
    let o = sonoseg(&[
        "train",
        "--manifest",
        p(&manifest),
        "--out",
        p(&run),
        "--epochs",
        "1",
        "--input-size",
        "64",
    ]);
    assert_eq!(code(&o), 2);

    let ckpt = run.join("checkpoint_best.ckpt");
    ok(&[
        "eval",
        "--checkpoint",
        p(&ckpt),
        "--manifest",
        p(&manifest),
        "--split",
        "train",
        "--out",
        p(&eval),
        "--bootstrap",
    ]);
    for f in [
        "metrics.json",
        "metrics.txt",
        "per_image.tsv",
        "run_manifest.json",
    ] {
        assert!(eval.join(f).is_file(), "{f}");
    }
    let m = json(&eval.join("metrics.json"));
    assert_eq!(m["n_images"], 10);
    let dice = m["mean_dice"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&dice));
    assert!(m["dice_ci"].is_object());

    ok(&[
        "interpret",
        "--checkpoint",
        p(&ckpt),
        "--manifest",
        p(&manifest),
        "--ids",
        "benign/benign (1),malignant/malignant (2)",
        "--out",
        p(&int),
    ]);
    let doc = json(&int.join("interpret.json"));
    assert_eq!(doc["images"].as_array().unwrap().len(), 2);
    for img in doc["images"].as_array().unwrap() {
        let iou = img["attention_iou"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&iou));
        assert!(int.join(img["figure"].as_str().unwrap()).is_file());
    }
    assert!(int.join("attention_iou.tsv").is_file());

    let o = sonoseg(&[
        "interpret",
        "--checkpoint",
        p(&ckpt),
        "--manifest",
        p(&manifest),
        "--ids",
        "missing",
        "--out",
        p(&t.join("i2")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("benign/benign (1)"));

    // a malformed directory is skipped
    ok(&["report", p(&eval), p(&t.join("nothing")), "--out", p(&rep)]);
    let table = std::fs::read_to_string(rep.join("comparison.md")).unwrap();
    assert!(table.contains("| eval |"), "{table}");
    assert!(rep.join("comparison.json").is_file());
    let o = sonoseg(&["report", p(&t.join("nothing")), "--out", p(&t.join("rep2"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn adapt_writes_learning_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let ok = |args: &[&str]| {
        let o = sonoseg(args);
        assert_eq!(
            code(&o),
            0,
            "{args:?}\n{}",
            String::from_utf8_lossy(&o.stderr)
        );
    };
    ok(&[
        "synth",
        "--out",
        p(&t.join("src")),
        "--counts",
        "3,3,3",
        "--size",
        "32",
    ]);
    ok(&[
        "train",
        "--data",
        p(&t.join("src")),
        "--out",
        p(&t.join("run")),
        "--epochs",
        "1",
        "--input-size",
        "32",
    ]);
    ok(&[
        "synth",
        "--out",
        p(&t.join("ext")),
        "--layout",
        "external",
        "--counts",
        "2,3,3",
        "--size",
        "32",
        "--domain",
        "shifted",
    ]);
    let out = t.join("adapt");
    ok(&[
        "adapt",
        "--checkpoint",
        p(&t.join("run/checkpoint_best.ckpt")),
        "--data",
        p(&t.join("ext")),
        "--out",
        p(&out),
        "--fractions",
        "0.25,0.5",
        "--seeds",
        "1,2",
        "--epochs",
        "1",
        "--source-reference",
        "0.8",
    ]);
    let doc = json(&out.join("learning_curve.json"));
    let fractions: Vec<f64> = doc["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["fraction"].as_f64().unwrap())
        .collect();
    assert_eq!(fractions, vec![0.0, 0.25, 0.5]);
    assert_eq!(doc["runs"].as_array().unwrap().len(), 2);
    for f in [
        "learning_curve.tsv",
        "learning_curve_series.tsv",
        "learning_curve.png",
        "run_manifest.json",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
}
