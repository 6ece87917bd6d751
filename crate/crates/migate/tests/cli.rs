use std::path::Path;
use std::process::{Command, Output};

use migate::jsonl::read_jsonl;
use migate::mifs::read_table_file;
use migate_core::gate::AugmentedRecord;
use serde_json::Value;

fn migate(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_migate"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = migate(dir, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn fails_with(dir: &Path, args: &[&str], code: i32) -> Value {
    let o = migate(dir, args);
    assert_eq!(
        o.status.code(),
        Some(code),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    let stderr = String::from_utf8(o.stderr).unwrap();
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "{stderr}");
    let v: Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(v["exit_code"], code);
    v
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_slice(&read(path)).unwrap()
}

#[test]
fn synth_writes_table_manifest_and_oracle() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["synth", "--gate", "xor", "--n", "1000", "--out", "a"]);
    let t = read_table_file(p.join("a/table.mifs")).unwrap();
    assert_eq!((t.len(), t.classes), (1000, 2));
    ok(p, &["synth", "--gate", "xor", "--n", "1000", "--out", "b"]);
    for f in ["table.mifs", "manifest.jsonl", "oracle.csv", "oracle_aggregates.json"] {
        assert_eq!(read(p.join("a").join(f)), read(p.join("b").join(f)), "{f}");
    }
    ok(p, &["synth", "--gate", "copy", "--n", "100", "--out", "c"]);
    let agg = json(p.join("c/oracle_aggregates.json"));
    assert!((agg["R"].as_f64().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    for k in ["U_V", "U_T", "S"] {
        assert!(agg[k].as_f64().unwrap().abs() < 1e-12, "{k}");
    }
}

#[test]
fn bad_arguments_exit_with_config_code() {
    let d = tempfile::tempdir().unwrap();
    let v = fails_with(d.path(), &["synth", "--n", "50"], 2);
    assert_eq!(v["error"], "config");
    fails_with(d.path(), &["estimate", "--table", "missing.mifs"], 2);
    fails_with(d.path(), &["synth", "--gate", "nand"], 2);
    std::fs::write(d.path().join("c.json"), r#"{"gate": {"tau": 0.3, "salt": "x"}}"#).unwrap();
    fails_with(d.path(), &["--config", "c.json", "synth"], 2);
}

#[test]
fn estimate_gate_pipeline() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["synth", "--gate", "copy", "--n", "3000", "--out", "copy"]);
    ok(p, &["estimate", "--table", "copy/table.mifs", "--out", "copy/est"]);
    let r = json(p.join("copy/est/aggregates.json"))["R"].as_f64().unwrap();
    assert!((r - std::f64::consts::LN_2).abs() < 0.1, "R = {r}");
    for f in [
        "decomposition_train.csv",
        "decomposition_val.csv",
        "decomposition_test.csv",
        "aggregates_train.json",
    ] {
        assert!(p.join("copy/est").join(f).exists(), "{f}");
    }
    assert!(p.join("copy/est/checkpoints/joint.minn").exists());
    let reloaded = migate::checkpoint::load_estimator(p.join("copy/est/checkpoints")).unwrap();
    assert_eq!(reloaded.prior.probabilities.len(), 2);

    ok(p, &["synth", "--gate", "xor", "--n", "2000", "--out", "xor"]);
    ok(
        p,
        &[
            "estimate",
            "--table",
            "xor/table.mifs",
            "--out",
            "xor/e1",
            "--no-checkpoint",
        ],
    );
    ok(
        p,
        &[
            "estimate",
            "--table",
            "xor/table.mifs",
            "--out",
            "xor/e2",
            "--no-checkpoint",
        ],
    );
    assert_eq!(
        read(p.join("xor/e1/decomposition.csv")),
        read(p.join("xor/e2/decomposition.csv"))
    );

    let out = ok(
        p,
        &[
            "gate",
            "--table",
            "xor/table.mifs",
            "--manifest",
            "xor/manifest.jsonl",
            "--decomposition",
            "xor/e1/decomposition.csv",
            "--synthetic-captions",
            "--tau",
            "0.5",
            "--out",
            "xor/g",
        ],
    );
    assert!(out.contains("k=0"), "{out}");
    let summary = json(p.join("xor/g/gate_summary.json"));
    assert_eq!(summary["selected"], 0);
}

fn gate_uniform(p: &Path, tau: &str, out: &str) -> Vec<AugmentedRecord> {
    let stdout = ok(
        p,
        &[
            "gate",
            "--table",
            "s/table.mifs",
            "--manifest",
            "s/manifest.jsonl",
            "--mode",
            "uniform_tier",
            "--tau",
            tau,
            "--synthetic-captions",
            "--out",
            out,
        ],
    );
    assert!(stdout.contains(&format!("tau={tau}")), "{stdout}");
    read_jsonl(p.join(out).join("augmented.jsonl")).unwrap()
}

#[test]
fn gate_tiers_nest_and_rerun_identically() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["synth", "--gate", "unique_v", "--n", "400", "--out", "s"]);
    let zero = gate_uniform(p, "0", "g0");
    assert!(zero.iter().all(|r| !r.selected));
    let quarter = gate_uniform(p, "0.25", "g25");
    let half = gate_uniform(p, "0.5", "g50");
    assert!(quarter.iter().any(|r| r.selected));
    for (a, b) in quarter.iter().zip(&half) {
        assert!(!a.selected || b.selected, "{}", a.sample_id);
        if a.selected {
            assert_eq!(a.caption, b.caption);
            assert_eq!(
                a.augmented_text,
                format!(
                    "{}\n{}",
                    a.augmented_text.lines().next().unwrap(),
                    a.caption.as_ref().unwrap()
                )
            );
        }
    }
    gate_uniform(p, "0.25", "g25b");
    assert_eq!(
        read(p.join("g25/augmented.jsonl")),
        read(p.join("g25b/augmented.jsonl"))
    );
}

#[test]
fn failing_provider_exits_with_provider_code() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["synth", "--gate", "copy", "--n", "100", "--out", "s"]);
    let lines: String = (0..100)
        .map(|i| format!("{{\"sample_id\":\"copy-{i:06}\",\"error\":\"timeout\"}}\n"))
        .collect();
    std::fs::write(p.join("caps.jsonl"), lines).unwrap();
    let v = fails_with(
        p,
        &[
            "gate",
            "--table",
            "s/table.mifs",
            "--manifest",
            "s/manifest.jsonl",
            "--mode",
            "uniform_tier",
            "--tau",
            "0.5",
            "--captions",
            "caps.jsonl",
        ],
        4,
    );
    assert!(!v["failed"].as_array().unwrap().is_empty());
}

fn write_grey_png(path: &Path) {
    let img = migate_core::corrupt::ImageBuffer::filled(100, 100, 3, 128);
    migate::image_io::write_png(path, &img).unwrap();
}

#[test]
fn corrupt_images_and_texts() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    std::fs::create_dir(p.join("imgs")).unwrap();
    write_grey_png(&p.join("imgs/grey.png"));
    std::fs::write(
        p.join("texts.jsonl"),
        "{\"sample_id\":\"t1\",\"text\":\"a dog runs on the beach\"}\n{\"sample_id\":\"t2\",\"text\":\"two cats\"}\n",
    )
    .unwrap();
    let cfg = r#"{"corruption": {"image_kinds": ["impulse"], "image_levels": [1], "text_ops": ["drop"], "text_levels": [3]}}"#;
    std::fs::write(p.join("c.json"), cfg).unwrap();
    let args = [
        "--config",
        "c.json",
        "corrupt",
        "--images",
        "imgs",
        "--texts",
        "texts.jsonl",
        "--accept-all",
    ];
    ok(p, &[&args[..], &["--out", "o1"]].concat());
    ok(p, &[&args[..], &["--out", "o2", "--jobs", "3"]].concat());

    let clean = migate::image_io::read_png(p.join("imgs/grey.png")).unwrap();
    let noisy = migate::image_io::read_png(p.join("o1/images/impulse/1/grey.png")).unwrap();
    let frac = noisy.changed_pixels(&clean) as f64 / clean.pixels() as f64;
    let sd = (0.03f64 * 0.97 / clean.pixels() as f64).sqrt();
    assert!((frac - 0.03).abs() < 3.0 * sd, "{frac}");

    let ledger: Vec<Value> = read_jsonl(p.join("o1/ledger.jsonl")).unwrap();
    let text_rows: Vec<&Value> = ledger.iter().filter(|e| e["kind"] == "drop").collect();
    assert_eq!(text_rows.len(), 2);
    assert!(text_rows
        .iter()
        .all(|e| e["attempts"] == 1 && e["excluded"] == false && e["level"] == 3));
    for f in ["ledger.jsonl", "texts/drop_3.jsonl", "images/impulse/1/grey.png"] {
        assert_eq!(read(p.join("o1").join(f)), read(p.join("o2").join(f)), "{f}");
    }

    std::fs::write(p.join("imgs/broken.png"), b"nope").unwrap();
    fails_with(p, &["corrupt", "--images", "imgs"], 5);
}

const RESPONSES: &str = r#"{"figure_id":"f1","question_id":"q1","category":"VS","variant":"no_image","ground_truth":"yes","prediction":"no"}
{"figure_id":"f1","question_id":"q1","category":"VS","variant":"manipulated","ground_truth":"no","prediction":"no"}
{"figure_id":"f2","question_id":"q1","category":"VS","variant":"no_image","ground_truth":"yes","prediction":"yes"}
{"figure_id":"f2","question_id":"q1","category":"VS","variant":"manipulated","ground_truth":"no","prediction":"uncertain"}
{"figure_id":"f3","question_id":"q1","category":"VD","variant":"control","ground_truth":"yes","prediction":"yes"}
{"figure_id":"f3","question_id":"q1","category":"VD","variant":"manipulated","ground_truth":"no","prediction":"no"}
"#;

#[test]
fn score_grades_logs_and_stability() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    std::fs::write(p.join("log.jsonl"), RESPONSES).unwrap();
    std::fs::write(
        p.join("acc.json"),
        r#"{"p_clean": 29.77, "cells": [{"kind": "gaussian", "level": 1, "accuracy": 28.97}]}"#,
    )
    .unwrap();
    ok(
        p,
        &[
            "score",
            "--responses",
            "log.jsonl",
            "--baseline",
            "log.jsonl",
            "--accuracies",
            "acc.json",
        ],
    );
    let diag = json(p.join("out/diagnosis.json"));
    assert_eq!(
        (diag["LI"].as_u64(), diag["VI"].as_u64(), diag["Mixed"].as_u64()),
        (Some(1), Some(1), Some(0))
    );
    assert!((diag["consistency"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    let csv = String::from_utf8(read(p.join("out/stability.csv"))).unwrap();
    assert!(csv.contains("gaussian,1,28.97,-2.7"), "{csv}");
    let cmp = String::from_utf8(read(p.join("out/comparison.csv"))).unwrap();
    assert!(cmp.lines().nth(1).unwrap().contains("+0.00,+0.0,+0.0"), "{cmp}");

    std::fs::write(p.join("empty.jsonl"), "").unwrap();
    let v = fails_with(p, &["score", "--responses", "empty.jsonl"], 6);
    assert_eq!(v["error"], "schema");
}

#[test]
fn report_renders_relative_change() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    std::fs::write(p.join("a.json"), r#"{"R": 0.0553, "U_V": 0.4, "U_T": 0.0, "S": 0.1}"#).unwrap();
    std::fs::write(
        p.join("b.json"),
        r#"{"R": 0.2319, "U_V": 0.196, "U_T": 0.01, "S": 0.1}"#,
    )
    .unwrap();
    let out = ok(p, &["report", "--baseline", "a.json", "--augmented", "b.json"]);
    assert!(out.contains("+319.3%"), "{out}");
    assert!(out.contains("-51.0%"), "{out}");
    let csv = String::from_utf8(read(p.join("out/report.csv"))).unwrap();
    assert!(csv.contains("U_T,0,0.01,\n"), "{csv}");
}
