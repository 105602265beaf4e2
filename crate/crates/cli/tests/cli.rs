//! End-to-end checks of the `drt` binary: the synth → track → eval round
//! trip, output formats, byte-level determinism, and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SPEC: &str = "frame_w = 96\nframe_h = 80\ntarget_w = 24\ntarget_h = 20\nlength = 12\nseed = 7\n";
const FAST_CFG: &str =
    "cg_iters = 2\nfirst_cg_iters = 8\nalternations = 1\nfirst_alternations = 1\n";

fn drt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_track_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.txt");
    fs::write(&spec, SPEC).unwrap();
    let seq = tmp.path().join("seq");

    let out = drt(&["synth", "--spec", path_str(&spec), "--out", path_str(&seq)]);
    assert_code(&out, 0);
    let gt = seq.join("groundtruth.txt");
    let gt_text = fs::read_to_string(&gt).unwrap();
    assert_eq!(gt_text.lines().count(), 12);
    for line in gt_text.lines() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 4, "line `{line}`");
        for f in fields {
            assert!(f.parse::<f64>().is_ok() && f.contains('.'), "field `{f}`");
        }
    }
    let frames: Vec<_> = (1..=12).map(|i| seq.join(format!("{i:04}.png"))).collect();
    for f in &frames {
        assert!(f.exists(), "missing {}", f.display());
    }

    // Same seed, fresh directory: identical bytes.
    let seq2 = tmp.path().join("seq2");
    let out = drt(&["synth", "--spec", path_str(&spec), "--out", path_str(&seq2)]);
    assert_code(&out, 0);
    for name in ["0001.png", "0007.png", "groundtruth.txt"] {
        assert_eq!(
            fs::read(seq.join(name)).unwrap(),
            fs::read(seq2.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }

    let cfg = tmp.path().join("fast.cfg");
    fs::write(&cfg, FAST_CFG).unwrap();
    let pred = tmp.path().join("pred.txt");
    let out = Command::new(env!("CARGO_BIN_EXE_drt"))
        .args([
            "track",
            "--seq",
            path_str(&seq),
            "--gt",
            path_str(&gt),
            "--config",
            path_str(&cfg),
            "--out",
            path_str(&pred),
        ])
        .env("DRT_THREADS", "2")
        .output()
        .unwrap();
    assert_code(&out, 0);
    let pred_text = fs::read_to_string(&pred).unwrap();
    assert_eq!(pred_text.lines().count(), 12);
    assert_eq!(
        pred_text.lines().next(),
        gt_text.lines().next(),
        "first prediction echoes the initial box"
    );

    let metrics = tmp.path().join("metrics");
    let out = drt(&[
        "eval",
        "--pred",
        path_str(&pred),
        "--gt",
        path_str(&gt),
        "--out-dir",
        path_str(&metrics),
    ]);
    assert_code(&out, 0);
    let summary: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("JSON summary on stdout");
    assert_eq!(summary["frames"], 12);
    let dp20 = summary["dp20"].as_f64().unwrap();
    let auc = summary["auc"].as_f64().unwrap();
    assert!(dp20 > 0.9 && dp20 <= 1.0, "dp20 {dp20}");
    assert!(auc > 0.5 && auc <= 1.0, "auc {auc}");
    let precision = fs::read_to_string(metrics.join("precision.csv")).unwrap();
    let success = fs::read_to_string(metrics.join("success.csv")).unwrap();
    assert_eq!(precision.lines().count(), 52, "header + 51 thresholds");
    assert_eq!(success.lines().count(), 22, "header + 21 thresholds");
    assert!(precision.starts_with("threshold,value\n"));
    assert!(success.lines().nth(21).unwrap().starts_with("1.00,"));

    // The ablation flag selects a runnable variant.
    let pred_b = tmp.path().join("pred_baseline.txt");
    let out = drt(&[
        "track",
        "--seq",
        path_str(&seq),
        "--gt",
        path_str(&gt),
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&pred_b),
        "--ablation",
        "baseline",
    ]);
    assert_code(&out, 0);
    assert_eq!(fs::read_to_string(&pred_b).unwrap().lines().count(), 12);
}

#[test]
fn eval_of_identical_files_scores_dp20_one() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = tmp.path().join("gt.txt");
    fs::write(&gt, "10.00,20.00,30.00,40.00\n12.50,22.50,30.00,40.00\n").unwrap();
    let out = drt(&[
        "eval",
        "--pred",
        path_str(&gt),
        "--gt",
        path_str(&gt),
        "--out-dir",
        path_str(&tmp.path().join("m")),
    ]);
    assert_code(&out, 0);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["dp20"].as_f64().unwrap(), 1.0);
}

#[test]
fn eval_rejects_mismatched_line_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = tmp.path().join("gt.txt");
    let pred = tmp.path().join("pred.txt");
    fs::write(&gt, "1,1,5,5\n2,1,5,5\n3,1,5,5\n").unwrap();
    fs::write(&pred, "1,1,5,5\n2,1,5,5\n").unwrap();
    let out = drt(&[
        "eval",
        "--pred",
        path_str(&pred),
        "--gt",
        path_str(&gt),
        "--out-dir",
        path_str(&tmp.path().join("m")),
    ]);
    assert_code(&out, 2);
}

#[test]
fn track_rejects_missing_ground_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let out = drt(&[
        "track",
        "--seq",
        path_str(tmp.path()),
        "--gt",
        path_str(&tmp.path().join("absent.txt")),
        "--out",
        path_str(&tmp.path().join("pred.txt")),
    ]);
    assert_code(&out, 2);
}

#[test]
fn track_rejects_unknown_config_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "cg_iters = 2\nwibble = 3\n").unwrap();
    let out = drt(&[
        "track",
        "--seq",
        path_str(tmp.path()),
        "--gt",
        path_str(&cfg),
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&tmp.path().join("pred.txt")),
    ]);
    assert_code(&out, 2);
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("unknown key"),
        "stderr names the offending key"
    );
}

#[test]
fn track_rejects_invalid_config_values() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "scales = 4\n").unwrap();
    let out = drt(&[
        "track",
        "--seq",
        path_str(tmp.path()),
        "--gt",
        path_str(&cfg),
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&tmp.path().join("pred.txt")),
    ]);
    assert_code(&out, 2);
}

#[test]
fn synth_rejects_escaping_target() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.txt");
    fs::write(
        &spec,
        "frame_w = 96\nframe_h = 80\ntarget_w = 24\ntarget_h = 20\nlength = 30\n\
         motion = velocity\nvx = 4.0\n",
    )
    .unwrap();
    let out = drt(&[
        "synth",
        "--spec",
        path_str(&spec),
        "--out",
        path_str(&tmp.path().join("seq")),
    ]);
    assert_code(&out, 2);
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("frame"),
        "stderr explains the escape"
    );
}

#[test]
fn synth_rejects_incomplete_occlusion() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.txt");
    fs::write(&spec, "occ_w = 0.5\n").unwrap();
    let out = drt(&[
        "synth",
        "--spec",
        path_str(&spec),
        "--out",
        path_str(&tmp.path().join("seq")),
    ]);
    assert_code(&out, 2);
}

#[test]
fn invalid_thread_cap_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_drt"))
        .args([
            "eval",
            "--pred",
            "x",
            "--gt",
            "y",
            "--out-dir",
            path_str(tmp.path()),
        ])
        .env("DRT_THREADS", "0")
        .output()
        .unwrap();
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("DRT_THREADS"));
}
