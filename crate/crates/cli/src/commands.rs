//! The three subcommand bodies.

use crate::config::{parse_synth_spec, parse_track_config};
use crate::files::{load_sequence, read_boxes, write_boxes, write_frames};
use crate::CliError;
use drt_core::eval::{ope_metrics, records};
use drt_core::synth::generate;
use drt_core::tracker::{Ablation, TrackConfig, TrackerState};
use std::fs;
use std::path::Path;

/// Tracks the sequence in `seq` from the first ground-truth box and writes
/// one predicted box per frame.
pub fn track(
    seq: &Path,
    gt: &Path,
    config: Option<&Path>,
    out: &Path,
    ablation: Ablation,
) -> Result<(), CliError> {
    let mut cfg = match config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            parse_track_config(&text)?
        }
        None => TrackConfig::default(),
    };
    cfg.ablation = ablation;
    let frames = load_sequence(seq)?;
    let gt_boxes = read_boxes(gt)?;
    let first = gt_boxes[0];

    // A first box the tracker rejects (outside the frame, degenerate size)
    // is an input problem; failures on later frames are runtime ones.
    let mut state = TrackerState::init(&frames[0], &first, cfg)
        .map_err(|e| CliError::Input(format!("initial box: {e}")))?;
    let mut pred = vec![first];
    for frame in &frames[1..] {
        pred.push(
            state
                .step(frame)
                .map_err(|e| CliError::Runtime(format!("tracking failed: {e}")))?,
        );
    }
    write_boxes(out, &pred)
}

/// Scores predictions against ground truth: prints a JSON summary and
/// writes the two OPE curves as CSVs.
pub fn eval(pred: &Path, gt: &Path, out_dir: &Path) -> Result<(), CliError> {
    let pred_boxes = read_boxes(pred)?;
    let gt_boxes = read_boxes(gt)?;
    if pred_boxes.len() != gt_boxes.len() {
        return Err(CliError::Input(format!(
            "{} prediction lines vs {} ground-truth lines",
            pred_boxes.len(),
            gt_boxes.len()
        )));
    }
    let recs = records(&pred_boxes, &gt_boxes)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let metrics = ope_metrics(&recs).map_err(|e| CliError::Input(e.to_string()))?;

    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", out_dir.display())))?;
    let mut precision = String::from("threshold,value\n");
    for (t, v) in metrics.precision_curve.iter().enumerate() {
        precision.push_str(&format!("{t},{v:.6}\n"));
    }
    let mut success = String::from("threshold,value\n");
    for (i, v) in metrics.success_curve.iter().enumerate() {
        success.push_str(&format!("{:.2},{v:.6}\n", i as f64 / 20.0));
    }
    for (name, body) in [("precision.csv", precision), ("success.csv", success)] {
        let path = out_dir.join(name);
        fs::write(&path, body)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    }

    let summary = serde_json::json!({
        "dp20": metrics.dp20,
        "auc": metrics.auc,
        "frames": recs.len(),
    });
    println!("{summary}");
    Ok(())
}

/// Renders a synthetic sequence: numbered 8-bit grayscale frames plus a
/// groundtruth.txt in the box-file format.
pub fn synth(spec_path: &Path, out: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(spec_path)
        .map_err(|e| CliError::Input(format!("{}: {e}", spec_path.display())))?;
    let spec = parse_synth_spec(&text)?;
    let (frames, boxes) =
        generate(&spec).map_err(|e| CliError::Input(format!("spec: {e}")))?;
    write_frames(out, &frames)?;
    write_boxes(&out.join("groundtruth.txt"), &boxes)
}
