//! One-pass-evaluation metrics: precision and success curves, DP@20, AUC.
//!
//! The tracker is initialized once on the first frame and never reset; each
//! frame contributes one (predicted, ground-truth) box pair. Precision is
//! the fraction of frames whose center error is within a pixel threshold
//! (swept 0..=50 px); success is the fraction whose overlap exceeds an IoU
//! threshold (21-point grid over [0, 1], strict inequality, so even perfect
//! tracking scores 20/21 AUC — the τ = 1.0 bin can never be won).

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};

/// Number of 1-px steps in the precision curve (`0..=50`).
pub const PRECISION_THRESHOLDS: usize = 51;
/// Number of IoU thresholds in the success curve (`i/20` for `i = 0..=20`).
pub const SUCCESS_THRESHOLDS: usize = 21;

/// One frame of a tracking run, with its derived error measures.
#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub predicted: BoundingBox,
    pub ground_truth: BoundingBox,
    pub center_error: f64,
    pub iou: f64,
}

/// Aggregate OPE metrics for one run.
#[derive(Debug, Clone)]
pub struct OpeMetrics {
    /// `precision_curve[t]` = fraction of frames with center error ≤ `t` px.
    pub precision_curve: Vec<f64>,
    /// `success_curve[i]` = fraction of frames with IoU > `i/20`.
    pub success_curve: Vec<f64>,
    /// Distance precision at the 20 px threshold.
    pub dp20: f64,
    /// Mean of the success curve.
    pub auc: f64,
}

fn check_box(b: &BoundingBox, which: &str) -> Result<()> {
    let finite = b.x.is_finite() && b.y.is_finite() && b.w.is_finite() && b.h.is_finite();
    if !finite || b.w <= 0.0 || b.h <= 0.0 {
        return Err(Error::DegenerateBox(format!(
            "{which} box ({}, {}, {}, {})",
            b.x, b.y, b.w, b.h
        )));
    }
    Ok(())
}

/// Intersection-over-union of two boxes. Both must have positive extent.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    check_box(a, "first")?;
    check_box(b, "second")?;
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    let inter = ix.max(0.0) * iy.max(0.0);
    let union = a.area() + b.area() - inter;
    Ok(inter / union)
}

/// Pairs predictions with ground truth and derives per-frame errors.
pub fn records(predicted: &[BoundingBox], ground_truth: &[BoundingBox]) -> Result<Vec<EvalRecord>> {
    if predicted.len() != ground_truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} ground-truth boxes",
            predicted.len(),
            ground_truth.len()
        )));
    }
    predicted
        .iter()
        .zip(ground_truth)
        .map(|(p, g)| {
            Ok(EvalRecord {
                predicted: p.clone(),
                ground_truth: g.clone(),
                center_error: p.center_distance(g),
                iou: iou(p, g)?,
            })
        })
        .collect()
}

/// Computes the OPE curves and their summary numbers.
pub fn ope_metrics(records: &[EvalRecord]) -> Result<OpeMetrics> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no evaluation records".into()));
    }
    let n = records.len() as f64;
    let precision_curve: Vec<f64> = (0..PRECISION_THRESHOLDS)
        .map(|t| {
            let tau = t as f64;
            records.iter().filter(|r| r.center_error <= tau).count() as f64 / n
        })
        .collect();
    let success_curve: Vec<f64> = (0..SUCCESS_THRESHOLDS)
        .map(|i| {
            let tau = i as f64 / 20.0;
            records.iter().filter(|r| r.iou > tau).count() as f64 / n
        })
        .collect();
    let dp20 = precision_curve[20];
    let auc = success_curve.iter().sum::<f64>() / success_curve.len() as f64;
    Ok(OpeMetrics {
        precision_curve,
        success_curve,
        dp20,
        auc,
    })
}
