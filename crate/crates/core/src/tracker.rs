//! Online tracking state machine: multi-scale localization, sparse model
//! updates, weighted sample memory.
//!
//! The tracked filter is `w = v ⊙ h`: localization correlates windowed
//! search-region features with `w` at a bank of scales and takes the global
//! response argmax (with sub-cell quadratic refinement). Learning runs only
//! every `update_interval`-th frame: the new sample joins the weighted
//! memory, then the joint learner refreshes `h` (CG warm-started from the
//! previous filter) and `β`.
//!
//! All feature geometry — cell grid, label, patch masks — is fixed on the
//! first frame: scale changes are absorbed by resampling the search region,
//! so every stored sample shares one shape.

use rayon::prelude::*;

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::features::{
    apply_window, extract_features, feature_grid, Image, RegionSpec, DEFAULT_CELL_SIZE,
    DEFAULT_PADDING,
};
use crate::labels::{
    assemble_reliability, make_gaussian_label, make_patch_masks, wrapped_offset, GaussianLabel,
    PatchMaskSet, ReliabilityModel, DEFAULT_GRID,
};
use crate::learn::{joint_learn, LearnConfig, TrainingSet};
use crate::memory::SampleMemory;
use crate::tensor::{circular_correlate, FeatureTensor, Plane};

/// Which parts of the learner an experiment enables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    /// Plain masked correlation filter: no consistency term, β frozen at 1.
    Baseline,
    /// Consistency term on, β still frozen at 1.
    Lrc,
    /// Full joint learning of h and β.
    Full,
}

/// Tracker tunables; see [`TrackConfig::default`] for the standard setup.
#[derive(Debug, Clone)]
pub struct TrackConfig {
    /// Number of scale hypotheses per frame (odd).
    pub scales: usize,
    /// Multiplicative step between adjacent scale hypotheses (> 1).
    pub scale_step: f64,
    /// Frames between learning events.
    pub update_interval: usize,
    /// Inner learner configuration.
    pub learn: LearnConfig,
    /// Feature cell edge in pixels.
    pub cell_size: usize,
    /// Search-region area as a multiple of the target area.
    pub padding: f64,
    /// Patch grid edge (`grid²` reliability weights).
    pub grid: usize,
    /// Sample-memory capacity `T_max`.
    pub memory_capacity: usize,
    /// Learning rate for early frames.
    pub omega_early: f64,
    /// Learning rate after `omega_switch_frame`.
    pub omega_late: f64,
    /// Last frame index that still uses `omega_early`.
    pub omega_switch_frame: usize,
    /// CG budget for the first-frame solve.
    pub first_cg_iters: usize,
    /// Alternation rounds on the first frame.
    pub first_alternations: usize,
    /// Experiment variant.
    pub ablation: Ablation,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            scales: 5,
            scale_step: 1.02,
            update_interval: 5,
            learn: LearnConfig::default(),
            cell_size: DEFAULT_CELL_SIZE,
            padding: DEFAULT_PADDING,
            grid: DEFAULT_GRID,
            memory_capacity: 50,
            omega_early: 0.011,
            omega_late: 0.02,
            omega_switch_frame: 10,
            first_cg_iters: 80,
            first_alternations: 4,
            ablation: Ablation::Full,
        }
    }
}

impl TrackConfig {
    /// Rejects out-of-range parameters, including the nested learner's.
    pub fn validate(&self) -> Result<()> {
        self.learn.validate()?;
        if self.scales == 0 || self.scales % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "scale count {} must be odd",
                self.scales
            )));
        }
        if !(self.scale_step > 1.0 && self.scale_step.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "scale step {}",
                self.scale_step
            )));
        }
        if self.update_interval == 0 {
            return Err(Error::InvalidParameter("update interval 0".into()));
        }
        if self.cell_size == 0 {
            return Err(Error::InvalidParameter("cell size 0".into()));
        }
        if !(self.padding > 0.0) {
            return Err(Error::InvalidParameter(format!("padding {}", self.padding)));
        }
        if self.grid == 0 {
            return Err(Error::InvalidParameter("patch grid 0".into()));
        }
        if self.memory_capacity == 0 {
            return Err(Error::InvalidParameter("memory capacity 0".into()));
        }
        for (name, w) in [("early", self.omega_early), ("late", self.omega_late)] {
            if !(w > 0.0 && w < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} learning rate {w}")));
            }
        }
        Ok(())
    }

    /// Learner configuration for one event, with the ablation variant and
    /// the first-frame budgets applied.
    fn effective_learn(&self, first_frame: bool) -> LearnConfig {
        let mut cfg = self.learn.clone();
        match self.ablation {
            Ablation::Baseline => {
                cfg.eta = 0.0;
                cfg.learn_beta = false;
            }
            Ablation::Lrc => {
                cfg.learn_beta = false;
            }
            Ablation::Full => {}
        }
        if first_frame {
            cfg.cg_iters = self.first_cg_iters;
            cfg.alternations = self.first_alternations;
        }
        cfg
    }
}

/// Result of one localization pass.
#[derive(Debug, Clone)]
pub struct Localization {
    /// Updated target center in pixels.
    pub center: (f64, f64),
    /// Updated absolute scale.
    pub scale: f64,
    /// Index of the winning scale hypothesis (`scales/2` = unchanged).
    pub scale_index: usize,
    /// Response value at the winning peak.
    pub peak: f64,
    /// Refined displacement in feature cells `(rows, cols)`.
    pub displacement: (f64, f64),
}

/// Full online tracker state.
pub struct TrackerState {
    config: TrackConfig,
    center: (f64, f64),
    base_size: (f64, f64),
    scale: f64,
    filter: FeatureTensor,
    beta: Vec<f64>,
    reliability: ReliabilityModel,
    memory: SampleMemory,
    label: GaussianLabel,
    masks: PatchMaskSet,
    rows: usize,
    cols: usize,
    frame_index: usize,
}

/// Least-squares quadratic fit on the 3x3 neighborhood of a peak; returns
/// the sub-cell offset `(dy, dx)`, clamped to half a cell, or `(0, 0)` when
/// the fitted surface is not concave.
fn refine_peak(r: &Plane, pi: usize, pj: usize) -> (f64, f64) {
    let (h, w) = (r.height(), r.width());
    if h < 3 || w < 3 {
        return (0.0, 0.0);
    }
    // Fit f(x, y) ≈ c0 + c1·y + c2·x + c3·(y² − 2/3) + c4·(x² − 2/3) + c5·xy
    // over offsets x, y ∈ {−1, 0, 1}; the basis is orthogonal on the nine
    // samples, so each coefficient is an independent projection.
    let mut s_y = 0.0;
    let mut s_x = 0.0;
    let mut s_yy = 0.0;
    let mut s_xx = 0.0;
    let mut s_xy = 0.0;
    let mut s_f = 0.0;
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let i = (pi as i64 + dy).rem_euclid(h as i64) as usize;
            let j = (pj as i64 + dx).rem_euclid(w as i64) as usize;
            let f = r.at(i, j);
            let (x, y) = (dx as f64, dy as f64);
            s_f += f;
            s_y += y * f;
            s_x += x * f;
            s_yy += y * y * f;
            s_xx += x * x * f;
            s_xy += x * y * f;
        }
    }
    let c1 = s_y / 6.0;
    let c2 = s_x / 6.0;
    let c3 = (s_yy - 2.0 / 3.0 * s_f) / 2.0;
    let c4 = (s_xx - 2.0 / 3.0 * s_f) / 2.0;
    let c5 = s_xy / 4.0;
    // Stationary point of the quadratic: solve [2c3 c5; c5 2c4]·d = −[c1; c2].
    let det = 4.0 * c3 * c4 - c5 * c5;
    if !(c3 < 0.0 && det > 0.0) {
        return (0.0, 0.0);
    }
    let dy = (-2.0 * c4 * c1 + c5 * c2) / det;
    let dx = (-2.0 * c3 * c2 + c5 * c1) / det;
    (dy.clamp(-0.5, 0.5), dx.clamp(-0.5, 0.5))
}

impl TrackerState {
    /// Initializes the tracker on the first frame: builds the fixed feature
    /// geometry, seeds the memory with the first sample and runs the joint
    /// learner with first-frame budgets.
    pub fn init(frame: &Image, gt_box: &BoundingBox, config: TrackConfig) -> Result<Self> {
        config.validate()?;
        let (fw, fh) = (frame.width() as f64, frame.height() as f64);
        let inside = gt_box.w > 0.0
            && gt_box.h > 0.0
            && gt_box.x >= 0.0
            && gt_box.y >= 0.0
            && gt_box.x + gt_box.w <= fw
            && gt_box.y + gt_box.h <= fh;
        if !inside {
            return Err(Error::DegenerateRegion(format!(
                "initial box ({}, {}, {}, {}) outside {}x{} frame",
                gt_box.x, gt_box.y, gt_box.w, gt_box.h, fw, fh
            )));
        }
        let center = gt_box.center();
        let base_size = (gt_box.w, gt_box.h);
        let spec = RegionSpec {
            center,
            base_size,
            padding: config.padding,
            scale: 1.0,
        };
        let (rows, cols) = feature_grid(&spec, config.cell_size)?;
        // The target occupies 1/sqrt(padding) of the window per axis.
        let lin = config.padding.sqrt();
        let th = ((rows as f64 / lin).round() as usize).clamp(1, rows);
        let tw = ((cols as f64 / lin).round() as usize).clamp(1, cols);
        let label = make_gaussian_label(rows, cols, th, tw);
        let masks = make_patch_masks(rows, cols, th, tw, config.grid)?;

        let sample = apply_window(&extract_features(frame, &spec, config.cell_size)?);
        let mut memory = SampleMemory::new(config.memory_capacity);
        memory.insert(sample, config.omega_early)?;

        let learn_cfg = config.effective_learn(true);
        let beta_init = vec![1.0; masks.count()];
        let h_init = FeatureTensor::zeros(crate::features::CHANNELS, rows, cols);
        let (filter, beta) = {
            let ts = TrainingSet::from_memory(&memory, &label)?;
            joint_learn(&ts, &masks, &h_init, &beta_init, &learn_cfg)?
        };
        let reliability = assemble_reliability(&beta, &masks, learn_cfg.bounds())?;
        Ok(Self {
            config,
            center,
            base_size,
            scale: 1.0,
            filter,
            beta,
            reliability,
            memory,
            label,
            masks,
            rows,
            cols,
            frame_index: 1,
        })
    }

    /// Finds the target in `frame`: correlates every scale hypothesis with
    /// `w = v ⊙ h` and takes the global refined argmax. Does not mutate the
    /// state.
    pub fn localize(&self, frame: &Image) -> Result<Localization> {
        let w = self.reliability.apply(&self.filter)?;
        let mid = (self.config.scales / 2) as i32;
        let responses: Vec<Result<Plane>> = (0..self.config.scales)
            .into_par_iter()
            .map(|si| {
                let factor = self.config.scale_step.powi(si as i32 - mid);
                let spec = RegionSpec {
                    center: self.center,
                    base_size: self.base_size,
                    padding: self.config.padding,
                    scale: self.scale * factor,
                };
                let x = apply_window(&extract_features(frame, &spec, self.config.cell_size)?);
                circular_correlate(&x, &w)
            })
            .collect();
        let mut best: Option<(usize, usize, usize, f64)> = None;
        let mut planes = Vec::with_capacity(self.config.scales);
        for (si, r) in responses.into_iter().enumerate() {
            let plane = r?;
            let (pi, pj, pv) = plane.argmax();
            if best.map_or(true, |(.., bv)| pv > bv) {
                best = Some((si, pi, pj, pv));
            }
            planes.push(plane);
        }
        let (si, pi, pj, peak) = best.expect("at least one scale");
        let (ry, rx) = refine_peak(&planes[si], pi, pj);
        let dy = wrapped_offset(pi, self.rows) + ry;
        let dx = wrapped_offset(pj, self.cols) + rx;
        let chosen_scale = self.scale * self.config.scale_step.powi(si as i32 - mid);
        let px_per_cell = self.config.cell_size as f64 * chosen_scale;
        Ok(Localization {
            center: (self.center.0 + dx * px_per_cell, self.center.1 + dy * px_per_cell),
            scale: chosen_scale,
            scale_index: si,
            peak,
            displacement: (dy, dx),
        })
    }

    /// Learning half of a frame: on scheduled frames, inserts the current
    /// appearance into memory and re-runs the joint learner (CG warm-started
    /// from the previous filter). Returns whether a learning event ran.
    pub fn update(&mut self, frame: &Image) -> Result<bool> {
        let scheduled =
            self.frame_index >= 2 && (self.frame_index - 1) % self.config.update_interval == 0;
        if !scheduled {
            return Ok(false);
        }
        let spec = RegionSpec {
            center: self.center,
            base_size: self.base_size,
            padding: self.config.padding,
            scale: self.scale,
        };
        let sample = apply_window(&extract_features(frame, &spec, self.config.cell_size)?);
        let omega = if self.frame_index <= self.config.omega_switch_frame {
            self.config.omega_early
        } else {
            self.config.omega_late
        };
        self.memory.insert(sample, omega)?;
        let learn_cfg = self.config.effective_learn(false);
        let (filter, beta) = {
            let ts = TrainingSet::from_memory(&self.memory, &self.label)?;
            joint_learn(&ts, &self.masks, &self.filter, &self.beta, &learn_cfg)?
        };
        self.filter = filter;
        self.beta = beta;
        self.reliability = assemble_reliability(&self.beta, &self.masks, learn_cfg.bounds())?;
        Ok(true)
    }

    /// Processes one new frame: localize, commit the new state, then run
    /// the update schedule. Returns the predicted box for this frame.
    pub fn step(&mut self, frame: &Image) -> Result<BoundingBox> {
        let loc = self.localize(frame)?;
        self.frame_index += 1;
        self.center = loc.center;
        self.scale = loc.scale;
        self.update(frame)?;
        Ok(self.current_box())
    }

    /// Current predicted box.
    pub fn current_box(&self) -> BoundingBox {
        BoundingBox::from_center(
            self.center.0,
            self.center.1,
            self.base_size.0 * self.scale,
            self.base_size.1 * self.scale,
        )
    }

    pub fn center(&self) -> (f64, f64) {
        self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Target size in pixels at the current scale.
    pub fn target_size(&self) -> (f64, f64) {
        (self.base_size.0 * self.scale, self.base_size.1 * self.scale)
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn filter(&self) -> &FeatureTensor {
        &self.filter
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn reliability(&self) -> &ReliabilityModel {
        &self.reliability
    }

    pub fn memory(&self) -> &SampleMemory {
        &self.memory
    }

    pub fn masks(&self) -> &PatchMaskSet {
        &self.masks
    }

    pub fn label(&self) -> &GaussianLabel {
        &self.label
    }

    pub fn config(&self) -> &TrackConfig {
        &self.config
    }

    /// Feature grid size `(rows, cols)` in cells.
    pub fn grid_size(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// Runs the one-pass protocol: init on the first frame, then localize and
/// update through the rest. Returns one box per frame, the first being the
/// ground truth.
pub fn track_sequence(
    frames: &[Image],
    gt_first: &BoundingBox,
    config: TrackConfig,
) -> Result<Vec<BoundingBox>> {
    let Some(first) = frames.first() else {
        return Err(Error::EmptyInput("no frames".into()));
    };
    let mut state = TrackerState::init(first, gt_first, config)?;
    let mut boxes = Vec::with_capacity(frames.len());
    boxes.push(*gt_first);
    for frame in &frames[1..] {
        boxes.push(state.step(frame)?);
    }
    Ok(boxes)
}
