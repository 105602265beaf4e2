//! Deterministic synthetic sequences with exact ground truth.
//!
//! Every stochastic choice flows from the spec's seed through two
//! independent ChaCha streams: stream A drives the target texture,
//! background and sensor noise with a fixed per-frame draw count, while
//! stream B drives only the occluder fill. Toggling the occlusion schedule
//! therefore changes nothing outside the occluded pixels, which makes
//! occlusion experiments exact A/B comparisons.
//!
//! The target is textured with high-contrast 4x4 px blocks (so gradient
//! features are informative) over a low-contrast noise background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::features::Image;

/// Edge length of one texture block in target-base pixels.
pub const TEXTURE_BLOCK: usize = 4;

/// Target-center trajectory, evaluated per frame index `t` (0-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Motion {
    Static,
    /// `center_t = start + t * (vx, vy)` pixels.
    ConstantVelocity { vx: f64, vy: f64 },
    /// `center_t = start + (amp_x, amp_y) * sin(2π t / period)`.
    Sinusoidal {
        amp_x: f64,
        amp_y: f64,
        period: f64,
    },
}

/// Per-frame multiplicative size schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleSchedule {
    Constant,
    /// `scale_t = per_frame^t`.
    Ramp { per_frame: f64 },
}

/// A sub-rectangle of the target box, in unit target coordinates, replaced
/// with an independent per-frame block texture for an inclusive frame
/// range.
#[derive(Debug, Clone, Copy)]
pub struct OcclusionSpec {
    /// `(u, v, w, h)` as fractions of the target box; e.g. the left half is
    /// `(0.0, 0.0, 0.5, 1.0)`.
    pub region: (f64, f64, f64, f64),
    /// First occluded frame (0-based, inclusive).
    pub first_frame: usize,
    /// Last occluded frame (inclusive).
    pub last_frame: usize,
}

/// Full description of a synthetic sequence.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    /// Frame size `(width, height)` in pixels.
    pub frame_size: (usize, usize),
    /// Target size `(width, height)` in pixels at scale 1.
    pub target_size: (f64, f64),
    /// Target center on frame 0.
    pub start_center: (f64, f64),
    pub motion: Motion,
    pub scale: ScaleSchedule,
    pub occlusion: Option<OcclusionSpec>,
    /// `Some(n)`: repeat one texture tile in an `n x n` grid over the
    /// target, giving every target sub-region identical appearance (useful
    /// for reliability experiments where regions should start out equally
    /// informative). `None`: one texture across the whole target.
    pub texture_tiles: Option<usize>,
    /// `true`: draw the background noise once and reuse it on every frame,
    /// like a fixed camera over a static scene. `false`: redraw it per
    /// frame (temporal clutter).
    pub frozen_background: bool,
    /// `true`: draw the occluder pattern once and keep it fixed in target
    /// coordinates for the whole episode, like an object stuck in front of
    /// the target. `false`: redraw it every frame (flickering clutter).
    pub frozen_occluder: bool,
    /// Seed for both random streams.
    pub seed: u64,
    /// Standard deviation of additive Gaussian sensor noise (luma units).
    pub noise_sigma: f64,
    /// Number of frames; must be ≥ 1.
    pub length: usize,
}

impl SynthSpec {
    /// A static, noise-free target centered in the frame.
    pub fn centered(
        frame_size: (usize, usize),
        target_size: (f64, f64),
        length: usize,
        seed: u64,
    ) -> Self {
        Self {
            frame_size,
            target_size,
            start_center: (frame_size.0 as f64 / 2.0, frame_size.1 as f64 / 2.0),
            motion: Motion::Static,
            scale: ScaleSchedule::Constant,
            occlusion: None,
            texture_tiles: None,
            frozen_background: false,
            frozen_occluder: false,
            seed,
            noise_sigma: 0.0,
            length,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.length < 1 {
            return Err(Error::EmptyInput("sequence length must be ≥ 1".into()));
        }
        if self.frame_size.0 == 0 || self.frame_size.1 == 0 {
            return Err(Error::DegenerateRegion(format!(
                "frame size {}x{}",
                self.frame_size.0, self.frame_size.1
            )));
        }
        if !(self.target_size.0 > 0.0 && self.target_size.1 > 0.0) {
            return Err(Error::DegenerateRegion(format!(
                "target size {}x{}",
                self.target_size.0, self.target_size.1
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise sigma {}",
                self.noise_sigma
            )));
        }
        if let Motion::Sinusoidal { period, .. } = self.motion {
            if !(period > 0.0) {
                return Err(Error::InvalidParameter(format!("motion period {period}")));
            }
        }
        if let ScaleSchedule::Ramp { per_frame } = self.scale {
            if !(per_frame > 0.0 && per_frame.is_finite()) {
                return Err(Error::InvalidParameter(format!("scale step {per_frame}")));
            }
        }
        if self.texture_tiles == Some(0) {
            return Err(Error::InvalidParameter("texture tiling of 0".into()));
        }
        if let Some(occ) = &self.occlusion {
            let (u, v, w, h) = occ.region;
            let ok = (0.0..=1.0).contains(&u)
                && (0.0..=1.0).contains(&v)
                && w > 0.0
                && h > 0.0
                && u + w <= 1.0 + 1e-9
                && v + h <= 1.0 + 1e-9
                && occ.first_frame <= occ.last_frame;
            if !ok {
                return Err(Error::InvalidParameter(format!("occlusion {occ:?}")));
            }
        }
        Ok(())
    }

    /// Target center on frame `t`.
    pub fn center_at(&self, t: usize) -> (f64, f64) {
        let tf = t as f64;
        let (sx, sy) = self.start_center;
        match self.motion {
            Motion::Static => (sx, sy),
            Motion::ConstantVelocity { vx, vy } => (sx + vx * tf, sy + vy * tf),
            Motion::Sinusoidal {
                amp_x,
                amp_y,
                period,
            } => {
                let phase = (2.0 * std::f64::consts::PI * tf / period).sin();
                (sx + amp_x * phase, sy + amp_y * phase)
            }
        }
    }

    /// Scale factor on frame `t`.
    pub fn scale_at(&self, t: usize) -> f64 {
        match self.scale {
            ScaleSchedule::Constant => 1.0,
            ScaleSchedule::Ramp { per_frame } => per_frame.powi(t as i32),
        }
    }

    /// Exact ground-truth box on frame `t`.
    pub fn box_at(&self, t: usize) -> BoundingBox {
        let (cx, cy) = self.center_at(t);
        let s = self.scale_at(t);
        BoundingBox::from_center(cx, cy, self.target_size.0 * s, self.target_size.1 * s)
    }
}

/// Seeded block texture covering the base target rectangle.
struct BlockTexture {
    blocks_x: usize,
    blocks_y: usize,
    values: Vec<f64>,
}

impl BlockTexture {
    fn new(rng: &mut ChaCha8Rng, target_w: f64, target_h: f64) -> Self {
        let blocks_x = (target_w / TEXTURE_BLOCK as f64).ceil().max(1.0) as usize;
        let blocks_y = (target_h / TEXTURE_BLOCK as f64).ceil().max(1.0) as usize;
        let values = (0..blocks_x * blocks_y)
            .map(|_| if rng.gen::<bool>() { 0.9 } else { 0.1 })
            .collect();
        Self {
            blocks_x,
            blocks_y,
            values,
        }
    }

    /// Texture value at unit target coordinates `(u, v) ∈ [0, 1)²`.
    fn at(&self, u: f64, v: f64) -> f64 {
        let bx = ((u * self.blocks_x as f64) as usize).min(self.blocks_x - 1);
        let by = ((v * self.blocks_y as f64) as usize).min(self.blocks_y - 1);
        self.values[by * self.blocks_x + bx]
    }
}

fn box_inside_frame(b: &BoundingBox, fw: usize, fh: usize) -> bool {
    b.x >= 0.0 && b.y >= 0.0 && b.x + b.w <= fw as f64 && b.y + b.h <= fh as f64
}

/// Renders the sequence. Deterministic: equal specs produce bitwise-equal
/// frames. Fails with [`Error::TargetLeavesFrame`] if the schedule pushes
/// any ground-truth box outside the frame.
pub fn generate(spec: &SynthSpec) -> Result<(Vec<Image>, Vec<BoundingBox>)> {
    spec.validate()?;
    let (fw, fh) = spec.frame_size;

    // Validate the whole trajectory up front so no frames are rendered for
    // an invalid schedule.
    let boxes: Vec<BoundingBox> = (0..spec.length).map(|t| spec.box_at(t)).collect();
    for (t, b) in boxes.iter().enumerate() {
        if !box_inside_frame(b, fw, fh) {
            return Err(Error::TargetLeavesFrame {
                frame: t,
                x: b.x,
                y: b.y,
                w: b.w,
                h: b.h,
            });
        }
    }

    let mut rng_a = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rng_b = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9E37_79B9_7F4A_7C15);
    let tiles = spec.texture_tiles.unwrap_or(1) as f64;
    let texture = BlockTexture::new(
        &mut rng_a,
        spec.target_size.0 / tiles,
        spec.target_size.1 / tiles,
    );
    let noise = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).expect("validated sigma"))
    } else {
        None
    };

    let mut frames = Vec::with_capacity(spec.length);
    let mut luma = vec![0.0f64; fw * fh];
    let frozen_bg: Option<Vec<f64>> = spec.frozen_background.then(|| {
        (0..fw * fh)
            .map(|_| 0.5 + 0.05 * rng_a.gen_range(-1.0..1.0))
            .collect()
    });
    // A frozen occluder's block grid is sized at the episode's first frame
    // and then follows the target box, so the pattern is pinned in target
    // coordinates even under scale change.
    let frozen_occ: Option<(Vec<f64>, usize, usize)> = match &spec.occlusion {
        Some(occ) if spec.frozen_occluder => {
            let b = &boxes[occ.first_frame.min(spec.length - 1)];
            let (_, _, rw, rh) = occ.region;
            let edge = TEXTURE_BLOCK as f64;
            let bw = (((rw * b.w) / edge).ceil() as usize).max(1);
            let bh = (((rh * b.h) / edge).ceil() as usize).max(1);
            let vals = (0..bw * bh)
                .map(|_| if rng_b.gen::<bool>() { 0.9 } else { 0.1 })
                .collect();
            Some((vals, bw, bh))
        }
        _ => None,
    };
    for (t, b) in boxes.iter().enumerate() {
        // Background: low-contrast noise. Stream-A consumption is fixed for
        // a given spec either way, so equal specs stay bitwise equal.
        match &frozen_bg {
            Some(bg) => luma.copy_from_slice(bg),
            None => {
                for px in luma.iter_mut() {
                    *px = 0.5 + 0.05 * rng_a.gen_range(-1.0..1.0);
                }
            }
        }
        // Target texture at pixel centers.
        for py in 0..fh {
            let v = (py as f64 + 0.5 - b.y) / b.h;
            if !(0.0..1.0).contains(&v) {
                continue;
            }
            for px in 0..fw {
                let u = (px as f64 + 0.5 - b.x) / b.w;
                if (0.0..1.0).contains(&u) {
                    luma[py * fw + px] = texture.at((u * tiles).fract(), (v * tiles).fract());
                }
            }
        }
        // Sensor noise: again one draw per pixel, fixed consumption.
        if let Some(n) = &noise {
            for px in luma.iter_mut() {
                *px += n.sample(&mut rng_a);
            }
        }
        // Occluder: stream B only, touching only the scheduled pixels. The
        // fill is a block texture at the target's own block scale, redrawn
        // every frame, so it carries target-like gradient energy while
        // staying uncorrelated from frame to frame.
        if let Some(occ) = &spec.occlusion {
            if t >= occ.first_frame && t <= occ.last_frame {
                let (ru, rv, rw, rh) = occ.region;
                let ox0 = b.x + ru * b.w;
                let oy0 = b.y + rv * b.h;
                let ox1 = ox0 + rw * b.w;
                let oy1 = oy0 + rh * b.h;
                let edge = TEXTURE_BLOCK as f64;
                let fresh: Vec<f64>;
                let (vals, bw, bh): (&[f64], usize, usize) = match &frozen_occ {
                    Some((v, w, h)) => (v.as_slice(), *w, *h),
                    None => {
                        let bw = (((ox1 - ox0) / edge).ceil() as usize).max(1);
                        let bh = (((oy1 - oy0) / edge).ceil() as usize).max(1);
                        fresh = (0..bw * bh)
                            .map(|_| if rng_b.gen::<bool>() { 0.9 } else { 0.1 })
                            .collect();
                        (fresh.as_slice(), bw, bh)
                    }
                };
                for py in 0..fh {
                    let cy = py as f64 + 0.5;
                    if cy < oy0 || cy >= oy1 {
                        continue;
                    }
                    let by = (((cy - oy0) / edge) as usize).min(bh - 1);
                    for px in 0..fw {
                        let cx = px as f64 + 0.5;
                        if cx >= ox0 && cx < ox1 {
                            let bx = (((cx - ox0) / edge) as usize).min(bw - 1);
                            luma[py * fw + px] = vals[by * bw + bx];
                        }
                    }
                }
            }
        }
        let bytes: Vec<u8> = luma
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        frames.push(Image::gray(fw, fh, bytes)?);
    }
    Ok((frames, boxes))
}
