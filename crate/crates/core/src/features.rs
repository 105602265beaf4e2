//! Feature extraction: gradient-histogram channels plus a normalized
//! intensity channel, computed on a resampled search region.
//!
//! A [`RegionSpec`] names a search region by target center, base target
//! size, padding factor (search *area* = padding x target area) and a scale
//! factor. The region is resampled to a fixed pixel size derived from the
//! base (unscaled) region, so every scale of the same target yields the same
//! `H x W` cell grid and only the image content differs. Out-of-image pixels
//! replicate the nearest edge pixel.
//!
//! The gradient channels follow the 31-channel histogram-of-gradients
//! layout: 18 contrast-sensitive orientation bins, 9 contrast-insensitive
//! bins, and 4 block-normalization energy channels, each cell normalized by
//! its four surrounding 2x2 cell blocks with truncation at 0.2. Channel 31
//! is the per-cell mean intensity in [0, 1].

use crate::error::{Error, Result};
use crate::tensor::FeatureTensor;

/// Default feature cell edge in pixels.
pub const DEFAULT_CELL_SIZE: usize = 4;
/// Default padding factor: search area = 4x target area (2x linear).
pub const DEFAULT_PADDING: f64 = 4.0;

/// Number of contrast-sensitive orientation bins.
const ORIENTATIONS: usize = 18;
/// Truncation threshold for normalized histogram entries.
const TRUNCATION: f64 = 0.2;
/// Weight of the four texture-energy channels.
const TEXTURE_WEIGHT: f64 = 0.2357;
/// Total channel count: 18 + 9 + 4 gradient channels + 1 intensity.
pub const CHANNELS: usize = 32;

/// 8-bit raster image, grayscale or RGB, row-major interleaved samples.
#[derive(Debug, Clone)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    /// Wraps a grayscale buffer of `width * height` samples.
    pub fn gray(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        Self::new(width, height, 1, data)
    }

    /// Wraps an RGB buffer of `width * height * 3` samples.
    pub fn rgb(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        Self::new(width, height, 3, data)
    }

    fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DegenerateRegion(format!(
                "image dimensions {width}x{height}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "image buffer has {} samples, expected {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Samples per pixel: 1 (grayscale) or 3 (RGB).
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Raw row-major interleaved samples.
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Luminance in [0, 1] at integer pixel coordinates, edge-replicated
    /// for out-of-image positions.
    pub fn luma(&self, x: isize, y: isize) -> f64 {
        let xi = x.clamp(0, self.width as isize - 1) as usize;
        let yi = y.clamp(0, self.height as isize - 1) as usize;
        let idx = (yi * self.width + xi) * self.channels;
        let v = if self.channels == 1 {
            self.data[idx] as f64
        } else {
            0.299 * self.data[idx] as f64
                + 0.587 * self.data[idx + 1] as f64
                + 0.114 * self.data[idx + 2] as f64
        };
        v / 255.0
    }

    /// Luminance at continuous pixel coordinates (pixel `p` is centered at
    /// `p + 0.5`), bilinear with edge replication.
    pub fn luma_bilinear(&self, x: f64, y: f64) -> f64 {
        let fx = x - 0.5;
        let fy = y - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = fx - x0;
        let ty = fy - y0;
        let (x0, y0) = (x0 as isize, y0 as isize);
        let top = {
            let a = self.luma(x0, y0);
            let b = self.luma(x0 + 1, y0);
            a + tx * (b - a)
        };
        let bot = {
            let a = self.luma(x0, y0 + 1);
            let b = self.luma(x0 + 1, y0 + 1);
            a + tx * (b - a)
        };
        top + ty * (bot - top)
    }
}

/// Names a search region: target center, base (scale-1) target size in
/// pixels, padding factor, and the scale at which to sample the image.
#[derive(Debug, Clone, Copy)]
pub struct RegionSpec {
    /// Target center `(x, y)` in pixels.
    pub center: (f64, f64),
    /// Base target size `(w, h)` in pixels at scale 1.
    pub base_size: (f64, f64),
    /// Search-area factor: region area = padding x target area.
    pub padding: f64,
    /// Scale factor applied to the sampled region extent.
    pub scale: f64,
}

impl RegionSpec {
    fn validate(&self) -> Result<()> {
        let ok = self.base_size.0 > 0.0
            && self.base_size.1 > 0.0
            && self.padding > 0.0
            && self.scale > 0.0
            && self.center.0.is_finite()
            && self.center.1.is_finite()
            && self.scale.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::DegenerateRegion(format!("{self:?}")))
        }
    }

    /// Base (scale-1) region extent in pixels: `base_size * sqrt(padding)`.
    pub fn region_size(&self) -> (f64, f64) {
        let lin = self.padding.sqrt();
        (self.base_size.0 * lin, self.base_size.1 * lin)
    }
}

/// Feature grid size `(rows, cols)` in cells for a spec; depends only on
/// the spec's base geometry and the cell size, never on image content or
/// scale.
pub fn feature_grid(spec: &RegionSpec, cell_size: usize) -> Result<(usize, usize)> {
    spec.validate()?;
    if cell_size == 0 {
        return Err(Error::InvalidParameter("cell_size must be ≥ 1".into()));
    }
    let (rw, rh) = spec.region_size();
    let cols = (rw / cell_size as f64).round() as usize;
    let rows = (rh / cell_size as f64).round() as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::DegenerateRegion(format!(
            "region {rw:.1}x{rh:.1} px collapses below one {cell_size} px cell"
        )));
    }
    Ok((rows, cols))
}

/// Resamples the spec'd region to its fixed patch size; returns the gray
/// patch row-major along with its pixel dimensions.
///
/// When one output pixel covers more than one source pixel (scale > 1),
/// each output value averages a grid of bilinear taps spanning the source
/// footprint; plain point sampling there would alias high-frequency
/// texture and corrupt the gradient features of zoomed-out hypotheses.
fn resample_region(
    img: &Image,
    spec: &RegionSpec,
    cell_size: usize,
) -> Result<(Vec<f64>, usize, usize)> {
    let (rows, cols) = feature_grid(spec, cell_size)?;
    let out_w = cols * cell_size;
    let out_h = rows * cell_size;
    let (cx, cy) = spec.center;
    let s = spec.scale;
    let taps = (s.ceil() as usize).max(1);
    let offsets: Vec<f64> = (0..taps)
        .map(|i| s * ((i as f64 + 0.5) / taps as f64 - 0.5))
        .collect();
    let inv = 1.0 / (taps * taps) as f64;
    let mut patch = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let sy = cy + s * (oy as f64 + 0.5 - out_h as f64 / 2.0);
        for ox in 0..out_w {
            let sx = cx + s * (ox as f64 + 0.5 - out_w as f64 / 2.0);
            let mut acc = 0.0;
            for dy in &offsets {
                for dx in &offsets {
                    acc += img.luma_bilinear(sx + dx, sy + dy);
                }
            }
            patch.push(acc * inv);
        }
    }
    Ok((patch, out_h, out_w))
}

/// Extracts the 32-channel feature tensor for a region: gradient-histogram
/// channels 0..31 and mean-intensity channel 31, on a `rows x cols` cell
/// grid given by [`feature_grid`].
pub fn extract_features(
    img: &Image,
    spec: &RegionSpec,
    cell_size: usize,
) -> Result<FeatureTensor> {
    let (patch, ph, pw) = resample_region(img, spec, cell_size)?;
    let rows = ph / cell_size;
    let cols = pw / cell_size;
    let n_cells = rows * cols;

    // Per-cell orientation histograms (18 sensitive bins) and intensity sums.
    let mut hist = vec![0.0f64; n_cells * ORIENTATIONS];
    let mut intensity = vec![0.0f64; n_cells];
    let at = |x: usize, y: usize| patch[y * pw + x];
    let bin_width = std::f64::consts::TAU / ORIENTATIONS as f64;
    for y in 0..ph {
        let cy = y / cell_size;
        for x in 0..pw {
            let cx = x / cell_size;
            let cell = cy * cols + cx;
            intensity[cell] += at(x, y);
            let xl = at(x.saturating_sub(1), y);
            let xr = at((x + 1).min(pw - 1), y);
            let yu = at(x, y.saturating_sub(1));
            let yd = at(x, (y + 1).min(ph - 1));
            let gx = xr - xl;
            let gy = yd - yu;
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx);
            if angle < 0.0 {
                angle += std::f64::consts::TAU;
            }
            let pos = angle / bin_width;
            let b0 = (pos.floor() as usize) % ORIENTATIONS;
            let frac = pos - pos.floor();
            hist[cell * ORIENTATIONS + b0] += mag * (1.0 - frac);
            hist[cell * ORIENTATIONS + (b0 + 1) % ORIENTATIONS] += mag * frac;
        }
    }

    // Contrast-insensitive bins and per-cell gradient energy.
    let half = ORIENTATIONS / 2;
    let mut insens = vec![0.0f64; n_cells * half];
    let mut energy = vec![0.0f64; n_cells];
    for c in 0..n_cells {
        for o in 0..half {
            let v = hist[c * ORIENTATIONS + o] + hist[c * ORIENTATIONS + o + half];
            insens[c * half + o] = v;
            energy[c] += v * v;
        }
    }

    // Block normalization: each cell normalized by its four neighboring
    // 2x2 cell blocks (edge-clamped), entries truncated at 0.2.
    let e_at = |r: isize, c: isize| {
        let r = r.clamp(0, rows as isize - 1) as usize;
        let c = c.clamp(0, cols as isize - 1) as usize;
        energy[r * cols + c]
    };
    let mut out = FeatureTensor::zeros(CHANNELS, rows, cols);
    let cell_px = (cell_size * cell_size) as f64;
    for r in 0..rows {
        for c in 0..cols {
            let cell = r * cols + c;
            let (ri, ci) = (r as isize, c as isize);
            let mut norms = [0.0f64; 4];
            for (k, (dr, dc)) in [(-1, -1), (-1, 1), (1, -1), (1, 1)].into_iter().enumerate() {
                let sum = e_at(ri, ci)
                    + e_at(ri + dr, ci)
                    + e_at(ri, ci + dc)
                    + e_at(ri + dr, ci + dc);
                norms[k] = 1.0 / (sum + 1e-10).sqrt();
            }
            let mut texture = [0.0f64; 4];
            for o in 0..ORIENTATIONS {
                let v = hist[cell * ORIENTATIONS + o];
                let mut acc = 0.0;
                for (k, n) in norms.iter().enumerate() {
                    let t = (v * n).min(TRUNCATION);
                    acc += t;
                    texture[k] += t;
                }
                out.set(o, r, c, 0.5 * acc);
            }
            for o in 0..half {
                let v = insens[cell * half + o];
                let acc: f64 = norms.iter().map(|n| (v * n).min(TRUNCATION)).sum();
                out.set(ORIENTATIONS + o, r, c, 0.5 * acc);
            }
            for k in 0..4 {
                out.set(ORIENTATIONS + half + k, r, c, TEXTURE_WEIGHT * texture[k]);
            }
            out.set(CHANNELS - 1, r, c, intensity[cell] / cell_px);
        }
    }
    Ok(out)
}

/// Multiplies every channel by a separable Hann window; border rows and
/// columns go to zero, the center of an odd-sized grid is unchanged.
pub fn apply_window(t: &FeatureTensor) -> FeatureTensor {
    let hann = |n: usize, len: usize| -> f64 {
        if len <= 1 {
            1.0
        } else {
            0.5 * (1.0 - (std::f64::consts::TAU * n as f64 / (len - 1) as f64).cos())
        }
    };
    let (h, w) = (t.height(), t.width());
    let mut out = t.clone();
    for d in 0..t.channels() {
        for i in 0..h {
            let wi = hann(i, h);
            for j in 0..w {
                let v = out.at(d, i, j) * wi * hann(j, w);
                out.set(d, i, j, v);
            }
        }
    }
    out
}
