//! Gaussian regression targets, patch masks and the reliability map.
//!
//! The label is a circularly wrapped Gaussian with its peak at cell (0,0),
//! matching the shift convention of [`crate::tensor`]: a training sample
//! centered on the target should respond maximally at zero displacement.
//!
//! The target rectangle (in feature cells, centered in the window) is split
//! into a uniform `grid x grid` set of disjoint binary masks `p^m`. The
//! reliability map is their weighted union `v = sum_m beta_m p^m`, zero
//! outside the target region, so the effective filter `v ⊙ h` has compact
//! support inside an otherwise periodic window.

use crate::error::{Error, Result};
use crate::tensor::{FeatureTensor, Plane};

/// Default patch grid edge; 3x3 = 9 fragments.
pub const DEFAULT_GRID: usize = 3;

/// Wrapped Gaussian regression target with peak 1 at cell (0,0).
#[derive(Debug, Clone)]
pub struct GaussianLabel {
    sigma: f64,
    plane: Plane,
}

impl GaussianLabel {
    /// Wraps an arbitrary regression target (e.g. for experiments with
    /// non-Gaussian labels); `sigma` is carried as metadata only.
    pub fn from_plane(plane: Plane, sigma: f64) -> Self {
        Self { sigma, plane }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    pub fn height(&self) -> usize {
        self.plane.height()
    }

    pub fn width(&self) -> usize {
        self.plane.width()
    }
}

/// Signed circular offset of index `i` on a ring of length `n`, in
/// `(-n/2, n/2]`.
pub fn wrapped_offset(i: usize, n: usize) -> f64 {
    if 2 * i > n {
        i as f64 - n as f64
    } else {
        i as f64
    }
}

/// Builds the Gaussian label for an `height x width` cell grid and a target
/// of `target_h x target_w` cells. Bandwidth: `sigma =
/// sqrt(target_h*target_w) / 16` cells.
pub fn make_gaussian_label(
    height: usize,
    width: usize,
    target_h: usize,
    target_w: usize,
) -> GaussianLabel {
    assert!(height >= 1 && width >= 1, "label grid must be non-empty");
    assert!(target_h >= 1 && target_w >= 1, "target must be ≥ 1 cell");
    let sigma = ((target_h * target_w) as f64).sqrt() / 16.0;
    let denom = 2.0 * sigma * sigma;
    let plane = Plane::from_fn(height, width, |i, j| {
        let di = wrapped_offset(i, height);
        let dj = wrapped_offset(j, width);
        (-(di * di + dj * dj) / denom).exp()
    });
    GaussianLabel { sigma, plane }
}

/// Disjoint binary patch masks tiling the centered target rectangle.
///
/// Mask `m` sits at grid position `(m / grid, m % grid)` (row-major over the
/// patch grid), so e.g. the left column of patches is `m % grid == 0`.
#[derive(Debug, Clone)]
pub struct PatchMaskSet {
    grid: usize,
    masks: Vec<Plane>,
    target_region: Plane,
    target_cells: (usize, usize),
}

impl PatchMaskSet {
    /// Number of patches `M`.
    pub fn count(&self) -> usize {
        self.masks.len()
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn mask(&self, m: usize) -> &Plane {
        &self.masks[m]
    }

    pub fn masks(&self) -> &[Plane] {
        &self.masks
    }

    /// Indicator of the whole target rectangle (the union of all masks).
    pub fn target_region(&self) -> &Plane {
        &self.target_region
    }

    /// Target size in cells `(rows, cols)`.
    pub fn target_cells(&self) -> (usize, usize) {
        self.target_cells
    }

    /// Grid position `(row, col)` of mask `m` within the patch grid.
    pub fn grid_position(&self, m: usize) -> (usize, usize) {
        (m / self.grid, m % self.grid)
    }

    pub fn height(&self) -> usize {
        self.target_region.height()
    }

    pub fn width(&self) -> usize {
        self.target_region.width()
    }
}

/// Splits `total` cells into `grid` contiguous segment lengths; remainder
/// cells go to the edge segments (last first, then first, alternating
/// inward).
fn split_segments(total: usize, grid: usize) -> Vec<usize> {
    let base = total / grid;
    let rem = total % grid;
    let mut sizes = vec![base; grid];
    for r in 0..rem {
        let idx = if r % 2 == 0 { grid - 1 - r / 2 } else { (r - 1) / 2 };
        sizes[idx] += 1;
    }
    sizes
}

/// Builds the `grid x grid` patch masks for a `target_h x target_w` cell
/// rectangle centered in an `height x width` window.
pub fn make_patch_masks(
    height: usize,
    width: usize,
    target_h: usize,
    target_w: usize,
    grid: usize,
) -> Result<PatchMaskSet> {
    if grid == 0 {
        return Err(Error::InvalidParameter("patch grid must be ≥ 1".into()));
    }
    if target_h > height || target_w > width {
        return Err(Error::DegenerateRegion(format!(
            "target {target_h}x{target_w} exceeds window {height}x{width}"
        )));
    }
    if target_h < grid || target_w < grid {
        return Err(Error::TargetTooSmall {
            height: target_h,
            width: target_w,
            grid,
        });
    }
    let row0 = (height - target_h) / 2;
    let col0 = (width - target_w) / 2;
    let row_sizes = split_segments(target_h, grid);
    let col_sizes = split_segments(target_w, grid);

    let mut masks = Vec::with_capacity(grid * grid);
    let mut target_region = Plane::zeros(height, width);
    let mut r_off = row0;
    for gi in 0..grid {
        let mut c_off = col0;
        for gj in 0..grid {
            let mut mask = Plane::zeros(height, width);
            for i in r_off..r_off + row_sizes[gi] {
                for j in c_off..c_off + col_sizes[gj] {
                    mask.set(i, j, 1.0);
                    target_region.set(i, j, 1.0);
                }
            }
            masks.push(mask);
            c_off += col_sizes[gj];
        }
        r_off += row_sizes[gi];
    }
    Ok(PatchMaskSet {
        grid,
        masks,
        target_region,
        target_cells: (target_h, target_w),
    })
}

/// Patch weights and the reliability map they induce.
#[derive(Debug, Clone)]
pub struct ReliabilityModel {
    beta: Vec<f64>,
    v: Plane,
}

impl ReliabilityModel {
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// The reliability map `v = sum_m beta_m p^m`; the diagonal operator `V`
    /// acts as elementwise multiplication by this plane (see
    /// [`FeatureTensor::mul_plane`]).
    pub fn weight_map(&self) -> &Plane {
        &self.v
    }

    /// Applies `V` to a tensor: every channel multiplied by `v`.
    pub fn apply(&self, t: &FeatureTensor) -> Result<FeatureTensor> {
        t.mul_plane(&self.v)
    }
}

/// Assembles the reliability map from patch weights, validating the box
/// constraint `bounds = (theta_min, theta_max)`.
pub fn assemble_reliability(
    beta: &[f64],
    masks: &PatchMaskSet,
    bounds: (f64, f64),
) -> Result<ReliabilityModel> {
    if beta.len() != masks.count() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} masks",
            beta.len(),
            masks.count()
        )));
    }
    let (lo, hi) = bounds;
    for (m, &b) in beta.iter().enumerate() {
        if !(b >= lo && b <= hi) {
            return Err(Error::BetaOutOfRange {
                index: m,
                value: b,
                min: lo,
                max: hi,
            });
        }
    }
    let mut v = Plane::zeros(masks.height(), masks.width());
    for (mask, &b) in masks.masks().iter().zip(beta) {
        for (out, &ind) in v.data_mut().iter_mut().zip(mask.data()) {
            if ind != 0.0 {
                *out = b;
            }
        }
    }
    Ok(ReliabilityModel {
        beta: beta.to_vec(),
        v,
    })
}
