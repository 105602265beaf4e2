//! Box-constrained quadratic program for the patch reliability weights.
//!
//! With the base filter fixed, the data term is quadratic in `β`:
//! `f₁(β) = βᵀQβ − 2βᵀb + const`, where column `m` of the response matrix
//! `C` is the circular correlation of the sample with the mask-cropped
//! filter `p^m ⊙ h`. `Q` and `b` are accumulated over the weighted sample
//! set; the dot products are taken in the Fourier domain (Parseval), so no
//! inverse transforms are needed.
//!
//! The box QP is solved by projected gradient descent with the step chosen
//! from a power-iteration estimate of `λ_max(Q)`. If the iteration budget
//! runs out before the projected gradient meets tolerance (possible for
//! ill-conditioned `Q`), an exact active-set enumeration finishes the job:
//! with `M ≤ 9` weights there are at most `3^M` sign configurations, each a
//! tiny dense solve, and any KKT point of a convex QP is a global minimum.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::labels::PatchMaskSet;
use crate::tensor::{circular_correlate, fft2, fft2_plane, FeatureTensor, Plane, SpectrumTensor};

use super::TrainingSet;

/// Per-fragment response maps `c^m = correlate(x, p^m ⊙ h)`, the columns of
/// the QP's response matrix, evaluated through the spatial correlate path.
pub fn fragment_responses(
    x: &FeatureTensor,
    h: &FeatureTensor,
    masks: &PatchMaskSet,
) -> Result<Vec<Plane>> {
    (0..masks.count())
        .map(|m| circular_correlate(x, &h.mul_plane(masks.mask(m))?))
        .collect()
}

/// Accumulates `(Q, b)` from per-sample spectra. `Q[m][n] = Σ_t κ_t c^m·c^n`
/// and `b[m] = Σ_t κ_t c^m·y`, with the dots evaluated spectrally.
pub(crate) fn beta_qp_from_spectra(
    spectra: &[SpectrumTensor],
    weights: &[f64],
    label_spec: &[Complex64],
    h: &FeatureTensor,
    masks: &PatchMaskSet,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mcount = masks.count();
    let k = h.cell_count();
    let kf = k as f64;
    if !h.data().iter().all(|v| v.is_finite()) {
        return Err(Error::NotFinite("base filter".into()));
    }
    // Spectra of the mask-cropped filters, one per fragment.
    let cropped: Vec<SpectrumTensor> = (0..mcount)
        .map(|m| Ok(fft2(&h.mul_plane(masks.mask(m))?)))
        .collect::<Result<_>>()?;

    let mut q = vec![vec![0.0; mcount]; mcount];
    let mut b = vec![0.0; mcount];
    let mut cols: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); k]; mcount];
    for (xs, &kappa) in spectra.iter().zip(weights) {
        cols.par_iter_mut().enumerate().for_each(|(m, col)| {
            col.fill(Complex64::new(0.0, 0.0));
            for d in 0..h.channels() {
                let x = xs.channel(d);
                let w = cropped[m].channel(d);
                for i in 0..k {
                    col[i] += x[i] * w[i].conj();
                }
            }
        });
        for m in 0..mcount {
            for n in m..mcount {
                let s: f64 = cols[m]
                    .iter()
                    .zip(&cols[n])
                    .map(|(a, c)| (a * c.conj()).re)
                    .sum::<f64>()
                    / kf;
                q[m][n] += kappa * s;
                if n != m {
                    q[n][m] += kappa * s;
                }
            }
            let s: f64 = cols[m]
                .iter()
                .zip(label_spec)
                .map(|(a, y)| (a * y.conj()).re)
                .sum::<f64>()
                / kf;
            b[m] += kappa * s;
        }
    }
    Ok((q, b))
}

/// Builds the QP data `(Q, b)` for the patch weights from a training set.
pub fn build_beta_qp(
    h: &FeatureTensor,
    ts: &TrainingSet<'_>,
    masks: &PatchMaskSet,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let (d, hh, ww) = ts.shape();
    if h.channels() != d || h.height() != hh || h.width() != ww {
        return Err(Error::ShapeMismatch(format!(
            "filter {}x{}x{} vs samples {d}x{hh}x{ww}",
            h.channels(),
            h.height(),
            h.width()
        )));
    }
    if masks.height() != hh || masks.width() != ww {
        return Err(Error::ShapeMismatch(format!(
            "masks {}x{} vs samples {hh}x{ww}",
            masks.height(),
            masks.width()
        )));
    }
    let spectra: Vec<SpectrumTensor> = ts.samples().iter().map(|(x, _)| fft2(x)).collect();
    let weights: Vec<f64> = ts.samples().iter().map(|&(_, k)| k).collect();
    let label_spec = fft2_plane(ts.label().plane());
    beta_qp_from_spectra(&spectra, &weights, &label_spec, h, masks)
}

fn clip(v: f64, lo: f64, hi: f64) -> f64 {
    v.clamp(lo, hi)
}

fn qp_grad(q: &[Vec<f64>], b: &[f64], beta: &[f64]) -> Vec<f64> {
    q.iter()
        .zip(b)
        .map(|(row, bi)| row.iter().zip(beta).map(|(qij, bj)| qij * bj).sum::<f64>() - bi)
        .collect()
}

/// Infinity norm of the projected gradient `β − Π(β − g)`.
fn projected_gradient_norm(beta: &[f64], grad: &[f64], lo: f64, hi: f64) -> f64 {
    beta.iter()
        .zip(grad)
        .map(|(&x, &g)| (x - clip(x - g, lo, hi)).abs())
        .fold(0.0, f64::max)
}

/// Largest-eigenvalue estimate by power iteration (Q is PSD).
fn lambda_max_estimate(q: &[Vec<f64>]) -> f64 {
    let m = q.len();
    let mut v: Vec<f64> = (0..m).map(|i| 1.0 / (i + 1) as f64).collect();
    let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= nrm);
    let mut lambda = 0.0;
    for _ in 0..50 {
        let qv: Vec<f64> = q
            .iter()
            .map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum())
            .collect();
        let nrm = qv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm <= 1e-300 {
            return 0.0;
        }
        lambda = v.iter().zip(&qv).map(|(a, b)| a * b).sum();
        v = qv.iter().map(|x| x / nrm).collect();
    }
    lambda.max(0.0)
}

/// Exact minimizer over the box by active-set enumeration: every coordinate
/// is pinned low, pinned high, or free; the free block is solved densely and
/// candidates are screened by the KKT sign conditions. Returns the best
/// feasible KKT point, or `None` if every configuration is singular.
fn enumerate_box_qp(q: &[Vec<f64>], b: &[f64], lo: f64, hi: f64) -> Option<Vec<f64>> {
    let m = b.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let objective = |beta: &[f64]| -> f64 {
        let qb = qp_grad(q, b, beta); // Qβ − b
        beta.iter().zip(&qb).map(|(x, g)| x * (g)).sum::<f64>()
            - beta.iter().zip(b).map(|(x, bi)| x * bi).sum::<f64>()
        // βᵀ(Qβ − b) − βᵀb = βᵀQβ − 2βᵀb
    };
    let total = 3usize.pow(m as u32);
    'outer: for code in 0..total {
        let mut state = Vec::with_capacity(m);
        let mut c = code;
        for _ in 0..m {
            state.push(c % 3); // 0 = low, 1 = high, 2 = free
            c /= 3;
        }
        let free: Vec<usize> = (0..m).filter(|&i| state[i] == 2).collect();
        let mut beta: Vec<f64> = state
            .iter()
            .map(|&s| if s == 1 { hi } else { lo })
            .collect();
        if !free.is_empty() {
            // Solve Q_FF z = b_F − Q_FA β_A.
            let nf = free.len();
            let mut a = vec![vec![0.0; nf + 1]; nf];
            for (ri, &i) in free.iter().enumerate() {
                let mut rhs = b[i];
                for j in 0..m {
                    if state[j] != 2 {
                        rhs -= q[i][j] * beta[j];
                    }
                }
                for (ci, &j) in free.iter().enumerate() {
                    a[ri][ci] = q[i][j];
                }
                a[ri][nf] = rhs;
            }
            // Gaussian elimination with partial pivoting.
            for col in 0..nf {
                let piv = (col..nf)
                    .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())?;
                a.swap(col, piv);
                if a[col][col].abs() < 1e-12 {
                    continue 'outer; // singular free block: skip configuration
                }
                for row in col + 1..nf {
                    let f = a[row][col] / a[col][col];
                    for j in col..=nf {
                        a[row][j] -= f * a[col][j];
                    }
                }
            }
            let mut z = vec![0.0; nf];
            for row in (0..nf).rev() {
                let mut acc = a[row][nf];
                for j in row + 1..nf {
                    acc -= a[row][j] * z[j];
                }
                z[row] = acc / a[row][row];
            }
            for (&i, &zi) in free.iter().zip(&z) {
                if zi < lo - 1e-9 || zi > hi + 1e-9 {
                    continue 'outer; // free solution escapes the box
                }
                beta[i] = clip(zi, lo, hi);
            }
        }
        // KKT sign screening.
        let grad = qp_grad(q, b, &beta);
        for i in 0..m {
            let ok = match state[i] {
                0 => grad[i] >= -1e-9,
                1 => grad[i] <= 1e-9,
                _ => grad[i].abs() <= 1e-7,
            };
            if !ok {
                continue 'outer;
            }
        }
        let val = objective(&beta);
        if best.as_ref().map_or(true, |(bv, _)| val < *bv) {
            best = Some((val, beta));
        }
    }
    best.map(|(_, beta)| beta)
}

/// Minimizes `βᵀQβ − 2βᵀb` over the box `[lo, hi]^M` starting from `start`.
///
/// Projected gradient with step `1/λ_max(Q)` (power-iteration estimate,
/// small safety margin), stopping when the projected-gradient norm falls
/// below `1e-8` or after 1000 iterations; an exact active-set enumeration
/// finishes the rare ill-conditioned cases. The result never has a larger
/// objective than the (clipped) start point.
pub fn solve_box_qp(
    q: &[Vec<f64>],
    b: &[f64],
    start: &[f64],
    lo: f64,
    hi: f64,
) -> Result<Vec<f64>> {
    let m = b.len();
    if q.len() != m || q.iter().any(|row| row.len() != m) || start.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "QP with {} weights, Q {}x{}",
            m,
            q.len(),
            q.first().map_or(0, Vec::len)
        )));
    }
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!("box [{lo}, {hi}]")));
    }
    let finite = q.iter().flatten().all(|v| v.is_finite())
        && b.iter().all(|v| v.is_finite())
        && start.iter().all(|v| v.is_finite());
    if !finite {
        return Err(Error::NotFinite("QP data".into()));
    }
    if m == 0 {
        return Ok(Vec::new());
    }

    let value = |x: &[f64]| -> f64 {
        let g = qp_grad(q, b, x); // Qx − b
        x.iter().zip(&g).map(|(v, gi)| v * gi).sum::<f64>()
            - x.iter().zip(b).map(|(v, bi)| v * bi).sum::<f64>()
    };
    let start_clipped: Vec<f64> = start.iter().map(|&v| clip(v, lo, hi)).collect();
    let mut beta = start_clipped.clone();
    let lambda = lambda_max_estimate(q);
    if lambda <= 0.0 {
        // Q vanishes: the objective is linear, −2βᵀb.
        return Ok(b
            .iter()
            .zip(&beta)
            .map(|(&bi, &cur)| {
                if bi > 0.0 {
                    hi
                } else if bi < 0.0 {
                    lo
                } else {
                    cur
                }
            })
            .collect());
    }
    let step = 1.0 / (1.05 * lambda);
    let mut solved = false;
    for _ in 0..1000 {
        let grad = qp_grad(q, b, &beta);
        if projected_gradient_norm(&beta, &grad, lo, hi) < 1e-8 {
            solved = true;
            break;
        }
        for i in 0..m {
            beta[i] = clip(beta[i] - step * grad[i], lo, hi);
        }
    }
    if !solved {
        // Keep whichever point is better; the enumeration result is the
        // global optimum whenever it exists.
        if let Some(exact) = enumerate_box_qp(q, b, lo, hi) {
            if value(&exact) <= value(&beta) {
                beta = exact;
            }
        }
    }
    // Never return a point worse than the (clipped) start: callers rely on
    // each β half-step not raising the objective.
    if value(&beta) > value(&start_clipped) {
        beta = start_clipped;
    }
    Ok(beta)
}
