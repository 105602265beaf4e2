//! Dense, from-first-principles oracles for the learning math.
//!
//! Everything here is built by explicit loops and naive dense linear
//! algebra — no FFTs, no calls into the library's spectral code paths — so
//! the integration tests compare two genuinely independent evaluation
//! routes. Vectors use row-major cell order `k = i*W + j`; multi-channel
//! vectors stack channel blocks `[h_1; ...; h_D]`.

#![allow(dead_code)]

use drt_core::labels::{GaussianLabel, PatchMaskSet};
use drt_core::tensor::{FeatureTensor, Plane};

pub type Mat = Vec<Vec<f64>>;

/// Dense circulant shift matrix of one channel plane: column `k` holds the
/// `k`-step circular shift `x_k[j] = x[(j + k) mod K]` with 2-D row-major
/// indices, i.e. `X[j][k] = x[(j_i + k_i) mod H][(j_j + k_j) mod W]`.
pub fn shift_matrix(x: &[f64], h: usize, w: usize) -> Mat {
    let k = h * w;
    assert_eq!(x.len(), k);
    let mut m = vec![vec![0.0; k]; k];
    for ji in 0..h {
        for jj in 0..w {
            let j = ji * w + jj;
            for ki in 0..h {
                for kj in 0..w {
                    let col = ki * w + kj;
                    m[j][col] = x[((ji + ki) % h) * w + (jj + kj) % w];
                }
            }
        }
    }
    m
}

pub fn zeros_mat(rows: usize, cols: usize) -> Mat {
    vec![vec![0.0; cols]; rows]
}

pub fn identity(n: usize) -> Mat {
    let mut m = zeros_mat(n, n);
    for i in 0..n {
        m[i][i] = 1.0;
    }
    m
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, inner, p) = (a.len(), b.len(), b[0].len());
    let mut out = zeros_mat(n, p);
    for i in 0..n {
        for l in 0..inner {
            let v = a[i][l];
            if v == 0.0 {
                continue;
            }
            for j in 0..p {
                out[i][j] += v * b[l][j];
            }
        }
    }
    out
}

pub fn mat_vec(a: &Mat, v: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(r, x)| r * x).sum())
        .collect()
}

pub fn transpose(a: &Mat) -> Mat {
    let (n, p) = (a.len(), a[0].len());
    let mut out = zeros_mat(p, n);
    for i in 0..n {
        for j in 0..p {
            out[j][i] = a[i][j];
        }
    }
    out
}

pub fn scale_mat(a: &Mat, s: f64) -> Mat {
    a.iter()
        .map(|row| row.iter().map(|v| v * s).collect())
        .collect()
}

pub fn add_assign_mat(a: &mut Mat, b: &Mat, s: f64) {
    for (ra, rb) in a.iter_mut().zip(b) {
        for (va, vb) in ra.iter_mut().zip(rb) {
            *va += s * vb;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A z = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &Mat, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Mat = a.iter().map(|row| {
        let mut r = row.clone();
        r.reserve(1);
        r
    }).collect();
    for i in 0..n {
        m[i].push(b[i]);
    }
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        m.swap(col, pivot_row);
        let pivot = m[col][col];
        assert!(pivot.abs() > 1e-12, "singular oracle system");
        for row in col + 1..n {
            let f = m[row][col] / pivot;
            if f == 0.0 {
                continue;
            }
            for j in col..=n {
                m[row][j] -= f * m[col][j];
            }
        }
    }
    let mut z = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = m[row][n];
        for j in row + 1..n {
            acc -= m[row][j] * z[j];
        }
        z[row] = acc / m[row][row];
    }
    z
}

/// Diagonal matrix of a plane's row-major cells.
pub fn diag_of_plane(p: &Plane) -> Mat {
    let k = p.len();
    let mut m = zeros_mat(k, k);
    for (i, &v) in p.data().iter().enumerate() {
        m[i][i] = v;
    }
    m
}

/// Per-channel shift matrices `X_d` of a sample tensor.
pub fn channel_shift_matrices(x: &FeatureTensor) -> Vec<Mat> {
    (0..x.channels())
        .map(|d| shift_matrix(x.channel(d), x.height(), x.width()))
        .collect()
}

/// Dense cross-channel Gram operator `g(Λ, X)` for one sample: a `DK x DK`
/// matrix with blocks `g[e][d] = Λ X_e X_dᵀ Λ` (Λ the same diagonal plane on
/// every channel).
pub fn dense_gram(xmats: &[Mat], lam: &Plane) -> Mat {
    let d = xmats.len();
    let k = lam.len();
    let lam_m = diag_of_plane(lam);
    // X_dᵀ Λ per channel, then assemble blocks Λ X_e (X_dᵀ Λ).
    let right: Vec<Mat> = xmats
        .iter()
        .map(|x| matmul(&transpose(x), &lam_m))
        .collect();
    let left: Vec<Mat> = xmats.iter().map(|x| matmul(&lam_m, x)).collect();
    let mut out = zeros_mat(d * k, d * k);
    for e in 0..d {
        for dd in 0..d {
            let block = matmul(&left[e], &right[dd]);
            for i in 0..k {
                for j in 0..k {
                    out[e * k + i][dd * k + j] = block[i][j];
                }
            }
        }
    }
    out
}

/// Dense normal-equations operator over weighted samples:
/// `A = Σ_t κ_t [ g(V,X_t) + 2ηM Σ_m g(P^m,X_t) − 2η g(ΣP^m,X_t) ] + γI`.
pub fn dense_normal_matrix(
    samples: &[(&FeatureTensor, f64)],
    v: &Plane,
    masks: &PatchMaskSet,
    eta: f64,
    gamma: f64,
) -> Mat {
    let (d, k) = (samples[0].0.channels(), samples[0].0.cell_count());
    let mcount = masks.count() as f64;
    let mut a = zeros_mat(d * k, d * k);
    for (x, kappa) in samples {
        let xmats = channel_shift_matrices(x);
        add_assign_mat(&mut a, &dense_gram(&xmats, v), *kappa);
        if eta != 0.0 {
            for m in 0..masks.count() {
                add_assign_mat(
                    &mut a,
                    &dense_gram(&xmats, masks.mask(m)),
                    kappa * 2.0 * eta * mcount,
                );
            }
            add_assign_mat(
                &mut a,
                &dense_gram(&xmats, masks.target_region()),
                kappa * (-2.0) * eta,
            );
        }
    }
    add_assign_mat(&mut a, &identity(d * k), gamma);
    a
}

/// Dense right-hand side `Σ_t κ_t V X_t y` stacked over channels.
pub fn dense_rhs(samples: &[(&FeatureTensor, f64)], v: &Plane, label: &GaussianLabel) -> Vec<f64> {
    let (d, k) = (samples[0].0.channels(), samples[0].0.cell_count());
    let mut out = vec![0.0; d * k];
    for (x, kappa) in samples {
        let xmats = channel_shift_matrices(x);
        for e in 0..d {
            let xy = mat_vec(&xmats[e], label.plane().data());
            for i in 0..k {
                out[e * k + i] += kappa * v.data()[i] * xy[i];
            }
        }
    }
    out
}

/// Dense response `Σ_d X_dᵀ w_d` of a stacked filter against one sample.
pub fn dense_response(xmats: &[Mat], w: &FeatureTensor) -> Vec<f64> {
    let k = w.cell_count();
    let mut r = vec![0.0; k];
    for (d, xm) in xmats.iter().enumerate() {
        let contrib = mat_vec(&transpose(xm), w.channel(d));
        for i in 0..k {
            r[i] += contrib[i];
        }
    }
    r
}

/// Dense objective `Σ_t κ_t [ f1 + η f2 ] + γ‖h‖²` evaluated with explicit
/// shift-matrix products.
pub fn dense_objective(
    h: &FeatureTensor,
    beta: &[f64],
    samples: &[(&FeatureTensor, f64)],
    label: &GaussianLabel,
    masks: &PatchMaskSet,
    eta: f64,
    gamma: f64,
) -> f64 {
    let k = h.cell_count();
    let mut v = Plane::zeros(h.height(), h.width());
    for (m, &b) in beta.iter().enumerate() {
        for (out, &ind) in v.data_mut().iter_mut().zip(masks.mask(m).data()) {
            if ind != 0.0 {
                *out = b;
            }
        }
    }
    let vh = h.mul_plane(&v).unwrap();
    let mut total = 0.0;
    for (x, kappa) in samples {
        let xmats = channel_shift_matrices(x);
        let resp = dense_response(&xmats, &vh);
        let f1: f64 = label
            .plane()
            .data()
            .iter()
            .zip(&resp)
            .map(|(y, r)| (y - r) * (y - r))
            .sum();
        let mut f2 = 0.0;
        if eta != 0.0 {
            let frags: Vec<Vec<f64>> = (0..masks.count())
                .map(|m| dense_response(&xmats, &h.mul_plane(masks.mask(m)).unwrap()))
                .collect();
            for a in &frags {
                for b in &frags {
                    f2 += a
                        .iter()
                        .zip(b)
                        .map(|(p, q)| (p - q) * (p - q))
                        .sum::<f64>();
                }
            }
        }
        total += kappa * (f1 + eta * f2);
        let _ = k;
    }
    total + gamma * h.norm_sq()
}

/// Dense QP data for the patch weights: columns `c^m = Σ_d X_dᵀ (p^m ⊙ h)_d`,
/// `Q[m][n] = Σ_t κ_t c^m·c^n`, `b[m] = Σ_t κ_t c^m·y`.
pub fn dense_beta_qp(
    h: &FeatureTensor,
    samples: &[(&FeatureTensor, f64)],
    label: &GaussianLabel,
    masks: &PatchMaskSet,
) -> (Mat, Vec<f64>) {
    let mcount = masks.count();
    let mut q = zeros_mat(mcount, mcount);
    let mut b = vec![0.0; mcount];
    for (x, kappa) in samples {
        let xmats = channel_shift_matrices(x);
        let cols: Vec<Vec<f64>> = (0..mcount)
            .map(|m| dense_response(&xmats, &h.mul_plane(masks.mask(m)).unwrap()))
            .collect();
        for m in 0..mcount {
            for n in 0..mcount {
                q[m][n] += kappa * dot(&cols[m], &cols[n]);
            }
            b[m] += kappa * dot(&cols[m], label.plane().data());
        }
    }
    (q, b)
}

/// Max relative elementwise deviation between two vectors, scaled by the
/// oracle's infinity norm.
pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let scale = want
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-300);
    got.iter()
        .zip(want)
        .fold(0.0f64, |acc, (g, w)| acc.max((g - w).abs()))
        / scale
}
