//! Multi-channel 2-D tensors and their Fourier transforms.
//!
//! A [`FeatureTensor`] is a dense `D x H x W` stack of real-valued channel
//! planes sharing one spatial grid; a [`SpectrumTensor`] is its complex
//! counterpart. All spectral work uses the unitary-free convention: the
//! forward transform is the plain DFT and the inverse divides by `K = H*W`,
//! so `ifft2(fft2(x)) == x` and Parseval reads `sum |x|^2 = (1/K) sum |X|^2`.
//!
//! Cyclic shifts are taken as "advance": the shift of `x` by `k` is
//! `x_k[j] = x[(j + k) mod K]` per axis. Under that convention
//! [`circular_correlate`] places the peak for a target displaced by
//! `(di, dj)` at index `(di, dj)` of the response map.

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

/// Relative imaginary residue tolerated when an inverse transform is
/// expected to produce a real signal.
pub const IMAG_RESIDUE_TOL: f64 = 1e-8;

static PLANNER: Lazy<Mutex<FftPlanner<f64>>> = Lazy::new(|| Mutex::new(FftPlanner::new()));

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = PLANNER.lock().expect("fft planner lock poisoned");
    if inverse {
        planner.plan_fft_inverse(len)
    } else {
        planner.plan_fft_forward(len)
    }
}

/// A single real-valued `H x W` plane (label map, reliability map,
/// response map, patch mask).
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Plane {
    /// All-zero plane.
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    /// Builds a plane by evaluating `f(row, col)` at every cell.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    /// Wraps an existing row-major buffer; `data.len()` must equal `H*W`.
    pub fn from_data(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "plane buffer has {} values, expected {}x{} = {}",
                data.len(),
                height,
                width,
                height * width
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of cells `K = H*W`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Index and value of the maximum entry (first occurrence in row-major
    /// order on ties).
    pub fn argmax(&self) -> (usize, usize, f64) {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for i in 0..self.height {
            for j in 0..self.width {
                let v = self.at(i, j);
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        best
    }

    /// Sum of all entries.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Dense real tensor: `channels` planes of `height x width` cells,
/// channel-major and row-major within a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureTensor {
    /// All-zero tensor.
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    /// Wraps an existing buffer; length must equal `D*H*W`.
    pub fn from_data(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch(format!(
                "tensor buffer has {} values, expected {}x{}x{} = {}",
                data.len(),
                channels,
                height,
                width,
                channels * height * width
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Builds a tensor by evaluating `f(channel, row, col)` everywhere.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for d in 0..channels {
            for i in 0..height {
                for j in 0..width {
                    data.push(f(d, i, j));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Cells per channel, `K = H*W`.
    pub fn cell_count(&self) -> usize {
        self.height * self.width
    }

    /// Total scalar count `D*K`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &FeatureTensor) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub fn channel(&self, d: usize) -> &[f64] {
        let k = self.cell_count();
        &self.data[d * k..(d + 1) * k]
    }

    pub fn channel_mut(&mut self, d: usize) -> &mut [f64] {
        let k = self.cell_count();
        &mut self.data[d * k..(d + 1) * k]
    }

    pub fn at(&self, d: usize, row: usize, col: usize) -> f64 {
        self.data[(d * self.height + row) * self.width + col]
    }

    pub fn set(&mut self, d: usize, row: usize, col: usize, value: f64) {
        self.data[(d * self.height + row) * self.width + col] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Multiplies every channel elementwise by `plane`.
    pub fn mul_plane(&self, plane: &Plane) -> Result<FeatureTensor> {
        if plane.height() != self.height || plane.width() != self.width {
            return Err(Error::ShapeMismatch(format!(
                "plane {}x{} does not match tensor {}x{}",
                plane.height(),
                plane.width(),
                self.height,
                self.width
            )));
        }
        let k = self.cell_count();
        let mut out = self.clone();
        for d in 0..self.channels {
            let ch = &mut out.data[d * k..(d + 1) * k];
            for (v, p) in ch.iter_mut().zip(plane.data()) {
                *v *= p;
            }
        }
        Ok(out)
    }

    /// Euclidean inner product over all `D*K` scalars.
    pub fn dot(&self, other: &FeatureTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Squared Euclidean norm over all scalars.
    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }
}

/// Complex spectrum of a [`FeatureTensor`]: one unnormalized 2-D DFT per
/// channel, same layout.
#[derive(Debug, Clone)]
pub struct SpectrumTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl SpectrumTensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![Complex64::new(0.0, 0.0); channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cell_count(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, d: usize) -> &[Complex64] {
        let k = self.cell_count();
        &self.data[d * k..(d + 1) * k]
    }

    pub fn channel_mut(&mut self, d: usize) -> &mut [Complex64] {
        let k = self.cell_count();
        &mut self.data[d * k..(d + 1) * k]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }
}

/// In-place 2-D DFT of one `H x W` complex plane: rows first, then columns.
fn dft2_inplace(buf: &mut [Complex64], height: usize, width: usize, inverse: bool) {
    debug_assert_eq!(buf.len(), height * width);
    if width > 1 {
        let row_fft = plan(width, inverse);
        for row in buf.chunks_exact_mut(width) {
            row_fft.process(row);
        }
    }
    if height > 1 {
        let col_fft = plan(height, inverse);
        let mut scratch = vec![Complex64::new(0.0, 0.0); height];
        for j in 0..width {
            for i in 0..height {
                scratch[i] = buf[i * width + j];
            }
            col_fft.process(&mut scratch);
            for i in 0..height {
                buf[i * width + j] = scratch[i];
            }
        }
    }
}

/// Forward 2-D DFT of one real plane (unnormalized).
pub fn fft2_plane(plane: &Plane) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = plane
        .data()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    dft2_inplace(&mut buf, plane.height(), plane.width(), false);
    buf
}

/// Inverse 2-D DFT of one plane spectrum, normalized by `1/K`. Fails with
/// [`Error::ImaginaryResidue`] when the result is not real to tolerance.
pub fn ifft2_plane(spectrum: &[Complex64], height: usize, width: usize) -> Result<Plane> {
    if spectrum.len() != height * width {
        return Err(Error::ShapeMismatch(format!(
            "spectrum has {} bins, expected {}x{} = {}",
            spectrum.len(),
            height,
            width,
            height * width
        )));
    }
    let mut buf = spectrum.to_vec();
    dft2_inplace(&mut buf, height, width, true);
    let k = (height * width) as f64;
    let mut max_abs = 0.0f64;
    let mut max_im = 0.0f64;
    for z in &mut buf {
        *z /= k;
        max_abs = max_abs.max(z.norm_sqr().sqrt());
        max_im = max_im.max(z.im.abs());
    }
    let residue = if max_abs > 0.0 { max_im / max_abs } else { 0.0 };
    if residue > IMAG_RESIDUE_TOL {
        return Err(Error::ImaginaryResidue {
            residue,
            tolerance: IMAG_RESIDUE_TOL,
        });
    }
    let data: Vec<f64> = buf.iter().map(|z| z.re).collect();
    Plane::from_data(height, width, data)
}

/// Forward 2-D DFT of every channel (unnormalized).
pub fn fft2(tensor: &FeatureTensor) -> SpectrumTensor {
    let (d, h, w) = (tensor.channels(), tensor.height(), tensor.width());
    let k = h * w;
    let mut out = SpectrumTensor::zeros(d, h, w);
    out.data_mut()
        .par_chunks_mut(k.max(1))
        .zip(tensor.data().par_chunks(k.max(1)))
        .for_each(|(spec, real)| {
            for (z, &v) in spec.iter_mut().zip(real) {
                *z = Complex64::new(v, 0.0);
            }
            dft2_inplace(spec, h, w, false);
        });
    out
}

/// Inverse 2-D DFT of every channel, normalized by `1/K`. Fails with
/// [`Error::ImaginaryResidue`] when any channel is not real to tolerance.
pub fn ifft2(spectrum: &SpectrumTensor) -> Result<FeatureTensor> {
    let (d, h, w) = (spectrum.channels(), spectrum.height(), spectrum.width());
    let k = h * w;
    let mut out = FeatureTensor::zeros(d, h, w);
    let results: Vec<Result<()>> = out
        .data_mut()
        .par_chunks_mut(k.max(1))
        .zip(spectrum.data().par_chunks(k.max(1)))
        .map(|(real, spec)| {
            let plane = ifft2_plane(spec, h, w)?;
            real.copy_from_slice(plane.data());
            Ok(())
        })
        .collect();
    for r in results {
        r?;
    }
    Ok(out)
}

/// Circular cross-correlation summed over channels:
/// `r[k] = sum_d sum_j x_d[(j + k) mod K] * w_d[j]`, evaluated spectrally as
/// `r = F^-1( sum_d X_d .* conj(W_d) )`.
///
/// The peak for a copy of `w` displaced by `(di, dj)` inside `x` lands at
/// index `(di, dj)`.
pub fn circular_correlate(x: &FeatureTensor, w: &FeatureTensor) -> Result<Plane> {
    if !x.same_shape(w) {
        return Err(Error::ShapeMismatch(format!(
            "correlation operands {}x{}x{} vs {}x{}x{}",
            x.channels(),
            x.height(),
            x.width(),
            w.channels(),
            w.height(),
            w.width()
        )));
    }
    let xs = fft2(x);
    let ws = fft2(w);
    let k = x.cell_count();
    let mut acc = vec![Complex64::new(0.0, 0.0); k];
    for d in 0..x.channels() {
        for ((a, &xv), &wv) in acc.iter_mut().zip(xs.channel(d)).zip(ws.channel(d)) {
            *a += xv * wv.conj();
        }
    }
    ifft2_plane(&acc, x.height(), x.width())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_tensor(rng: &mut StdRng, d: usize, h: usize, w: usize) -> FeatureTensor {
        FeatureTensor::from_fn(d, h, w, |_, _, _| rng.gen_range(-1.0..1.0))
    }

    /// Direct O(K^2) circular correlation used as an oracle.
    fn brute_correlate(x: &FeatureTensor, w: &FeatureTensor) -> Plane {
        let (h, wd) = (x.height(), x.width());
        Plane::from_fn(h, wd, |ki, kj| {
            let mut acc = 0.0;
            for d in 0..x.channels() {
                for i in 0..h {
                    for j in 0..wd {
                        acc += x.at(d, (i + ki) % h, (j + kj) % wd) * w.at(d, i, j);
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn impulse_spectrum_is_flat() {
        let mut x = FeatureTensor::zeros(1, 4, 4);
        x.set(0, 0, 0, 1.0);
        let s = fft2(&x);
        for z in s.channel(0) {
            assert!((z.re - 1.0).abs() < 1e-12 && z.im.abs() < 1e-12);
        }
    }

    #[test]
    fn constant_signal_concentrates_at_dc() {
        let c = 0.37;
        let x = FeatureTensor::from_fn(1, 4, 4, |_, _, _| c);
        let s = fft2(&x);
        let spec = s.channel(0);
        assert!((spec[0].re - 16.0 * c).abs() < 1e-12);
        for z in &spec[1..] {
            assert!(z.norm_sqr().sqrt() < 1e-12);
        }
    }

    #[test]
    fn flat_spectrum_inverts_to_impulse() {
        let mut s = SpectrumTensor::zeros(1, 3, 3);
        for z in s.channel_mut(0) {
            *z = Complex64::new(1.0, 0.0);
        }
        let x = ifft2(&s).unwrap();
        assert!((x.at(0, 0, 0) - 1.0).abs() < 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                if (i, j) != (0, 0) {
                    assert!(x.at(0, i, j).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn roundtrip_recovers_signal() {
        let mut rng = StdRng::seed_from_u64(7);
        let x = random_tensor(&mut rng, 2, 5, 7);
        let back = ifft2(&fft2(&x)).unwrap();
        for (a, b) in x.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn asymmetric_spectrum_is_rejected() {
        let mut s = SpectrumTensor::zeros(1, 3, 3);
        s.channel_mut(0)[1] = Complex64::new(1.0, 0.0);
        match ifft2(&s) {
            Err(Error::ImaginaryResidue { .. }) => {}
            other => panic!("expected ImaginaryResidue, got {other:?}"),
        }
    }

    #[test]
    fn identity_filter_reproduces_input() {
        let mut rng = StdRng::seed_from_u64(3);
        let x = random_tensor(&mut rng, 1, 4, 5);
        let mut w = FeatureTensor::zeros(1, 4, 5);
        w.set(0, 0, 0, 1.0);
        let r = circular_correlate(&x, &w).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                assert!((r.at(i, j) - x.at(0, i, j)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn displaced_template_peaks_at_displacement() {
        // Template at the origin, copy displaced by (2, 1): the peak index
        // must read out the displacement directly.
        let mut x = FeatureTensor::zeros(1, 4, 4);
        x.set(0, 2, 1, 1.0);
        let mut w = FeatureTensor::zeros(1, 4, 4);
        w.set(0, 0, 0, 1.0);
        let r = circular_correlate(&x, &w).unwrap();
        let (pi, pj, pv) = r.argmax();
        assert_eq!((pi, pj), (2, 1));
        assert!((pv - 1.0).abs() < 1e-10);
    }

    #[test]
    fn matches_brute_force_correlation() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..5 {
            let x = random_tensor(&mut rng, 2, 3, 3);
            let w = random_tensor(&mut rng, 2, 3, 3);
            let fast = circular_correlate(&x, &w).unwrap();
            let slow = brute_correlate(&x, &w);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn correlation_is_linear_in_first_argument() {
        let mut rng = StdRng::seed_from_u64(13);
        let x1 = random_tensor(&mut rng, 2, 4, 6);
        let x2 = random_tensor(&mut rng, 2, 4, 6);
        let w = random_tensor(&mut rng, 2, 4, 6);
        let (a, b) = (0.7, -1.3);
        let combo = FeatureTensor::from_data(
            2,
            4,
            6,
            x1.data()
                .iter()
                .zip(x2.data())
                .map(|(u, v)| a * u + b * v)
                .collect(),
        )
        .unwrap();
        let lhs = circular_correlate(&combo, &w).unwrap();
        let r1 = circular_correlate(&x1, &w).unwrap();
        let r2 = circular_correlate(&x2, &w).unwrap();
        for ((l, u), v) in lhs.data().iter().zip(r1.data()).zip(r2.data()) {
            assert!((l - (a * u + b * v)).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(30))]

        #[test]
        fn prop_roundtrip(seed in 0u64..1000, d in 1usize..3, h in 1usize..8, w in 1usize..8) {
            let mut rng = StdRng::seed_from_u64(seed);
            let x = random_tensor(&mut rng, d, h, w);
            let back = ifft2(&fft2(&x)).unwrap();
            for (a, b) in x.data().iter().zip(back.data()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn prop_parseval(seed in 0u64..1000, h in 1usize..8, w in 1usize..8) {
            let mut rng = StdRng::seed_from_u64(seed);
            let x = random_tensor(&mut rng, 1, h, w);
            let s = fft2(&x);
            let k = (h * w) as f64;
            let spatial: f64 = x.data().iter().map(|v| v * v).sum();
            let spectral: f64 = s.data().iter().map(|z| z.norm_sqr()).sum::<f64>() / k;
            prop_assert!((spatial - spectral).abs() <= 1e-9 * (1.0 + spatial.abs()));
        }

        #[test]
        fn prop_correlate_matches_brute_force(seed in 0u64..1000, d in 1usize..3, h in 1usize..7, w in 1usize..7) {
            let mut rng = StdRng::seed_from_u64(seed);
            let x = random_tensor(&mut rng, d, h, w);
            let f = random_tensor(&mut rng, d, h, w);
            let fast = circular_correlate(&x, &f).unwrap();
            let slow = brute_correlate(&x, &f);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
