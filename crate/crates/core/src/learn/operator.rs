//! Matrix-free normal-equation operator in the Fourier domain.
//!
//! The normal matrix decomposes into Gram blocks `g(Λ, X) = Λᵀ X Xᵀ Λ`,
//! where `Λ` is a diagonal map (the reliability map `v`, a patch mask `p^m`,
//! or the whole-target mask) and `X` stacks one circulant shift matrix per
//! channel. Weighted over the sample set:
//!
//! `A = Σ_t κ_t [ g(V, X_t) + 2ηM Σ_m g(P^m, X_t) − 2η g(P_Σ, X_t) ] + γI`.
//!
//! Because every block acts through circular correlations, `A·u` never
//! materializes a `K×K` matrix: masked copies of `u` are transformed once
//! (they are sample-independent), each sample contributes elementwise
//! products in the spectral domain, and one inverse transform per output
//! channel and mask brings the accumulated result back. The cost per sample
//! is `O(D·M·K)` elementwise work on top of `O(D·M·K log K)` transforms
//! shared across all samples.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::labels::{PatchMaskSet, ReliabilityModel};
use crate::tensor::{fft2, fft2_plane, ifft2_plane, FeatureTensor, Plane, SpectrumTensor};

use super::qp::beta_qp_from_spectra;
use super::{LearnConfig, TrainingSet};

/// Sample spectra and label spectrum, computed once per training set and
/// reused across CG iterations, alternation rounds and the β QP build.
pub struct Prepared {
    spectra: Vec<SpectrumTensor>,
    weights: Vec<f64>,
    label_spec: Vec<Complex64>,
    channels: usize,
    height: usize,
    width: usize,
}

impl Prepared {
    pub fn new(ts: &TrainingSet<'_>) -> Self {
        let (channels, height, width) = ts.shape();
        let spectra: Vec<SpectrumTensor> = ts
            .samples()
            .par_iter()
            .map(|(x, _)| fft2(x))
            .collect();
        let weights = ts.samples().iter().map(|&(_, k)| k).collect();
        let label_spec = fft2_plane(ts.label().plane());
        Self {
            spectra,
            weights,
            label_spec,
            channels,
            height,
            width,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    fn check_shapes(&self, reliability: &ReliabilityModel) -> Result<()> {
        let v = reliability.weight_map();
        if v.height() != self.height || v.width() != self.width {
            return Err(Error::ShapeMismatch(format!(
                "reliability map {}x{} vs samples {}x{}",
                v.height(),
                v.width(),
                self.height,
                self.width
            )));
        }
        Ok(())
    }

    /// Applies the normal operator: returns `A·u` for the reliability map
    /// and patch masks currently in force.
    pub fn matvec(
        &self,
        u: &FeatureTensor,
        reliability: &ReliabilityModel,
        masks: &PatchMaskSet,
        cfg: &LearnConfig,
    ) -> Result<FeatureTensor> {
        self.check_shapes(reliability)?;
        if u.channels() != self.channels || u.height() != self.height || u.width() != self.width {
            return Err(Error::ShapeMismatch(format!(
                "operand {}x{}x{} vs samples {}x{}x{}",
                u.channels(),
                u.height(),
                u.width(),
                self.channels,
                self.height,
                self.width
            )));
        }
        if masks.height() != self.height || masks.width() != self.width {
            return Err(Error::ShapeMismatch(format!(
                "masks {}x{} vs samples {}x{}",
                masks.height(),
                masks.width(),
                self.height,
                self.width
            )));
        }
        let mcount = masks.count();
        // A single fragment cancels algebraically:
        // 2η·1·g(P¹) − 2η·g(P_Σ = P¹) = 0.
        let use_lrc = cfg.eta > 0.0 && mcount > 1;
        let (dch, hh, ww) = (self.channels, self.height, self.width);
        let k = hh * ww;

        // Masked copies of u, transformed once; lane 0 is the reliability
        // map, lanes 1..=M the patch masks.
        let mut lambdas: Vec<&Plane> = vec![reliability.weight_map()];
        if use_lrc {
            lambdas.extend(masks.masks().iter());
        }
        let ghat: Vec<SpectrumTensor> = lambdas
            .par_iter()
            .map(|p| Ok(fft2(&u.mul_plane(p)?)))
            .collect::<Result<_>>()?;
        let lanes = ghat.len();

        // Per-sample response spectra s[t][l] = Σ_d x̂ᵗ_d ⊙ conj(ĝ_{l,d}) —
        // the Fourier transform of the sample's correlation response to the
        // lane-l masked filter. Channel sums run in fixed order.
        let s: Vec<Vec<Vec<Complex64>>> = self
            .spectra
            .par_iter()
            .map(|xs| {
                (0..lanes)
                    .map(|l| {
                        let mut acc = vec![Complex64::new(0.0, 0.0); k];
                        for d in 0..dch {
                            let x = xs.channel(d);
                            let g = ghat[l].channel(d);
                            for i in 0..k {
                                acc[i] += x[i] * g[i].conj();
                            }
                        }
                        acc
                    })
                    .collect()
            })
            .collect();

        // Output channels are independent; samples and lanes accumulate in
        // fixed order inside each channel so results do not depend on the
        // thread count.
        let eta = cfg.eta;
        let two_eta_m = 2.0 * eta * mcount as f64;
        let two_eta = 2.0 * eta;
        let mut out = FeatureTensor::zeros(dch, hh, ww);
        let results: Vec<Result<()>> = out
            .data_mut()
            .par_chunks_mut(k)
            .enumerate()
            .map(|(e, oe)| {
                let mut cv = vec![Complex64::new(0.0, 0.0); k];
                let mut cm = if use_lrc {
                    vec![vec![Complex64::new(0.0, 0.0); k]; mcount]
                } else {
                    Vec::new()
                };
                for (t, &kappa) in self.weights.iter().enumerate() {
                    let xe = self.spectra[t].channel(e);
                    let sv = &s[t][0];
                    for i in 0..k {
                        cv[i] += kappa * xe[i] * sv[i].conj();
                    }
                    if use_lrc {
                        for m in 0..mcount {
                            let sm = &s[t][m + 1];
                            let dst = &mut cm[m];
                            for i in 0..k {
                                dst[i] += kappa * xe[i] * sm[i].conj();
                            }
                        }
                    }
                }
                let zv = ifft2_plane(&cv, hh, ww)?;
                let v = reliability.weight_map().data();
                let ue = u.channel(e);
                for i in 0..k {
                    oe[i] = v[i] * zv.data()[i] + cfg.gamma * ue[i];
                }
                if use_lrc {
                    let mut csum = vec![Complex64::new(0.0, 0.0); k];
                    for m in 0..mcount {
                        for i in 0..k {
                            csum[i] += cm[m][i];
                        }
                    }
                    let mut lane = vec![Complex64::new(0.0, 0.0); k];
                    for m in 0..mcount {
                        for i in 0..k {
                            lane[i] = two_eta_m * cm[m][i] - two_eta * csum[i];
                        }
                        let zm = ifft2_plane(&lane, hh, ww)?;
                        let p = masks.mask(m).data();
                        for i in 0..k {
                            oe[i] += p[i] * zm.data()[i];
                        }
                    }
                }
                Ok(())
            })
            .collect();
        for r in results {
            r?;
        }
        Ok(out)
    }

    /// Right-hand side of the normal equations:
    /// `b_e = v ⊙ F⁻¹( Σ_t κ_t x̂ᵗ_e ⊙ conj(ŷ) )`.
    pub fn rhs(&self, reliability: &ReliabilityModel) -> Result<FeatureTensor> {
        self.check_shapes(reliability)?;
        let (dch, hh, ww) = (self.channels, self.height, self.width);
        let k = hh * ww;
        let mut out = FeatureTensor::zeros(dch, hh, ww);
        let results: Vec<Result<()>> = out
            .data_mut()
            .par_chunks_mut(k)
            .enumerate()
            .map(|(e, oe)| {
                let mut acc = vec![Complex64::new(0.0, 0.0); k];
                for (t, &kappa) in self.weights.iter().enumerate() {
                    let xe = self.spectra[t].channel(e);
                    for i in 0..k {
                        acc[i] += kappa * xe[i] * self.label_spec[i].conj();
                    }
                }
                let z = ifft2_plane(&acc, hh, ww)?;
                let v = reliability.weight_map().data();
                for i in 0..k {
                    oe[i] = v[i] * z.data()[i];
                }
                Ok(())
            })
            .collect();
        for r in results {
            r?;
        }
        Ok(out)
    }

    /// QP data `(Q, b)` for the β step with the base filter fixed.
    pub fn beta_qp(
        &self,
        h: &FeatureTensor,
        masks: &PatchMaskSet,
    ) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        if h.channels() != self.channels || h.height() != self.height || h.width() != self.width {
            return Err(Error::ShapeMismatch(format!(
                "filter {}x{}x{} vs samples {}x{}x{}",
                h.channels(),
                h.height(),
                h.width(),
                self.channels,
                self.height,
                self.width
            )));
        }
        beta_qp_from_spectra(&self.spectra, &self.weights, &self.label_spec, h, masks)
    }
}

/// Applies the weighted normal operator to `u` (building sample spectra on
/// the fly; use [`Prepared`] to amortize them across calls).
pub fn normal_matvec(
    u: &FeatureTensor,
    ts: &TrainingSet<'_>,
    reliability: &ReliabilityModel,
    masks: &PatchMaskSet,
    cfg: &LearnConfig,
) -> Result<FeatureTensor> {
    Prepared::new(ts).matvec(u, reliability, masks, cfg)
}

/// Builds the normal-equation right-hand side `Σ_t κ_t V X_t y`.
pub fn build_rhs(ts: &TrainingSet<'_>, reliability: &ReliabilityModel) -> Result<FeatureTensor> {
    Prepared::new(ts).rhs(reliability)
}
