//! Joint learning of the base filter and the patch reliability weights.
//!
//! The training objective couples a weighted sample set through a shared
//! filter: a data term driving every sample's masked response toward the
//! Gaussian label, a response-consistency term pulling the per-fragment
//! responses toward each other, and a ridge term. Minimization alternates
//! two convex subproblems:
//!
//! 1. `h` with `β` fixed — normal equations solved by matrix-free conjugate
//!    gradients ([`cg_solve`]) using the Fourier operator in
//!    [`operator::Prepared`];
//! 2. `β` with `h` fixed — a small box-constrained QP ([`solve_box_qp`]).
//!
//! Each half-step can only lower the objective, so [`joint_learn`] descends
//! monotonically (up to solver tolerance).

mod cg;
mod operator;
mod qp;

pub use cg::{cg_solve, CgSolution};
pub use operator::{build_rhs, normal_matvec, Prepared};
pub use qp::{build_beta_qp, fragment_responses, solve_box_qp};

use crate::error::{Error, Result};
use crate::labels::{assemble_reliability, GaussianLabel, PatchMaskSet};
use crate::memory::SampleMemory;
use crate::tensor::{circular_correlate, FeatureTensor};

/// Tunables of the joint learner.
#[derive(Debug, Clone)]
pub struct LearnConfig {
    /// Weight of the response-consistency term (`0` disables it).
    pub eta: f64,
    /// Ridge weight; must stay positive so the normal operator is definite.
    pub gamma: f64,
    /// Lower box bound for the patch weights.
    pub theta_min: f64,
    /// Upper box bound for the patch weights.
    pub theta_max: f64,
    /// Conjugate-gradient iteration budget per half-step.
    pub cg_iters: usize,
    /// Relative CG residual tolerance.
    pub cg_tol: f64,
    /// Number of (h, β) alternation rounds per learning event.
    pub alternations: usize,
    /// When false the β half-step is skipped and the weights stay at their
    /// initial values (used by the ablation variants).
    pub learn_beta: bool,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            gamma: 1e-2,
            theta_min: 0.5,
            theta_max: 1.5,
            cg_iters: 6,
            cg_tol: 1e-6,
            alternations: 2,
            learn_beta: true,
        }
    }
}

impl LearnConfig {
    pub fn bounds(&self) -> (f64, f64) {
        (self.theta_min, self.theta_max)
    }

    /// Rejects out-of-range parameters.
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_min < self.theta_max) {
            return Err(Error::InvalidParameter(format!(
                "box [{}, {}]",
                self.theta_min, self.theta_max
            )));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma {}", self.gamma)));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::InvalidParameter(format!("eta {}", self.eta)));
        }
        if !(self.cg_tol > 0.0) {
            return Err(Error::InvalidParameter(format!("cg_tol {}", self.cg_tol)));
        }
        Ok(())
    }
}

/// Weighted samples plus the shared regression label. Weights must be a
/// convex combination (`κ_t ≥ 0`, `Σκ_t = 1`) and all samples must share
/// one shape.
pub struct TrainingSet<'a> {
    samples: Vec<(&'a FeatureTensor, f64)>,
    label: &'a GaussianLabel,
}

impl<'a> TrainingSet<'a> {
    pub fn new(samples: Vec<(&'a FeatureTensor, f64)>, label: &'a GaussianLabel) -> Result<Self> {
        let Some(&(first, _)) = samples.first() else {
            return Err(Error::EmptyInput("training set has no samples".into()));
        };
        let mut total = 0.0;
        for &(x, kappa) in &samples {
            if !x.same_shape(first) {
                return Err(Error::ShapeMismatch(format!(
                    "sample {}x{}x{} vs {}x{}x{}",
                    x.channels(),
                    x.height(),
                    x.width(),
                    first.channels(),
                    first.height(),
                    first.width()
                )));
            }
            if !(kappa >= 0.0) {
                return Err(Error::InvalidParameter(format!("sample weight {kappa}")));
            }
            total += kappa;
        }
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "sample weights sum to {total}, expected 1"
            )));
        }
        if label.height() != first.height() || label.width() != first.width() {
            return Err(Error::ShapeMismatch(format!(
                "label {}x{} vs samples {}x{}",
                label.height(),
                label.width(),
                first.height(),
                first.width()
            )));
        }
        Ok(Self { samples, label })
    }

    /// Borrows every stored sample with its normalized weight.
    pub fn from_memory(memory: &'a SampleMemory, label: &'a GaussianLabel) -> Result<Self> {
        let samples = memory
            .entries()
            .iter()
            .map(|e| (&e.features, e.weight))
            .collect();
        Self::new(samples, label)
    }

    pub fn samples(&self) -> &[(&'a FeatureTensor, f64)] {
        &self.samples
    }

    pub fn label(&self) -> &GaussianLabel {
        self.label
    }

    /// Shape `(D, H, W)` shared by all samples.
    pub fn shape(&self) -> (usize, usize, usize) {
        let x = self.samples[0].0;
        (x.channels(), x.height(), x.width())
    }
}

/// Evaluates the full training objective through the spatial correlation
/// path: `Σ_t κ_t [ ‖y − X_tᵀVh‖² + η Σ_{m,n} ‖X_tᵀP^m h − X_tᵀP^n h‖² ]
/// + γ‖h‖²`.
pub fn objective_value(
    h: &FeatureTensor,
    beta: &[f64],
    ts: &TrainingSet<'_>,
    masks: &PatchMaskSet,
    cfg: &LearnConfig,
) -> Result<f64> {
    cfg.validate()?;
    let (d, hh, ww) = ts.shape();
    if h.channels() != d || h.height() != hh || h.width() != ww {
        return Err(Error::ShapeMismatch(format!(
            "filter {}x{}x{} vs samples {d}x{hh}x{ww}",
            h.channels(),
            h.height(),
            h.width()
        )));
    }
    let reliability = assemble_reliability(beta, masks, cfg.bounds())?;
    let vh = reliability.apply(h)?;
    let y = ts.label().plane();
    let mut f = 0.0;
    for &(x, kappa) in ts.samples() {
        let r = circular_correlate(x, &vh)?;
        let data: f64 = y
            .data()
            .iter()
            .zip(r.data())
            .map(|(yi, ri)| (yi - ri) * (yi - ri))
            .sum();
        let mut lrc = 0.0;
        if cfg.eta > 0.0 && masks.count() > 1 {
            let frags = fragment_responses(x, h, masks)?;
            for m in 0..frags.len() {
                for n in 0..frags.len() {
                    if m == n {
                        continue;
                    }
                    lrc += frags[m]
                        .data()
                        .iter()
                        .zip(frags[n].data())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>();
                }
            }
        }
        f += kappa * (data + cfg.eta * lrc);
    }
    Ok(f + cfg.gamma * h.norm_sq())
}

/// One objective evaluation per half-step of a [`joint_learn`] run.
#[derive(Debug, Clone)]
pub struct LearnTrace {
    /// Objective at the initial `(h, β)` followed by one value after every
    /// half-step (h-step and β-step per round).
    pub objective: Vec<f64>,
    /// CG residual history of each h half-step.
    pub cg_residuals: Vec<Vec<f64>>,
}

/// Alternating minimization over `(h, β)`; see the module docs.
pub fn joint_learn(
    ts: &TrainingSet<'_>,
    masks: &PatchMaskSet,
    h_init: &FeatureTensor,
    beta_init: &[f64],
    cfg: &LearnConfig,
) -> Result<(FeatureTensor, Vec<f64>)> {
    let (h, beta, _) = run_alternation(ts, masks, h_init, beta_init, cfg, false)?;
    Ok((h, beta))
}

/// [`joint_learn`] plus a per-half-step objective trace (used by the
/// monotonicity checks; the extra evaluations cost correlations, so the
/// tracker calls the untraced variant).
pub fn joint_learn_traced(
    ts: &TrainingSet<'_>,
    masks: &PatchMaskSet,
    h_init: &FeatureTensor,
    beta_init: &[f64],
    cfg: &LearnConfig,
) -> Result<(FeatureTensor, Vec<f64>, LearnTrace)> {
    run_alternation(ts, masks, h_init, beta_init, cfg, true)
}

fn run_alternation(
    ts: &TrainingSet<'_>,
    masks: &PatchMaskSet,
    h_init: &FeatureTensor,
    beta_init: &[f64],
    cfg: &LearnConfig,
    traced: bool,
) -> Result<(FeatureTensor, Vec<f64>, LearnTrace)> {
    cfg.validate()?;
    let (d, hh, ww) = ts.shape();
    if h_init.channels() != d || h_init.height() != hh || h_init.width() != ww {
        return Err(Error::ShapeMismatch(format!(
            "initial filter {}x{}x{} vs samples {d}x{hh}x{ww}",
            h_init.channels(),
            h_init.height(),
            h_init.width()
        )));
    }
    if !h_init.data().iter().all(|v| v.is_finite()) {
        return Err(Error::NotFinite("initial filter".into()));
    }
    let prepared = Prepared::new(ts);
    let mut h = h_init.clone();
    let mut beta = beta_init.to_vec();
    let mut trace = LearnTrace {
        objective: Vec::new(),
        cg_residuals: Vec::new(),
    };
    if traced {
        trace.objective.push(objective_value(&h, &beta, ts, masks, cfg)?);
    }
    for _ in 0..cfg.alternations {
        let reliability = assemble_reliability(&beta, masks, cfg.bounds())?;
        let rhs = prepared.rhs(&reliability)?;
        let sol = cg_solve(
            |u| {
                let ut = FeatureTensor::from_data(d, hh, ww, u.to_vec())?;
                Ok(prepared
                    .matvec(&ut, &reliability, masks, cfg)?
                    .into_data())
            },
            rhs.data(),
            h.data(),
            cfg.cg_iters,
            cfg.cg_tol,
        )?;
        h = FeatureTensor::from_data(d, hh, ww, sol.x)?;
        if traced {
            trace.objective.push(objective_value(&h, &beta, ts, masks, cfg)?);
            trace.cg_residuals.push(sol.residual_norms);
        }
        if cfg.learn_beta && masks.count() > 0 {
            let (q, b) = prepared.beta_qp(&h, masks)?;
            beta = solve_box_qp(&q, &b, &beta, cfg.theta_min, cfg.theta_max)?;
        }
        if traced {
            trace.objective.push(objective_value(&h, &beta, ts, masks, cfg)?);
        }
    }
    Ok((h, beta, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{make_gaussian_label, make_patch_masks};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_tensor(rng: &mut StdRng, d: usize, h: usize, w: usize) -> FeatureTensor {
        FeatureTensor::from_fn(d, h, w, |_, _, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn zero_filter_objective_is_label_mass() {
        let mut rng = StdRng::seed_from_u64(21);
        let x1 = random_tensor(&mut rng, 2, 6, 6);
        let x2 = random_tensor(&mut rng, 2, 6, 6);
        let y = make_gaussian_label(6, 6, 4, 4);
        let masks = make_patch_masks(6, 6, 4, 4, 2).unwrap();
        let ts = TrainingSet::new(vec![(&x1, 0.25), (&x2, 0.75)], &y).unwrap();
        let h0 = FeatureTensor::zeros(2, 6, 6);
        let f = objective_value(&h0, &[1.0; 4], &ts, &masks, &LearnConfig::default()).unwrap();
        let label_mass: f64 = y.plane().data().iter().map(|v| v * v).sum();
        assert!((f - label_mass).abs() < 1e-12);
    }

    #[test]
    fn single_fragment_has_no_consistency_term() {
        let mut rng = StdRng::seed_from_u64(22);
        let x = random_tensor(&mut rng, 1, 5, 5);
        let y = make_gaussian_label(5, 5, 3, 3);
        let masks = make_patch_masks(5, 5, 3, 3, 1).unwrap();
        let ts = TrainingSet::new(vec![(&x, 1.0)], &y).unwrap();
        let h = random_tensor(&mut rng, 1, 5, 5);
        let base = LearnConfig {
            eta: 0.0,
            ..LearnConfig::default()
        };
        let with_eta = LearnConfig {
            eta: 7.0,
            ..LearnConfig::default()
        };
        let f0 = objective_value(&h, &[1.0], &ts, &masks, &base).unwrap();
        let f1 = objective_value(&h, &[1.0], &ts, &masks, &with_eta).unwrap();
        assert_eq!(f0, f1);
    }

    #[test]
    fn weights_must_form_a_convex_combination() {
        let mut rng = StdRng::seed_from_u64(23);
        let x = random_tensor(&mut rng, 1, 4, 4);
        let y = make_gaussian_label(4, 4, 3, 3);
        match TrainingSet::new(vec![(&x, 0.4)], &y) {
            Err(Error::InvalidParameter(_)) => {}
            Err(other) => panic!("expected InvalidParameter, got {other:?}"),
            Ok(_) => panic!("expected InvalidParameter, got a training set"),
        }
        match TrainingSet::new(vec![], &y) {
            Err(Error::EmptyInput(_)) => {}
            Err(other) => panic!("expected EmptyInput, got {other:?}"),
            Ok(_) => panic!("expected EmptyInput, got a training set"),
        }
    }

    #[test]
    fn degenerate_features_shrink_the_filter() {
        // Zero-signal features leave only the ridge term, so any alternation
        // drives h toward 0 while β stays put inside the box.
        let x = FeatureTensor::zeros(1, 6, 6);
        let y = make_gaussian_label(6, 6, 3, 3);
        let masks = make_patch_masks(6, 6, 3, 3, 3).unwrap();
        let ts = TrainingSet::new(vec![(&x, 1.0)], &y).unwrap();
        let h_init = FeatureTensor::from_fn(1, 6, 6, |_, i, j| ((i * 7 + j) % 5) as f64 - 2.0);
        let cfg = LearnConfig {
            cg_iters: 40,
            alternations: 1,
            ..LearnConfig::default()
        };
        let (h, beta) = joint_learn(&ts, &masks, &h_init, &[1.0; 9], &cfg).unwrap();
        assert!(h.data().iter().all(|v| v.abs() < 1e-8));
        for b in beta {
            assert!((0.5..=1.5).contains(&b));
        }
    }

    #[test]
    fn informative_patch_earns_the_larger_weight() {
        // A filter is first converged on a clean appearance. The memory then
        // gains two copies whose top-left patch is repainted with unrelated
        // noise — content no single filter can satisfy in both copies at
        // once. One starved re-solve (a single CG step, so the filter cannot
        // absorb the contradiction) leaves the weight step staring at the
        // misfit: the repainted patch must come out less trusted than the
        // stable ones.
        let mut rng = StdRng::seed_from_u64(25);
        let (hh, ww, th, tw) = (10, 10, 8, 8);
        let masks = make_patch_masks(hh, ww, th, tw, 2).unwrap();
        let y = make_gaussian_label(hh, ww, th, tw);
        let clean = random_tensor(&mut rng, 2, hh, ww);
        let repaint = |rng: &mut StdRng| {
            let mut t = clean.clone();
            for i in 0..hh {
                for j in 0..ww {
                    if masks.mask(0).at(i, j) != 0.0 {
                        for d in 0..2 {
                            t.set(d, i, j, rng.gen_range(-1.0..1.0));
                        }
                    }
                }
            }
            t
        };
        let noisy_a = repaint(&mut rng);
        let noisy_b = repaint(&mut rng);

        // A small consistency weight: on a four-patch toy instance the full
        // pairwise response-consistency penalty otherwise dominates the data
        // term, dragging the fit down until the weight step compensates by
        // pinning every patch at the upper bound.
        let mut cfg = LearnConfig {
            cg_iters: 80,
            alternations: 2,
            gamma: 1e-4,
            eta: 0.02,
            ..LearnConfig::default()
        };
        let ts_clean = TrainingSet::new(vec![(&clean, 1.0)], &y).unwrap();
        let h0 = FeatureTensor::zeros(2, hh, ww);
        let (h1, beta1) = joint_learn(&ts_clean, &masks, &h0, &[1.0; 4], &cfg).unwrap();

        let ts_mixed = TrainingSet::new(
            vec![(&clean, 0.6), (&noisy_a, 0.2), (&noisy_b, 0.2)],
            &y,
        )
        .unwrap();
        cfg.cg_iters = 1;
        cfg.alternations = 1;
        let (_, beta) = joint_learn(&ts_mixed, &masks, &h1, &beta1, &cfg).unwrap();
        let others = (beta[1] + beta[2] + beta[3]) / 3.0;
        assert!(
            beta[0] < others,
            "repainted patch should be less trusted: {beta:?}"
        );
    }

    #[test]
    fn objective_trace_is_monotone() {
        let mut rng = StdRng::seed_from_u64(26);
        for _ in 0..3 {
            let x1 = random_tensor(&mut rng, 2, 7, 7);
            let x2 = random_tensor(&mut rng, 2, 7, 7);
            let y = make_gaussian_label(7, 7, 5, 5);
            let masks = make_patch_masks(7, 7, 5, 5, 2).unwrap();
            let ts = TrainingSet::new(vec![(&x1, 0.5), (&x2, 0.5)], &y).unwrap();
            let h_init = random_tensor(&mut rng, 2, 7, 7);
            let beta_init: Vec<f64> = (0..4).map(|_| rng.gen_range(0.5..1.5)).collect();
            let cfg = LearnConfig {
                alternations: 3,
                cg_iters: 10,
                ..LearnConfig::default()
            };
            let (_, _, trace) =
                joint_learn_traced(&ts, &masks, &h_init, &beta_init, &cfg).unwrap();
            for pair in trace.objective.windows(2) {
                assert!(
                    pair[1] <= pair[0] * (1.0 + 1e-6) + 1e-12,
                    "objective rose: {} -> {}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }
}
