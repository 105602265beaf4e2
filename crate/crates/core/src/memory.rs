//! Weighted sample memory for multi-frame training.
//!
//! Each stored sample carries a temporal weight `κ_t`; the weights always
//! sum to 1. Inserting a sample with learning rate `ω` gives it weight `ω`
//! and decays every existing weight by `(1 − ω)`. When the store would
//! exceed its capacity, the two samples with minimum pairwise L2 feature
//! distance are fused into their weight-weighted average, so the total
//! weighted feature mass `Σ κ_t f_t` is conserved.

use crate::error::{Error, Result};
use crate::tensor::FeatureTensor;

/// One stored training sample and its temporal weight.
#[derive(Debug, Clone)]
pub struct MemoryEntry {
    pub features: FeatureTensor,
    pub weight: f64,
}

/// Bounded, weighted sample store.
#[derive(Debug, Clone)]
pub struct SampleMemory {
    entries: Vec<MemoryEntry>,
    capacity: usize,
}

impl SampleMemory {
    /// Empty memory holding at most `capacity` samples.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "capacity must be ≥ 1");
        Self {
            entries: Vec::new(),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    /// Sum of all weights (1 after any mutation, up to rounding).
    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|e| e.weight).sum()
    }

    /// Weighted feature mass `Σ κ_t f_t` flattened over all scalars.
    pub fn weighted_mass(&self) -> Vec<f64> {
        let Some(first) = self.entries.first() else {
            return Vec::new();
        };
        let mut acc = vec![0.0; first.features.len()];
        for e in &self.entries {
            for (a, &f) in acc.iter_mut().zip(e.features.data()) {
                *a += e.weight * f;
            }
        }
        acc
    }

    /// Inserts a sample with learning rate `omega`: the new entry gets
    /// weight `ω`, existing weights are scaled by `(1 − ω)`, the closest
    /// pair is merged if the store would overflow, and weights are
    /// renormalized to sum 1. An insert into an empty memory yields a
    /// single entry of weight 1 regardless of `ω`.
    pub fn insert(&mut self, sample: FeatureTensor, omega: f64) -> Result<()> {
        if !(omega > 0.0 && omega < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "learning rate ω = {omega} outside (0, 1)"
            )));
        }
        if let Some(first) = self.entries.first() {
            if !first.features.same_shape(&sample) {
                return Err(Error::ShapeMismatch(format!(
                    "sample {}x{}x{} does not match stored {}x{}x{}",
                    sample.channels(),
                    sample.height(),
                    sample.width(),
                    first.features.channels(),
                    first.features.height(),
                    first.features.width()
                )));
            }
        }
        let initial = if self.entries.is_empty() { 1.0 } else { omega };
        for e in &mut self.entries {
            e.weight *= 1.0 - omega;
        }
        self.entries.push(MemoryEntry {
            features: sample,
            weight: initial,
        });
        if self.entries.len() > self.capacity {
            self.merge_closest_pair();
        }
        self.renormalize();
        Ok(())
    }

    /// Fuses the two entries with minimum pairwise L2 feature distance into
    /// their weight-weighted average; the merged weight is the pair's sum.
    /// Needs at least two entries.
    pub fn merge_closest_pair(&mut self) {
        assert!(self.entries.len() >= 2, "merge needs at least two entries");
        let mut best = (0usize, 1usize, f64::INFINITY);
        for i in 0..self.entries.len() {
            for j in i + 1..self.entries.len() {
                let d = dist_sq(&self.entries[i].features, &self.entries[j].features);
                if d < best.2 {
                    best = (i, j, d);
                }
            }
        }
        let (i, j, _) = best;
        let removed = self.entries.remove(j);
        let kept = &mut self.entries[i];
        let total = kept.weight + removed.weight;
        let (wi, wj) = if total > 0.0 {
            (kept.weight / total, removed.weight / total)
        } else {
            (0.5, 0.5)
        };
        for (a, &b) in kept
            .features
            .data_mut()
            .iter_mut()
            .zip(removed.features.data())
        {
            *a = wi * *a + wj * b;
        }
        kept.weight = total;
    }

    fn renormalize(&mut self) {
        let total = self.total_weight();
        if total > 0.0 {
            for e in &mut self.entries {
                e.weight /= total;
            }
        }
    }
}

fn dist_sq(a: &FeatureTensor, b: &FeatureTensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}
