//! Fixed-size participant sampling with prescribed inclusion probabilities.
//!
//! Madow's systematic design: shuffle the devices, lay their probabilities
//! end to end on `[0, N)`, draw one uniform start `U` in `[0, 1)` and pick the
//! device whose interval contains each of `U, U + 1, ..., U + N - 1`. Each
//! interval is at most 1 long, so no device is hit twice, and device `k` is
//! hit with probability exactly `r_k`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::{MIN_INCLUSION_PROB, SUM_TOL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    probs: Vec<f64>,
    size: usize,
}

impl SamplingPlan {
    pub fn new(probs: Vec<f64>, size: usize) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidPlan("no devices".into()));
        }
        if size == 0 || size > probs.len() {
            return Err(Error::InvalidPlan(format!("size {size} outside 1..={}", probs.len())));
        }
        for (k, &r) in probs.iter().enumerate() {
            if !(MIN_INCLUSION_PROB * (1.0 - 1e-12)..=1.0).contains(&r) {
                return Err(Error::InvalidPlan(format!("device {k}: probability {r} outside [1e-6, 1]")));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - size as f64).abs() > SUM_TOL {
            return Err(Error::InvalidPlan(format!("probabilities sum to {sum}, expected {size}")));
        }
        Ok(SamplingPlan { probs, size })
    }

    pub fn uniform(k: usize, n: usize) -> Result<Self> {
        Self::new(vec![n as f64 / k as f64; k], n)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn num_devices(&self) -> usize {
        self.probs.len()
    }
}

/// Draws exactly `plan.size()` distinct devices, returned in ascending order.
pub fn sample_participants<R: Rng + ?Sized>(plan: &SamplingPlan, rng: &mut R) -> Vec<usize> {
    let k = plan.num_devices();
    let n = plan.size();
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(rng);
    let start: f64 = rng.random();

    let mut chosen = Vec::with_capacity(n);
    let mut upper = 0.0;
    let mut next = 0usize;
    for (pos, &dev) in order.iter().enumerate() {
        upper += plan.probs[dev];
        // The last interval absorbs round-off so the final points always land.
        let end = if pos + 1 == k { f64::INFINITY } else { upper };
        if next < n && start + (next as f64) < end {
            chosen.push(dev);
            next += 1;
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Fraction of `trials` draws in which each device was selected.
pub fn empirical_inclusion<R: Rng + ?Sized>(plan: &SamplingPlan, trials: usize, rng: &mut R) -> Result<Vec<f64>> {
    if trials == 0 {
        return Err(Error::arg("trials must be positive"));
    }
    let mut counts = vec![0usize; plan.num_devices()];
    for _ in 0..trials {
        for i in sample_participants(plan, rng) {
            counts[i] += 1;
        }
    }
    Ok(counts.into_iter().map(|c| c as f64 / trials as f64).collect())
}
