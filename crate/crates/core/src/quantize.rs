//! Stochastic uniform quantiser for the digital uplink.
//!
//! Entry magnitudes are mapped onto `2^b` evenly spaced knobs spanning
//! `[g_min, g_max]`, the extreme magnitudes of the vector. A magnitude between
//! two knobs rounds up with probability proportional to its distance from the
//! lower knob, so the decoded vector is unbiased.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedUpdate {
    levels: Vec<u32>,
    negative: Vec<bool>,
    g_min: f64,
    g_max: f64,
    bits: u32,
}

impl QuantizedUpdate {
    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn signs(&self) -> impl Iterator<Item = f64> + '_ {
        self.negative.iter().map(|&n| if n { -1.0 } else { 1.0 })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.g_min, self.g_max)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Per-vector error bound `(d/4) ((g_max - g_min) / (2^b - 1))^2`.
    pub fn error_bound(&self) -> f64 {
        let step = (self.g_max - self.g_min) / top_level(self.bits) as f64;
        self.len() as f64 / 4.0 * step * step
    }
}

fn top_level(bits: u32) -> u64 {
    (1u64 << bits) - 1
}

fn check_bits(bits: u32) -> Result<()> {
    if (1..=32).contains(&bits) {
        Ok(())
    } else {
        Err(Error::arg(format!("quantisation bits must lie in 1..=32, got {bits}")))
    }
}

pub fn quantize_vector<R: Rng + ?Sized>(g: &[f64], bits: u32, rng: &mut R) -> Result<QuantizedUpdate> {
    check_bits(bits)?;
    if g.is_empty() {
        return Err(Error::arg("cannot quantise an empty vector"));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("cannot quantise non-finite entries"));
    }
    let (g_min, g_max) = g
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
    let top = top_level(bits);
    let span = g_max - g_min;
    let levels = g
        .iter()
        .map(|v| {
            let mag = v.abs();
            if span <= 0.0 {
                return 0;
            }
            if mag >= g_max {
                return top as u32;
            }
            let pos = (mag - g_min) / span * top as f64;
            let lower = (pos.floor() as u64).min(top - 1);
            let frac = pos - lower as f64;
            let up = rng.random::<f64>() < frac;
            (lower + u64::from(up)) as u32
        })
        .collect();
    let negative = g.iter().map(|v| v.is_sign_negative() && *v != 0.0).collect();
    Ok(QuantizedUpdate { levels, negative, g_min, g_max, bits })
}

pub fn decode(qu: &QuantizedUpdate) -> Vec<f64> {
    let top = top_level(qu.bits) as f64;
    let span = qu.g_max - qu.g_min;
    qu.levels
        .iter()
        .zip(qu.signs())
        .map(|(&l, s)| s * (qu.g_min + l as f64 * span / top))
        .collect()
}

/// Bits per upload: `d (b + 1) + q`.
pub fn payload_bits(dim: usize, bits: u32, side_info_bits: u64) -> Result<u64> {
    if dim == 0 {
        return Err(Error::arg("model dimension must be positive"));
    }
    check_bits(bits)?;
    Ok(dim as u64 * (u64::from(bits) + 1) + side_info_bits)
}

/// `phi(b) = Delta^2 / (2^b - 1)^2`.
pub fn quantizer_variance_bound(range_sq: f64, bits: u32) -> f64 {
    let top = top_level(bits.clamp(1, 63)) as f64;
    range_sq / (top * top)
}
