//! Rayleigh block fading with imperfect CSI, and one-round gradient
//! estimators for the digital and analog uplinks.
//!
//! The large-scale power gain of device `k` is `(d_k / d_ref)^-alpha`; see
//! [`SystemConfig::large_scale_gain`].

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bounds::{self, exp_integral_e1};
use crate::config::{DeviceProfile, LearningConstants, PowerMode, Scheme, SystemConfig};
use crate::error::{Error, Result};
use crate::learn::{local_gradient, ModelVector};
use crate::quantize::{decode, quantize_vector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelDraw {
    pub true_fading: Complex64,
    pub est_fading: Complex64,
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(Error::arg(format!("csi correlation must lie in (0, 1], got {rho}")))
    }
}

/// `h = rho h^ + sqrt(1 - rho^2) v` with `h^, v ~ CN(0, 1)` independent.
pub fn draw_channels<R: Rng + ?Sized>(k: usize, rho: f64, rng: &mut R) -> Result<Vec<ChannelDraw>> {
    check_rho(rho)?;
    let spread = (1.0 - rho * rho).sqrt();
    Ok((0..k)
        .map(|_| {
            let est = complex_normal(rng);
            let v = complex_normal(rng);
            let true_fading = if rho == 1.0 { est } else { est * rho + v * spread };
            ChannelDraw { true_fading, est_fading: est }
        })
        .collect())
}

/// `theta = 2^(N d (b+1) / (B T_max)) - 1`, evaluated as `expm1` of the
/// exponent in natural-log units; infinite when it overflows.
pub fn min_rate_param(cfg: &SystemConfig) -> f64 {
    let exponent = cfg.participants_per_round as f64 * cfg.model_dim as f64 * (f64::from(cfg.quant_bits) + 1.0)
        / (cfg.bandwidth_hz * cfg.delay_target_s);
    let ln = exponent * std::f64::consts::LN_2;
    if ln > 709.0 {
        f64::INFINITY
    } else {
        ln.exp_m1()
    }
}

/// Fading power `|h|^2` a device needs for its packet to get through:
/// `B N0 theta / (2 N P gain)`.
pub fn outage_threshold(cfg: &SystemConfig, dev: &DeviceProfile, theta: f64, power_w: f64) -> f64 {
    cfg.bandwidth_hz * cfg.noise_density_w_per_hz * theta
        / (2.0 * cfg.participants_per_round as f64 * power_w * cfg.large_scale_gain(dev.distance_m))
}

/// `p_k = exp(-B N0 theta / (2 N P_k d_k^-alpha))`.
pub fn success_probability(cfg: &SystemConfig, dev: &DeviceProfile, theta: f64, power_w: f64) -> f64 {
    (-outage_threshold(cfg, dev, theta, power_w)).exp()
}

/// `lambda = e^gamma_th / rho`.
pub fn compensation_lambda(rho: f64, threshold: f64) -> f64 {
    threshold.exp() / rho
}

/// `min_k (r_k / alpha_k) d_k^-alpha/2`.
fn worst_device_factor(cfg: &SystemConfig, fleet: &[DeviceProfile]) -> f64 {
    fleet
        .iter()
        .map(|d| d.safe_prob() / d.weight * cfg.large_scale_gain(d.distance_m).sqrt())
        .fold(f64::INFINITY, f64::min)
}

/// Largest receive scaling `zeta` that keeps every device within its power
/// budget (per draw in `Max` mode, in expectation in `Average` mode).
pub fn scaling_factor(cfg: &SystemConfig, fleet: &[DeviceProfile], lc: &LearningConstants) -> Result<f64> {
    let gth = cfg.trunc_threshold;
    if !(gth > 0.0) {
        return Err(Error::arg("truncation threshold must be positive"));
    }
    check_rho(cfg.csi_correlation)?;
    if fleet.is_empty() {
        return Err(Error::arg("empty fleet"));
    }
    let base = cfg.csi_correlation / (lc.grad_bound * gth.exp()) * worst_device_factor(cfg, fleet);
    Ok(match cfg.power_mode {
        PowerMode::Max => base * (cfg.power_budget_w * gth).sqrt(),
        PowerMode::Average => base * (cfg.power_budget_w / exp_integral_e1(gth)?).sqrt(),
    })
}

/// Truncated channel inversion `beta_k`.
pub fn analog_precoder(
    draw: &ChannelDraw,
    dev: &DeviceProfile,
    cfg: &SystemConfig,
    lambda: f64,
    zeta: f64,
) -> Complex64 {
    let est = draw.est_fading;
    let power = est.norm_sqr();
    if power < cfg.trunc_threshold {
        return Complex64::new(0.0, 0.0);
    }
    let amp = zeta * lambda * dev.weight / (dev.safe_prob() * cfg.large_scale_gain(dev.distance_m).sqrt());
    est.conj() * (amp / power)
}

/// Realised coefficient distortion `xi_A = lambda Re{h* h^} / |h^|^2`, zero
/// when the device is truncated.
pub fn analog_distortion(draw: &ChannelDraw, threshold: f64, lambda: f64) -> f64 {
    let power = draw.est_fading.norm_sqr();
    if power < threshold {
        0.0
    } else {
        lambda * (draw.true_fading.conj() * draw.est_fading).re / power
    }
}

/// `E[(chi xi_A / r - 1)^2] = c / r - 1`.
pub fn distortion_second_moment(rho: f64, threshold: f64, r: f64) -> Result<f64> {
    Ok(bounds::distortion_constant(rho, threshold)? / r - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub vector: ModelVector,
    pub scheme: Scheme,
    pub participated: Vec<bool>,
    pub delivered: Vec<bool>,
    pub round_delay_s: f64,
    /// Per-device transmit power this round (zero for silent devices).
    pub transmit_power_w: Vec<f64>,
}

fn participation_mask(k: usize, n: usize, participants: &[usize]) -> Result<Vec<bool>> {
    if participants.len() != n {
        return Err(Error::InvalidPlan(format!("expected {n} participants, got {}", participants.len())));
    }
    let mut mask = vec![false; k];
    for &i in participants {
        if i >= k {
            return Err(Error::InvalidPlan(format!("participant {i} out of range")));
        }
        if mask[i] {
            return Err(Error::InvalidPlan(format!("participant {i} listed twice")));
        }
        mask[i] = true;
    }
    Ok(mask)
}

/// Quantise-and-transmit link with fixed-rate outage.
#[derive(Debug, Clone)]
pub struct DigitalLink {
    pub theta: f64,
    pub success_probs: Vec<f64>,
    pub bits: u32,
    pub power_w: f64,
    pub round_delay_s: f64,
    thresholds: Vec<f64>,
}

impl DigitalLink {
    /// Every device transmits at full power.
    pub fn new(cfg: &SystemConfig, fleet: &[DeviceProfile]) -> Self {
        let theta = min_rate_param(cfg);
        let power_w = cfg.power_budget_w;
        let thresholds: Vec<f64> = fleet.iter().map(|d| outage_threshold(cfg, d, theta, power_w)).collect();
        let round_delay_s = cfg.participants_per_round as f64
            * cfg.model_dim as f64
            * (f64::from(cfg.quant_bits) + 1.0)
            / (cfg.bandwidth_hz * theta.ln_1p() / std::f64::consts::LN_2);
        DigitalLink {
            theta,
            success_probs: thresholds.iter().map(|t| (-t).exp()).collect(),
            bits: cfg.quant_bits,
            power_w,
            round_delay_s,
            thresholds,
        }
    }

    /// Packet from device `k` survives iff `|h_k|^2` clears its threshold.
    pub fn delivered(&self, k: usize, draw: &ChannelDraw) -> bool {
        draw.true_fading.norm_sqr() >= self.thresholds[k]
    }

    pub fn round<R: Rng + ?Sized>(
        &self,
        w: &[f64],
        fleet: &[DeviceProfile],
        participants: &[usize],
        lc: &LearningConstants,
        n: usize,
        rng: &mut R,
    ) -> Result<GradientEstimate> {
        let k = fleet.len();
        let participated = participation_mask(k, n, participants)?;
        let draws = draw_channels(k, 1.0, rng)?;
        let mut vector = ModelVector::zeros(w.len());
        let mut delivered = vec![false; k];
        let mut power = vec![0.0; k];
        let mut sorted = participants.to_vec();
        sorted.sort_unstable();
        for &i in &sorted {
            let dev = &fleet[i];
            let g = local_gradient(w, dev.data()?, lc)?;
            let q = decode(&quantize_vector(&g, self.bits, rng)?);
            power[i] = self.power_w;
            if self.delivered(i, &draws[i]) {
                delivered[i] = true;
                let scale = dev.weight / (self.success_probs[i] * dev.safe_prob());
                vector.axpy(scale, &q);
            }
        }
        Ok(GradientEstimate {
            vector,
            scheme: Scheme::Digital,
            participated,
            delivered,
            round_delay_s: self.round_delay_s,
            transmit_power_w: power,
        })
    }
}

/// Over-the-air link with truncated channel inversion.
#[derive(Debug, Clone)]
pub struct AnalogLink {
    pub lambda: f64,
    pub zeta: f64,
    pub rho: f64,
    pub threshold: f64,
    /// Standard deviation of each entry of `Re{z}`; zero disables noise.
    pub noise_std: f64,
    pub round_delay_s: f64,
}

impl AnalogLink {
    pub fn new(cfg: &SystemConfig, fleet: &[DeviceProfile], lc: &LearningConstants) -> Result<Self> {
        Ok(AnalogLink {
            lambda: compensation_lambda(cfg.csi_correlation, cfg.trunc_threshold),
            zeta: scaling_factor(cfg, fleet, lc)?,
            rho: cfg.csi_correlation,
            threshold: cfg.trunc_threshold,
            noise_std: (cfg.bandwidth_hz * cfg.noise_density_w_per_hz / 2.0).sqrt(),
            round_delay_s: cfg.analog_delay_s(),
        })
    }

    pub fn without_noise(mut self) -> Self {
        self.noise_std = 0.0;
        self
    }

    pub fn round<R: Rng + ?Sized>(
        &self,
        w: &[f64],
        fleet: &[DeviceProfile],
        participants: &[usize],
        cfg: &SystemConfig,
        lc: &LearningConstants,
        rng: &mut R,
    ) -> Result<GradientEstimate> {
        let k = fleet.len();
        let participated = participation_mask(k, cfg.participants_per_round, participants)?;
        let draws = draw_channels(k, self.rho, rng)?;
        let d = w.len();
        let mut received = vec![0.0; d];
        let mut delivered = vec![false; k];
        let mut power = vec![0.0; k];
        let mut sorted = participants.to_vec();
        sorted.sort_unstable();
        for &i in &sorted {
            let dev = &fleet[i];
            let beta = analog_precoder(&draws[i], dev, cfg, self.lambda, self.zeta);
            if beta.norm_sqr() == 0.0 {
                continue;
            }
            delivered[i] = true;
            let g = local_gradient(w, dev.data()?, lc)?;
            power[i] = beta.norm_sqr() * g.norm_sq();
            // Only Re{y} is used, so each real gradient entry contributes Re{h gain^1/2 beta} g.
            let coef = (draws[i].true_fading * beta).re * cfg.large_scale_gain(dev.distance_m).sqrt();
            for (acc, gi) in received.iter_mut().zip(g.iter()) {
                *acc += coef * gi;
            }
        }
        if self.noise_std > 0.0 {
            for acc in received.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *acc += self.noise_std * z;
            }
        }
        let vector: ModelVector = received.into_iter().map(|v| v / self.zeta).collect::<Vec<_>>().into();
        Ok(GradientEstimate {
            vector,
            scheme: Scheme::Analog,
            participated,
            delivered,
            round_delay_s: self.round_delay_s,
            transmit_power_w: power,
        })
    }
}

pub fn digital_round<R: Rng + ?Sized>(
    w: &[f64],
    fleet: &[DeviceProfile],
    participants: &[usize],
    cfg: &SystemConfig,
    lc: &LearningConstants,
    rng: &mut R,
) -> Result<GradientEstimate> {
    DigitalLink::new(cfg, fleet).round(w, fleet, participants, lc, cfg.participants_per_round, rng)
}

pub fn analog_round<R: Rng + ?Sized>(
    w: &[f64],
    fleet: &[DeviceProfile],
    participants: &[usize],
    cfg: &SystemConfig,
    lc: &LearningConstants,
    rng: &mut R,
) -> Result<GradientEstimate> {
    AnalogLink::new(cfg, fleet, lc)?.round(w, fleet, participants, cfg, lc, rng)
}
