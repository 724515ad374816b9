//! Closed-form convergence bounds: virtual sum weights, noise terms,
//! optimality gaps, their high-SNR limits and the full convergence curve.
//!
//! Formulas are evaluated as published. In particular the analog noise term
//! has no factor `d`, whereas the simulated receiver noise energy is
//! `d B N0 / (2 zeta^2)`; [`BoundReport::phi_physical`] carries the
//! simulator's value alongside.

use crate::channel::{min_rate_param, success_probability};
use crate::config::{self, DeviceProfile, LearningConstants, PowerMode, SystemConfig, MIN_INCLUSION_PROB};
use crate::error::{Error, Result};
use crate::quantize::quantizer_variance_bound;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral `E1(x) = int_x^inf e^-t / t dt` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    if !(x > 0.0) || x.is_nan() {
        return Err(Error::arg(format!("E1 needs x > 0, got {x}")));
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    if x <= 1.0 {
        // -gamma - ln x - sum_{n>=1} (-x)^n / (n n!)
        let mut sum = 0.0;
        let mut term = 1.0;
        for n in 1..200 {
            term *= -x / n as f64;
            let add = term / n as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        return Ok(-EULER_GAMMA - x.ln() - sum);
    }
    // Modified Lentz on the continued fraction e^-x / (x + 1 - 1/(x + 3 - 4/(x + 5 - ...))).
    let tiny = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let delta = c * d;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            return Ok(h * (-x).exp());
        }
    }
    Err(Error::NonConvergence { what: "E1 continued fraction", iterations: 10_000 })
}

fn check_unit_interval(name: &str, v: &[f64]) -> Result<()> {
    if let Some(x) = v.iter().find(|&&x| !(x > 0.0 && x <= 1.0)) {
        return Err(Error::arg(format!("{name} entries must lie in (0, 1], got {x}")));
    }
    Ok(())
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: a, found: b })
    }
}

/// `g_D = sum_k alpha_k / (p_k r_k)`.
pub fn virtual_weight_digital(alpha: &[f64], r: &[f64], p: &[f64]) -> Result<f64> {
    check_lengths(alpha.len(), r.len())?;
    check_lengths(alpha.len(), p.len())?;
    check_unit_interval("alpha", alpha)?;
    check_unit_interval("r", r)?;
    check_unit_interval("p", p)?;
    Ok(alpha.iter().zip(r).zip(p).map(|((a, r), p)| a / (p * r.max(MIN_INCLUSION_PROB))).sum())
}

/// `c = e^gamma_th + (1 - rho^2) E1(gamma_th) e^(2 gamma_th) / (2 rho^2)`.
pub fn distortion_constant(rho: f64, threshold: f64) -> Result<f64> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::arg(format!("csi correlation must lie in (0, 1], got {rho}")));
    }
    let e = threshold.exp();
    if rho == 1.0 {
        if !(threshold > 0.0) {
            return Err(Error::arg("truncation threshold must be positive"));
        }
        return Ok(e);
    }
    Ok(e + (1.0 - rho * rho) * exp_integral_e1(threshold)? * e * e / (2.0 * rho * rho))
}

/// `g_A = c sum_k alpha_k / r_k - 1`.
pub fn virtual_weight_analog(alpha: &[f64], r: &[f64], rho: f64, threshold: f64) -> Result<f64> {
    check_lengths(alpha.len(), r.len())?;
    check_unit_interval("alpha", alpha)?;
    check_unit_interval("r", r)?;
    let c = distortion_constant(rho, threshold)?;
    Ok(c * alpha.iter().zip(r).map(|(a, r)| a / r.max(MIN_INCLUSION_PROB)).sum::<f64>() - 1.0)
}

/// `max_k alpha_k^2 (d_k / d_ref)^alpha / r_k^2`.
pub fn worst_device_term(cfg: &SystemConfig, alpha: &[f64], r: &[f64], distances_m: &[f64]) -> Result<f64> {
    check_lengths(alpha.len(), r.len())?;
    check_lengths(alpha.len(), distances_m.len())?;
    Ok(alpha
        .iter()
        .zip(r)
        .zip(distances_m)
        .map(|((a, r), d)| {
            let r = r.max(MIN_INCLUSION_PROB);
            a * a / (r * r * cfg.large_scale_gain(*d))
        })
        .fold(0.0, f64::max))
}

/// Prefactor of the analog noise term, so that `phi = prefactor * worst_device_term`.
pub fn noise_prefactor(cfg: &SystemConfig, lc: &LearningConstants, mode: PowerMode) -> Result<f64> {
    let rho = cfg.csi_correlation;
    let gth = cfg.trunc_threshold;
    if !(gth > 0.0) {
        return Err(Error::arg("truncation threshold must be positive"));
    }
    let common = cfg.bandwidth_hz * cfg.noise_density_w_per_hz * lc.grad_bound * lc.grad_bound * (2.0 * gth).exp()
        / (2.0 * cfg.power_budget_w * rho * rho);
    Ok(match mode {
        PowerMode::Max => common / gth,
        PowerMode::Average => common * exp_integral_e1(gth)?,
    })
}

/// Analog noise term `phi(r, gamma_th)` (`Max`) or `phi_ave` (`Average`).
pub fn noise_term(
    cfg: &SystemConfig,
    alpha: &[f64],
    r: &[f64],
    distances_m: &[f64],
    lc: &LearningConstants,
    mode: PowerMode,
) -> Result<f64> {
    Ok(noise_prefactor(cfg, lc, mode)? * worst_device_term(cfg, alpha, r, distances_m)?)
}

fn denominator(lc: &LearningConstants, eta: f64, g: f64) -> Result<f64> {
    let den = 2.0 * lc.strong_convexity - 4.0 * eta * lc.smoothness * lc.smoothness * g;
    if den > 0.0 {
        Ok(den)
    } else {
        Err(Error::InfeasibleLearningRate { denominator: den })
    }
}

/// `G_D = eta (L phi(b) + 2 L^3 delta^2) g_D / (2 mu - 4 eta L^2 g_D)`.
pub fn gap_digital(lc: &LearningConstants, eta: f64, g_d: f64, phi_b: f64) -> Result<f64> {
    let l = lc.smoothness;
    let delta_sq = lc.local_global_distance.powi(2);
    Ok(eta * (l * phi_b + 2.0 * l.powi(3) * delta_sq) * g_d / denominator(lc, eta, g_d)?)
}

/// `G_A = eta (L phi + 2 L^3 delta^2 g_A) / (2 mu - 4 eta L^2 g_A)`.
pub fn gap_analog(lc: &LearningConstants, eta: f64, g_a: f64, phi: f64) -> Result<f64> {
    let l = lc.smoothness;
    let delta_sq = lc.local_global_distance.powi(2);
    Ok(eta * (l * phi + 2.0 * l.powi(3) * delta_sq * g_a) / denominator(lc, eta, g_a)?)
}

/// Uniform-case digital limit as `P -> inf`:
/// `eta (L phi(b) + 2 L^3 delta^2) K / (2 mu N - 4 eta L^2 K)`.
pub fn gap_digital_highsnr(lc: &LearningConstants, eta: f64, phi_b: f64, k: usize, n: usize) -> Result<f64> {
    gap_digital(lc, eta, k as f64 / n as f64, phi_b)
}

/// Uniform-case analog limit as `P -> inf`:
/// `2 eta L^3 delta^2 (K c - N) / (2 mu N - 4 eta L^2 (K c - N))`.
pub fn gap_analog_highsnr(lc: &LearningConstants, eta: f64, c: f64, k: usize, n: usize) -> Result<f64> {
    gap_analog(lc, eta, (k as f64 * c - n as f64) / n as f64, 0.0)
}

/// Contraction factor `1 - eta mu + 2 eta^2 L^2 g`.
pub fn contraction_factor(lc: &LearningConstants, eta: f64, g: f64) -> f64 {
    1.0 - eta * lc.strong_convexity + 2.0 * eta * eta * lc.smoothness * lc.smoothness * g
}

/// Upper bound on `E[F(w_{m+1})] - F(w*)` for `m = 0..=m_max`:
/// `(L/2) rho_c^(m+1) ||w_0 - w*||^2 + gap`.
pub fn convergence_curve(
    lc: &LearningConstants,
    eta: f64,
    g: f64,
    gap: f64,
    m_max: usize,
    init_dist_sq: f64,
) -> Result<Vec<f64>> {
    let factor = contraction_factor(lc, eta, g);
    if !(0.0..1.0).contains(&factor) {
        return Err(Error::NonContractive { factor });
    }
    let mut out = Vec::with_capacity(m_max + 1);
    let mut pow = factor;
    for _ in 0..=m_max {
        out.push(0.5 * lc.smoothness * pow * init_dist_sq + gap);
        pow *= factor;
    }
    Ok(out)
}

/// Success probabilities of every device at full power.
pub fn success_probs(cfg: &SystemConfig, fleet: &[DeviceProfile]) -> Vec<f64> {
    let theta = min_rate_param(cfg);
    fleet.iter().map(|d| success_probability(cfg, d, theta, cfg.power_budget_w)).collect()
}

/// `G_D` for a given configuration, `+inf` where the learning rate is
/// infeasible or every packet is lost.
pub fn digital_gap_for(cfg: &SystemConfig, fleet: &[DeviceProfile], lc: &LearningConstants) -> Result<f64> {
    let p = success_probs(cfg, fleet);
    if p.iter().any(|&v| !(v > 0.0)) {
        return Ok(f64::INFINITY);
    }
    let g = virtual_weight_digital(&config::weights(fleet), &config::inclusion_probs(fleet), &p)?;
    let phi = quantizer_variance_bound(lc.quant_range_sq, cfg.quant_bits);
    match gap_digital(lc, cfg.learning_rate, g, phi) {
        Err(Error::InfeasibleLearningRate { .. }) => Ok(f64::INFINITY),
        other => other,
    }
}

/// `G_A` (or `G_A,ave`, by `cfg.power_mode`), `+inf` where infeasible.
pub fn analog_gap_for(cfg: &SystemConfig, fleet: &[DeviceProfile], lc: &LearningConstants) -> Result<f64> {
    let alpha = config::weights(fleet);
    let r = config::inclusion_probs(fleet);
    let g = virtual_weight_analog(&alpha, &r, cfg.csi_correlation, cfg.trunc_threshold)?;
    let phi = noise_term(cfg, &alpha, &r, &config::distances(fleet), lc, cfg.power_mode)?;
    match gap_analog(lc, cfg.learning_rate, g, phi) {
        Err(Error::InfeasibleLearningRate { .. }) => Ok(f64::INFINITY),
        other => other,
    }
}

/// `(b, G_D)` with the rate parameter recomputed for every `b`.
pub fn gap_digital_vs_bits(
    cfg: &SystemConfig,
    fleet: &[DeviceProfile],
    lc: &LearningConstants,
    bits: &[u32],
) -> Result<Vec<(u32, f64)>> {
    if bits.is_empty() {
        return Err(Error::arg("empty bit range"));
    }
    bits.iter()
        .map(|&b| {
            let c = SystemConfig { quant_bits: b, ..cfg.clone() };
            Ok((b, digital_gap_for(&c, fleet, lc)?))
        })
        .collect()
}

/// Every closed-form quantity for one configuration. Gaps are `+inf` when
/// the learning-rate condition fails.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub g_d: f64,
    pub g_a: f64,
    pub c: f64,
    pub phi_b: f64,
    pub phi_max: f64,
    pub phi_ave: f64,
    /// Simulated receiver noise energy for the configured power mode;
    /// `model_dim` times the published term.
    pub phi_physical: f64,
    pub gap_digital: f64,
    pub gap_analog: f64,
    pub gap_analog_ave: f64,
    pub gap_digital_inf: f64,
    pub gap_analog_inf: f64,
    pub lr_feasible_digital: bool,
    pub lr_feasible_analog: bool,
}

fn or_inf(r: Result<f64>) -> Result<f64> {
    match r {
        Err(Error::InfeasibleLearningRate { .. }) => Ok(f64::INFINITY),
        other => other,
    }
}

impl BoundReport {
    pub const COLUMNS: [&'static str; 14] = [
        "g_d",
        "g_a",
        "c",
        "phi_b",
        "phi_max",
        "phi_ave",
        "phi_physical",
        "gap_digital",
        "gap_analog",
        "gap_analog_ave",
        "gap_digital_inf",
        "gap_analog_inf",
        "lr_feasible_digital",
        "lr_feasible_analog",
    ];

    pub fn evaluate(cfg: &SystemConfig, fleet: &[DeviceProfile], lc: &LearningConstants) -> Result<Self> {
        let alpha = config::weights(fleet);
        let r = config::inclusion_probs(fleet);
        let dist = config::distances(fleet);
        let eta = cfg.learning_rate;
        let (k, n) = (fleet.len(), cfg.participants_per_round);

        let p = success_probs(cfg, fleet);
        let g_d = if p.iter().all(|&v| v > 0.0) { virtual_weight_digital(&alpha, &r, &p)? } else { f64::INFINITY };
        let c = distortion_constant(cfg.csi_correlation, cfg.trunc_threshold)?;
        let g_a = virtual_weight_analog(&alpha, &r, cfg.csi_correlation, cfg.trunc_threshold)?;
        let phi_b = quantizer_variance_bound(lc.quant_range_sq, cfg.quant_bits);
        let phi_max = noise_term(cfg, &alpha, &r, &dist, lc, PowerMode::Max)?;
        let phi_ave = noise_term(cfg, &alpha, &r, &dist, lc, PowerMode::Average)?;
        let phi_mode = match cfg.power_mode {
            PowerMode::Max => phi_max,
            PowerMode::Average => phi_ave,
        };
        let lr_feasible_digital = denominator(lc, eta, g_d).is_ok();
        let lr_feasible_analog = denominator(lc, eta, g_a).is_ok();
        Ok(BoundReport {
            g_d,
            g_a,
            c,
            phi_b,
            phi_max,
            phi_ave,
            phi_physical: cfg.model_dim as f64 * phi_mode,
            gap_digital: if g_d.is_finite() { or_inf(gap_digital(lc, eta, g_d, phi_b))? } else { f64::INFINITY },
            gap_analog: or_inf(gap_analog(lc, eta, g_a, phi_max))?,
            gap_analog_ave: or_inf(gap_analog(lc, eta, g_a, phi_ave))?,
            gap_digital_inf: or_inf(gap_digital_highsnr(lc, eta, phi_b, k, n))?,
            gap_analog_inf: or_inf(gap_analog_highsnr(lc, eta, c, k, n))?,
            lr_feasible_digital,
            lr_feasible_analog,
        })
    }

    pub fn values(&self) -> Vec<String> {
        let nums = [
            self.g_d,
            self.g_a,
            self.c,
            self.phi_b,
            self.phi_max,
            self.phi_ave,
            self.phi_physical,
            self.gap_digital,
            self.gap_analog,
            self.gap_analog_ave,
            self.gap_digital_inf,
            self.gap_analog_inf,
        ];
        let mut out: Vec<String> = nums.iter().map(|v| v.to_string()).collect();
        out.push(self.lr_feasible_digital.to_string());
        out.push(self.lr_feasible_analog.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Adaptive Simpson quadrature of `f` on `[a, b]`.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        #[allow(clippy::too_many_arguments)]
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
    }

    /// `E1(x) = e^-x int_0^inf e^-s / (x + s) ds`, integrated panel by panel.
    fn e1_quadrature(x: f64) -> f64 {
        let f = move |s: f64| (-s).exp() / (x + s);
        let mut total = 0.0;
        let mut a = 0.0;
        while a < 60.0 {
            let b = a * 2.0 + x.min(1.0);
            total += simpson(&f, a, b, 1e-16);
            a = b;
        }
        total * (-x).exp()
    }

    #[test]
    fn e1_matches_quadrature() {
        for &x in &[0.01, 0.2, 0.5, 0.999, 1.0, 1.001, 1.7, 3.0, 7.5, 20.0] {
            let q = e1_quadrature(x);
            let e = exp_integral_e1(x).unwrap();
            assert!((e - q).abs() <= 1e-10 * q, "x = {x}: {e} vs {q}");
        }
        assert!((exp_integral_e1(1.0).unwrap() - 0.219_383_934_395_520_6).abs() < 1e-15);
    }

    #[test]
    fn e1_rejects_nonpositive() {
        assert!(exp_integral_e1(0.0).is_err());
        assert!(exp_integral_e1(-1.0).is_err());
    }

    proptest! {
        #[test]
        fn e1_below_reciprocal_and_decreasing(x in 1e-4f64..50.0) {
            let e = exp_integral_e1(x).unwrap();
            prop_assert!(e > 0.0 && e < 1.0 / x);
            prop_assert!(exp_integral_e1(x * 1.01).unwrap() < e);
        }

        #[test]
        fn digital_weight_at_least_one(
            raw in prop::collection::vec((0.01f64..1.0, 0.01f64..1.0, 0.01f64..1.0), 1..10)
        ) {
            let total: f64 = raw.iter().map(|t| t.0).sum();
            let alpha: Vec<f64> = raw.iter().map(|t| t.0 / total).collect();
            let r: Vec<f64> = raw.iter().map(|t| t.1).collect();
            let p: Vec<f64> = raw.iter().map(|t| t.2).collect();
            prop_assert!(virtual_weight_digital(&alpha, &r, &p).unwrap() >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn digital_weight_examples() {
        assert_eq!(virtual_weight_digital(&[0.5, 0.5], &[1.0, 1.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_relative_eq!(virtual_weight_digital(&[0.25; 4], &[0.5; 4], &[1.0; 4]).unwrap(), 2.0);
        assert_relative_eq!(virtual_weight_digital(&[0.5, 0.5], &[1.0, 1.0], &[0.5, 1.0]).unwrap(), 1.5);
        assert!(virtual_weight_digital(&[0.5, 0.5], &[0.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn analog_weight_examples() {
        assert_relative_eq!(
            virtual_weight_analog(&[0.3, 0.7], &[1.0, 1.0], 1.0, 0.4).unwrap(),
            0.4f64.exp() - 1.0,
            max_relative = 1e-14
        );
        assert!(virtual_weight_analog(&[1.0], &[1.0], 1.0, 1e-12).unwrap().abs() < 1e-10);
        assert!(virtual_weight_analog(&[1.0], &[1.0], 1.5, 0.5).is_err());
    }

    fn cfg() -> SystemConfig {
        SystemConfig::reference()
    }

    #[test]
    fn noise_term_properties() {
        let c = cfg();
        let lc = LearningConstants::reference();
        let alpha = [0.2, 0.5, 0.3];
        let r = [0.4, 0.9, 0.7];
        let dist = [300.0, 450.0, 120.0];
        let max = noise_term(&c, &alpha, &r, &dist, &lc, PowerMode::Max).unwrap();
        let ave = noise_term(&c, &alpha, &r, &dist, &lc, PowerMode::Average).unwrap();
        assert!(ave < max);
        let doubled: Vec<f64> = dist.iter().map(|d| 2.0 * d).collect();
        let scaled = noise_term(&c, &alpha, &r, &doubled, &lc, PowerMode::Max).unwrap();
        assert_relative_eq!(scaled, max * 8.0, max_relative = 1e-12);
        let loud = SystemConfig { power_budget_w: 1e30, ..c.clone() };
        assert!(noise_term(&loud, &alpha, &r, &dist, &lc, PowerMode::Max).unwrap() < 1e-25);
        let half_rho = SystemConfig { csi_correlation: c.csi_correlation / 2.0, ..c };
        assert_relative_eq!(
            noise_term(&half_rho, &alpha, &r, &dist, &lc, PowerMode::Max).unwrap(),
            4.0 * max,
            max_relative = 1e-12
        );
    }

    #[test]
    fn gaps_vanish_without_error_sources() {
        let lc = LearningConstants { local_global_distance: 0.0, ..LearningConstants::reference() };
        assert_eq!(gap_digital(&lc, 0.001, 2.0, 0.0).unwrap(), 0.0);
        assert_eq!(gap_analog(&lc, 0.001, 2.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn gap_is_linear_in_small_eta() {
        let lc = LearningConstants::reference();
        let a = gap_digital(&lc, 1e-10, 2.0, 0.1).unwrap();
        let b = gap_digital(&lc, 2e-10, 2.0, 0.1).unwrap();
        assert_relative_eq!(b / a, 2.0, max_relative = 1e-6);
    }

    #[test]
    fn infeasible_learning_rate_errors() {
        let lc = LearningConstants::reference();
        assert!(matches!(gap_digital(&lc, 1.0, 2.0, 0.0), Err(Error::InfeasibleLearningRate { .. })));
        assert!(matches!(gap_analog(&lc, 1.0, 2.0, 0.0), Err(Error::InfeasibleLearningRate { .. })));
    }

    #[test]
    fn high_snr_consistency() {
        let lc = LearningConstants::reference();
        let (k, n) = (20, 10);
        let alpha = vec![1.0 / k as f64; k];
        let r = vec![n as f64 / k as f64; k];
        let g_d = virtual_weight_digital(&alpha, &r, &vec![1.0; k]).unwrap();
        assert_relative_eq!(
            gap_digital(&lc, 0.001, g_d, 0.3).unwrap(),
            gap_digital_highsnr(&lc, 0.001, 0.3, k, n).unwrap(),
            max_relative = 1e-12
        );
        let c = distortion_constant(0.9, 0.5).unwrap();
        let g_a = virtual_weight_analog(&alpha, &r, 0.9, 0.5).unwrap();
        let printed = 2.0 * 0.001 * 8f64.powi(3) * 0.01 * (k as f64 * c - n as f64)
            / (2.0 * 2.0 * n as f64 - 4.0 * 0.001 * 64.0 * (k as f64 * c - n as f64));
        assert_relative_eq!(gap_analog(&lc, 0.001, g_a, 0.0).unwrap(), printed, max_relative = 1e-12);
        assert_relative_eq!(gap_analog_highsnr(&lc, 0.001, c, k, n).unwrap(), printed, max_relative = 1e-12);
    }

    #[test]
    fn gap_analog_increases_in_weight() {
        let lc = LearningConstants::reference();
        let mut prev = 0.0;
        for i in 0..50 {
            let g = 0.1 * i as f64;
            let v = gap_analog(&lc, 0.001, g, 0.01).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn convergence_curve_shapes() {
        let lc = LearningConstants::reference();
        let curve = convergence_curve(&lc, 0.001, 2.0, 0.05, 20_000, 4.0).unwrap();
        assert!(curve.windows(2).all(|w| w[1] < w[0]));
        assert!((curve[20_000] - 0.05).abs() < 1e-6);
        let slow = convergence_curve(&lc, 0.001, 4.0, 0.05, 100, 4.0).unwrap();
        let fast = convergence_curve(&lc, 0.001, 2.0, 0.05, 100, 4.0).unwrap();
        assert!(slow[100] > fast[100]);
        let flat = convergence_curve(&lc, 0.001, 2.0, 0.05, 10, 0.0).unwrap();
        assert!(flat.iter().all(|&v| v == 0.05));
        assert!(matches!(convergence_curve(&lc, 1.0, 2.0, 0.0, 3, 1.0), Err(Error::NonContractive { .. })));
    }
}
