//! Inclusion-probability optimisers, bit-width search and truncation
//! threshold search.

use crate::bounds::{
    analog_gap_for, distortion_constant, gap_digital_vs_bits, noise_prefactor, virtual_weight_analog,
    virtual_weight_digital,
};
use crate::config::{self, DeviceProfile, LearningConstants, SystemConfig, MIN_INCLUSION_PROB};
use crate::error::{Error, Result};

const BISECTION_ITERS: usize = 200;
const GOLDEN_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerResult {
    pub probs: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each outer iteration (Dinkelbach only).
    pub trace: Vec<f64>,
}

fn check_count(k: usize, n: usize) -> Result<()> {
    if n == 0 || n > k {
        return Err(Error::arg(format!("need 1 <= N <= K, got N = {n}, K = {k}")));
    }
    Ok(())
}

/// Sum of `clamp(sqrt(a_k / nu), lo_k, 1)`.
fn filled<'a>(a: &'a [f64], lo: &'a [f64], nu: f64) -> impl Iterator<Item = f64> + 'a {
    a.iter().zip(lo).map(move |(a, &lo)| (a / nu).sqrt().clamp(lo, 1.0))
}

/// Minimises `sum a_k / r_k` over `sum r = n`, `lo_k <= r_k <= 1`.
///
/// The KKT point is `r_k = clamp(sqrt(a_k / nu), lo_k, 1)`; `nu` is found by
/// bisection in log space, then the free coordinates are rescaled so the sum
/// is exactly `n`. Returns the solution and the bisection count.
pub fn water_fill(a: &[f64], lo: &[f64], n: f64, tol: f64) -> Result<(Vec<f64>, usize)> {
    let k = a.len();
    let lo_sum: f64 = lo.iter().sum();
    if lo_sum > n * (1.0 + 1e-12) || n > k as f64 * (1.0 + 1e-12) {
        return Err(Error::arg("water-filling constraints are infeasible"));
    }
    if (k as f64 - n).abs() <= 1e-12 {
        return Ok((vec![1.0; k], 0));
    }
    if a.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::arg("water-filling weights must be positive"));
    }
    let sum_at = |nu: f64| filled(a, lo, nu).sum::<f64>();
    let (mut ln_lo, mut ln_hi) = (0.0f64, 0.0f64);
    while sum_at(ln_lo.exp()) < n {
        ln_lo -= 4.0;
        if ln_lo < -1400.0 {
            return Err(Error::NonConvergence { what: "water-filling bracket", iterations: 0 });
        }
    }
    while sum_at(ln_hi.exp()) > n {
        ln_hi += 4.0;
        if ln_hi > 1400.0 {
            return Err(Error::NonConvergence { what: "water-filling bracket", iterations: 0 });
        }
    }
    let mut iters = 0;
    let mut nu = (0.5 * (ln_lo + ln_hi)).exp();
    while iters < BISECTION_ITERS {
        iters += 1;
        let mid = 0.5 * (ln_lo + ln_hi);
        nu = mid.exp();
        let s = sum_at(nu);
        if (s - n).abs() <= tol * 1e-3 || ln_hi - ln_lo < 1e-15 {
            break;
        }
        if s > n {
            ln_lo = mid;
        } else {
            ln_hi = mid;
        }
    }
    let mut r: Vec<f64> = filled(a, lo, nu).collect();
    // Put the residual on the coordinates strictly inside their bounds.
    let free: Vec<usize> = (0..k).filter(|&i| r[i] > lo[i] && r[i] < 1.0).collect();
    let fixed: f64 = (0..k).filter(|i| !free.contains(i)).map(|i| r[i]).sum();
    let free_sum: f64 = free.iter().map(|&i| r[i]).sum();
    if free_sum > 0.0 {
        let scale = (n - fixed) / free_sum;
        for &i in &free {
            r[i] = (r[i] * scale).clamp(lo[i], 1.0);
        }
    }
    let s: f64 = r.iter().sum();
    if (s - n).abs() > tol.max(1e-9) {
        return Err(Error::NonConvergence { what: "water-filling", iterations: iters });
    }
    Ok((r, iters))
}

/// Minimises `g_D(r) = sum alpha_k / (p_k r_k)` subject to `sum r = N`.
pub fn optimize_inclusion_digital(alpha: &[f64], p: &[f64], n: usize, tol: f64) -> Result<OptimizerResult> {
    let k = alpha.len();
    check_count(k, n)?;
    if p.len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: p.len() });
    }
    if !(tol > 0.0) {
        return Err(Error::arg("tolerance must be positive"));
    }
    let a: Vec<f64> = alpha.iter().zip(p).map(|(a, p)| a / p).collect();
    let lo = vec![MIN_INCLUSION_PROB; k];
    let (probs, iterations) = water_fill(&a, &lo, n as f64, tol)?;
    let objective = virtual_weight_digital(alpha, &probs, p)?;
    Ok(OptimizerResult { probs, objective, iterations, converged: true, trace: Vec::new() })
}

/// `weight * c * sum alpha_k / r_k + kappa * max_k b_k / r_k^2`.
fn subproblem_value(alpha: &[f64], b: &[f64], c: f64, weight: f64, kappa: f64, r: &[f64]) -> f64 {
    let sum: f64 = alpha.iter().zip(r).map(|(a, r)| a / r).sum();
    let worst = b.iter().zip(r).map(|(b, r)| b / (r * r)).fold(0.0, f64::max);
    weight * c * sum + kappa * worst
}

/// Minimises `weight * c * sum alpha_k / r_k + kappa * max_k b_k / r_k^2`
/// over `sum r = n`, `1e-6 <= r <= 1`, where `b_k = alpha_k^2 (d_k/d_ref)^alpha`.
///
/// Epigraph form: for a cap `t` on the max term the problem is a
/// water-filling with lower bounds `sqrt(b_k / t)`; its value `S(t)` is
/// convex in `t`, so `weight c S(t) + kappa t` is minimised by golden-section
/// search between the smallest feasible cap and the cap that is slack at the
/// unconstrained optimum.
pub fn solve_dinkelbach_subproblem(
    alpha: &[f64],
    b: &[f64],
    c: f64,
    weight: f64,
    kappa: f64,
    n: usize,
) -> Result<Vec<f64>> {
    let k = alpha.len();
    check_count(k, n)?;
    if b.len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: b.len() });
    }
    if !(weight > 0.0) || !(c > 0.0) || !(kappa >= 0.0) {
        return Err(Error::arg("subproblem needs weight > 0, c > 0, kappa >= 0"));
    }
    let nf = n as f64;
    let tol = 1e-12;
    let floor = vec![MIN_INCLUSION_PROB; k];
    let (free, _) = water_fill(alpha, &floor, nf, tol)?;
    if kappa == 0.0 || k == n {
        return Ok(free);
    }
    let lower = |t: f64| -> Vec<f64> { b.iter().map(|&bk| (bk / t).sqrt().max(MIN_INCLUSION_PROB)).collect() };
    let solve_at = |t: f64| -> Result<Vec<f64>> {
        let lo = lower(t);
        if lo.iter().any(|&v| v > 1.0) {
            return Err(Error::arg("cap below a device's floor"));
        }
        Ok(water_fill(alpha, &lo, nf, tol)?.0)
    };
    let value_at = |t: f64| -> f64 {
        match solve_at(t) {
            Ok(r) => weight * c * alpha.iter().zip(&r).map(|(a, r)| a / r).sum::<f64>() + kappa * t,
            Err(_) => f64::INFINITY,
        }
    };

    let t_hi = b.iter().zip(&free).map(|(b, r)| b / (r * r)).fold(0.0, f64::max);
    let sqrt_sum: f64 = b.iter().map(|b| b.sqrt()).sum();
    let b_max = b.iter().cloned().fold(0.0, f64::max);
    let mut t_lo = b_max.max(sqrt_sum * sqrt_sum / (nf * nf));
    while lower(t_lo).iter().sum::<f64>() > nf {
        t_lo *= 1.0 + 1e-12;
    }
    if !(t_lo < t_hi) {
        return Ok(free);
    }

    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (t_lo, t_hi);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (value_at(x1), value_at(x2));
    for _ in 0..GOLDEN_ITERS {
        if hi - lo <= 1e-14 * hi {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = value_at(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = value_at(x2);
        }
    }
    let mut best = free;
    let mut best_value = subproblem_value(alpha, b, c, weight, kappa, &best);
    for t in [lo, hi, 0.5 * (lo + hi), t_lo] {
        if let Ok(r) = solve_at(t) {
            let v = subproblem_value(alpha, b, c, weight, kappa, &r);
            if v < best_value {
                best = r;
                best_value = v;
            }
        }
    }
    Ok(best)
}

/// Pieces of the analog objective for a fleet: `b_k`, `c` and the noise prefactor.
struct AnalogTerms {
    alpha: Vec<f64>,
    b: Vec<f64>,
    c: f64,
    prefactor: f64,
}

impl AnalogTerms {
    fn new(cfg: &SystemConfig, fleet: &[DeviceProfile], lc: &LearningConstants) -> Result<Self> {
        let alpha = config::weights(fleet);
        let b = fleet.iter().map(|d| d.weight * d.weight / cfg.large_scale_gain(d.distance_m)).collect();
        Ok(AnalogTerms {
            alpha,
            b,
            c: distortion_constant(cfg.csi_correlation, cfg.trunc_threshold)?,
            prefactor: noise_prefactor(cfg, lc, cfg.power_mode)?,
        })
    }

    fn phi(&self, r: &[f64]) -> f64 {
        self.prefactor * self.b.iter().zip(r).map(|(b, r)| b / (r * r)).fold(0.0, f64::max)
    }

    fn g_a(&self, r: &[f64], cfg: &SystemConfig) -> Result<f64> {
        virtual_weight_analog(&self.alpha, r, cfg.csi_correlation, cfg.trunc_threshold)
    }
}

/// Dinkelbach iteration for the analog gap.
///
/// The ratio is `(phi(r) + 2 L^2 delta^2 g_A(r)) / (2 mu - 4 eta L^2 g_A(r))`,
/// which equals `G_A / (eta L)`. Each step solves
/// `min phi(r) + (2 L^2 delta^2 + 4 eta L^2 s) g_A(r)` for the current ratio
/// `s` and re-evaluates the ratio. Stops once the ratio changes by at most
/// `tol` relative. `objective` is the final ratio; multiply by `eta L` for
/// `G_A`.
pub fn dinkelbach_analog(
    cfg: &SystemConfig,
    fleet: &[DeviceProfile],
    lc: &LearningConstants,
    tol: f64,
    max_iter: usize,
) -> Result<OptimizerResult> {
    let k = fleet.len();
    let n = cfg.participants_per_round;
    check_count(k, n)?;
    let terms = AnalogTerms::new(cfg, fleet, lc)?;
    let l = lc.smoothness;
    let delta_sq = lc.local_global_distance.powi(2);
    let eta = cfg.learning_rate;
    let ratio = |r: &[f64]| -> Result<f64> {
        let g = terms.g_a(r, cfg)?;
        let den = 2.0 * lc.strong_convexity - 4.0 * eta * l * l * g;
        if den <= 0.0 {
            return Err(Error::InfeasibleLearningRate { denominator: den });
        }
        Ok((terms.phi(r) + 2.0 * l * l * delta_sq * g) / den)
    };

    let mut r = vec![n as f64 / k as f64; k];
    let mut s = ratio(&r)?;
    let mut trace = vec![s];
    if k == n {
        return Ok(OptimizerResult { probs: r, objective: s, iterations: 1, converged: true, trace });
    }
    for it in 1..=max_iter {
        let weight = 2.0 * l * l * delta_sq + 4.0 * eta * l * l * s;
        if !(weight > 0.0) {
            // Zero ratio with no heterogeneity: nothing left to improve.
            return Ok(OptimizerResult { probs: r, objective: s, iterations: it, converged: true, trace });
        }
        let candidate = solve_dinkelbach_subproblem(&terms.alpha, &terms.b, terms.c, weight, terms.prefactor, n)?;
        let next = ratio(&candidate)?;
        if next > s {
            // Round-off: the subproblem cannot beat the incumbent.
            return Ok(OptimizerResult { probs: r, objective: s, iterations: it, converged: true, trace });
        }
        let done = s - next <= tol * s.abs();
        r = candidate;
        s = next;
        trace.push(s);
        if done {
            return Ok(OptimizerResult { probs: r, objective: s, iterations: it, converged: true, trace });
        }
    }
    Ok(OptimizerResult { probs: r, objective: s, iterations: max_iter, converged: false, trace })
}

/// Bit width in `1..=b_max` with the smallest `G_D`; ties go to fewer bits.
pub fn search_quantization_bits(
    cfg: &SystemConfig,
    fleet: &[DeviceProfile],
    lc: &LearningConstants,
    b_max: u32,
) -> Result<u32> {
    if b_max == 0 {
        return Err(Error::arg("b_max must be at least 1"));
    }
    let bits: Vec<u32> = (1..=b_max.min(32)).collect();
    let table = gap_digital_vs_bits(cfg, fleet, lc, &bits)?;
    argmin(&table).ok_or_else(|| Error::arg("learning-rate condition fails for every bit width"))
}

/// `(gamma_th, G_A)` over a threshold grid, in grid order.
pub fn truncation_threshold_table(
    cfg: &SystemConfig,
    fleet: &[DeviceProfile],
    lc: &LearningConstants,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    grid.iter()
        .map(|&g| {
            if !(g > 0.0) {
                return Err(Error::arg("thresholds must be positive"));
            }
            let c = SystemConfig { trunc_threshold: g, ..cfg.clone() };
            Ok((g, analog_gap_for(&c, fleet, lc)?))
        })
        .collect()
}

/// Threshold with the smallest `G_A`; ties go to the smaller threshold.
pub fn search_truncation_threshold(
    cfg: &SystemConfig,
    fleet: &[DeviceProfile],
    lc: &LearningConstants,
    grid: &[f64],
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::arg("empty threshold grid"));
    }
    let table = truncation_threshold_table(cfg, fleet, lc, grid)?;
    argmin(&table).ok_or_else(|| Error::arg("learning-rate condition fails for every threshold"))
}

/// Key with the smallest finite value; ties resolved towards the smaller key.
fn argmin<K: Copy + PartialOrd>(table: &[(K, f64)]) -> Option<K> {
    table
        .iter()
        .filter(|(_, v)| v.is_finite())
        .fold(None, |best: Option<(K, f64)>, &(key, v)| match best {
            None => Some((key, v)),
            Some((bk, bv)) if v < bv || (v == bv && key < bk) => Some((key, v)),
            keep => keep,
        })
        .map(|(key, _)| key)
}
