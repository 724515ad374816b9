//! Monte Carlo experiments: problem setup, training runs, baseline plans,
//! scheme comparisons and parameter sweeps.

use rand::Rng;

use crate::bounds::{self, gap_analog, gap_digital, noise_term, virtual_weight_analog, virtual_weight_digital};
use crate::channel::{AnalogLink, DigitalLink, GradientEstimate};
use crate::config::{self, DeviceProfile, LearningConstants, PlanSpec, Scenario, Scheme, SystemConfig};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::learn::{
    accuracy, estimate_constants, global_gradient, global_loss, local_gradient, solve_local_optimum,
    synthetic_sample_counts, LocalDataset, ModelVector, SyntheticGenerator,
};
use crate::optimize::{dinkelbach_analog, optimize_inclusion_digital};
use crate::quantize::quantizer_variance_bound;
use crate::rng::{stream, Purpose};
use crate::sampler::{sample_participants, SamplingPlan};
use crate::table::{fmt_f64, Table};

const OPTIMUM_TOL: f64 = 1e-10;
const OPTIMIZER_TOL: f64 = 1e-10;
const DINKELBACH_MAX_ITER: usize = 100;
const PLACEMENT_ATTEMPTS: usize = 1_000_000;

/// Global optimum and held-out data of a problem with real samples.
#[derive(Debug, Clone)]
pub struct Reference {
    pub w_star: ModelVector,
    pub f_star: f64,
    pub holdout: LocalDataset,
}

/// Everything an experiment needs. `fleet` carries uniform inclusion
/// probabilities; plans are applied per run.
#[derive(Debug, Clone)]
pub struct Problem {
    pub cfg: SystemConfig,
    pub lc: LearningConstants,
    pub fleet: Vec<DeviceProfile>,
    pub reference: Option<Reference>,
    pub config_hash: String,
}

/// Uniform placement in a square of half-side `half_side_m` around the base
/// station, rejecting points closer than `min_distance_m`.
pub fn place_devices(k: usize, half_side_m: f64, min_distance_m: f64, seed: u64) -> Result<Vec<f64>> {
    if !(half_side_m > 0.0) || !(min_distance_m >= 0.0) || min_distance_m >= half_side_m {
        return Err(Error::arg("need 0 <= min_distance_m < area_half_side_m"));
    }
    let mut rng = stream(seed, Purpose::Placement, &[]);
    let mut out = Vec::with_capacity(k);
    for _ in 0..PLACEMENT_ATTEMPTS {
        if out.len() == k {
            break;
        }
        let x = rng.random_range(-half_side_m..half_side_m);
        let y = rng.random_range(-half_side_m..half_side_m);
        let dist = f64::hypot(x, y);
        if dist >= min_distance_m {
            out.push(dist);
        }
    }
    if out.len() < k {
        return Err(Error::NonConvergence { what: "device placement", iterations: PLACEMENT_ATTEMPTS });
    }
    Ok(out)
}

impl Problem {
    /// Builds a problem from explicit pieces. The reference optimum is
    /// computed when every device carries data and a holdout set is given.
    pub fn new(
        cfg: SystemConfig,
        lc: LearningConstants,
        fleet: Vec<DeviceProfile>,
        holdout: Option<LocalDataset>,
        config_hash: String,
    ) -> Result<Self> {
        if fleet.len() != cfg.num_devices {
            return Err(Error::DimensionMismatch { expected: cfg.num_devices, found: fleet.len() });
        }
        let reference = match holdout {
            Some(holdout) if fleet.iter().all(|d| d.dataset.is_some()) => {
                let data: Vec<&LocalDataset> = fleet.iter().map(|d| d.data()).collect::<Result<_>>()?;
                let pooled = LocalDataset::pooled(data.iter().copied())?;
                let w_star = solve_local_optimum(&pooled, lc.strong_convexity, OPTIMUM_TOL)?;
                let f_star = global_loss(&w_star, &data, &config::weights(&fleet), lc.strong_convexity)?;
                Some(Reference { w_star, f_star, holdout })
            }
            _ => None,
        };
        Ok(Problem { cfg, lc, fleet, reference, config_hash })
    }

    /// Generates data and placement, estimates the learning constants and
    /// applies any overrides.
    pub fn from_scenario(sc: &Scenario) -> Result<Self> {
        let k = sc.system.num_devices;
        let gen = SyntheticGenerator::new(sc.data.clone(), sc.seed)?;
        let data = gen.fleet(k)?;
        let holdout = gen.holdout(sc.holdout_samples)?;
        let distances = scenario_distances(sc)?;
        let lc = if sc.learning.is_complete() {
            sc.learning.apply(LearningConstants { strong_convexity: sc.regularizer, ..LearningConstants::reference() })
        } else {
            sc.learning.apply(estimate_constants(&data, sc.regularizer, sc.probe_models, sc.seed)?)
        };
        let r = uniform_probs(&sc.system)?;
        let fleet = DeviceProfile::fleet(data, &distances, &r)?;
        Problem::new(sc.system.clone(), lc, fleet, Some(holdout), sc.config_hash())
    }

    /// Like [`Problem::from_scenario`], but skips sample generation when the
    /// learning constants are fully overridden: the fleet then carries only
    /// sample counts and cannot be simulated.
    pub fn for_bounds(sc: &Scenario) -> Result<Self> {
        if !sc.learning.is_complete() {
            return Problem::from_scenario(sc);
        }
        let counts = synthetic_sample_counts(&sc.data, sc.system.num_devices, sc.seed)?;
        let distances = scenario_distances(sc)?;
        let lc = sc.learning.apply(LearningConstants { strong_convexity: sc.regularizer, ..LearningConstants::reference() });
        let fleet = DeviceProfile::from_counts(&counts, &distances, &uniform_probs(&sc.system)?)?;
        Problem::new(sc.system.clone(), lc, fleet, None, sc.config_hash())
    }

    pub fn reference(&self) -> Result<&Reference> {
        self.reference.as_ref().ok_or_else(|| Error::arg("problem has no sample data; simulation needs a data-backed fleet"))
    }

    pub fn datasets(&self) -> Result<Vec<&LocalDataset>> {
        self.fleet.iter().map(|d| d.data()).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        config::weights(&self.fleet)
    }

    /// `F(w) - F(w*)`.
    pub fn gap(&self, w: &[f64]) -> Result<f64> {
        let reference = self.reference()?;
        Ok(global_loss(w, &self.datasets()?, &self.weights(), self.lc.strong_convexity)? - reference.f_star)
    }

    pub fn plan(&self, spec: &PlanSpec, scheme: Scheme) -> Result<SamplingPlan> {
        resolve_plan(&self.cfg, &self.fleet, &self.lc, spec, scheme)
    }

    /// Fleet with the plan's inclusion probabilities.
    pub fn fleet_with(&self, plan: &SamplingPlan) -> Result<Vec<DeviceProfile>> {
        config::with_probs(&self.fleet, plan.probs())
    }

    /// Closed-form bound on the expected gap after `0..=rounds` updates,
    /// starting from the zero model.
    pub fn bound_curve(&self, scheme: Scheme, plan: &SamplingPlan, rounds: usize) -> Result<Vec<f64>> {
        let fleet = self.fleet_with(plan)?;
        let terms = scheme_terms(&self.cfg, &fleet, &self.lc, scheme)?;
        let gap = terms.gap?;
        let init = self.reference()?.w_star.norm_sq();
        let mut out = vec![0.5 * self.lc.smoothness * init];
        if rounds > 0 {
            out.extend(bounds::convergence_curve(&self.lc, self.cfg.learning_rate, terms.g, gap, rounds - 1, init)?);
        }
        Ok(out)
    }
}

fn scenario_distances(sc: &Scenario) -> Result<Vec<f64>> {
    match &sc.distances_m {
        Some(d) if d.len() != sc.system.num_devices => {
            Err(Error::DimensionMismatch { expected: sc.system.num_devices, found: d.len() })
        }
        Some(d) => Ok(d.clone()),
        None => place_devices(sc.system.num_devices, sc.area_half_side_m, sc.min_distance_m, sc.seed),
    }
}

fn uniform_probs(cfg: &SystemConfig) -> Result<Vec<f64>> {
    Ok(SamplingPlan::uniform(cfg.num_devices, cfg.participants_per_round)?.probs().to_vec())
}

/// `r_k` proportional to `weights`, summing to `n`, capped at 1 with the
/// excess spread proportionally over the uncapped devices until nothing
/// exceeds 1.
pub fn proportional_plan(weights: &[f64], n: usize) -> Result<SamplingPlan> {
    let k = weights.len();
    if n == 0 || n > k {
        return Err(Error::arg(format!("need 1 <= N <= K, got N = {n}, K = {k}")));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::arg("plan weights must be positive and finite"));
    }
    let mut capped = vec![false; k];
    let mut r = vec![1.0; k];
    loop {
        let budget = (n - capped.iter().filter(|&&c| c).count()) as f64;
        let total: f64 = weights.iter().zip(&capped).filter(|(_, &c)| !c).map(|(w, _)| w).sum();
        let mut changed = false;
        for i in 0..k {
            if capped[i] {
                continue;
            }
            r[i] = budget * weights[i] / total;
            if r[i] >= 1.0 {
                r[i] = 1.0;
                capped[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    SamplingPlan::new(r, n)
}

/// Baseline plans: uniform `N/K`, or proportional to `alpha_k`, to the
/// path-loss amplitude `d_k^(-alpha/2)`, or to `alpha_k d_k^(alpha/2)`.
pub fn baseline_plan(kind: &PlanSpec, cfg: &SystemConfig, fleet: &[DeviceProfile], n: usize) -> Result<SamplingPlan> {
    let weights: Vec<f64> = match kind {
        PlanSpec::Uniform => return SamplingPlan::uniform(fleet.len(), n),
        PlanSpec::LearningOriented => config::weights(fleet),
        PlanSpec::ChannelAware => fleet.iter().map(|d| cfg.large_scale_gain(d.distance_m).sqrt()).collect(),
        PlanSpec::MinDistortion => {
            fleet.iter().map(|d| d.weight / cfg.large_scale_gain(d.distance_m).sqrt()).collect()
        }
        other => return Err(Error::arg(format!("'{}' is not a baseline plan", other.name()))),
    };
    proportional_plan(&weights, n)
}

/// Turns a plan description into concrete inclusion probabilities. The
/// optimised plan depends on the scheme.
pub fn resolve_plan(
    cfg: &SystemConfig,
    fleet: &[DeviceProfile],
    lc: &LearningConstants,
    spec: &PlanSpec,
    scheme: Scheme,
) -> Result<SamplingPlan> {
    let n = cfg.participants_per_round;
    match spec {
        PlanSpec::Explicit(r) => SamplingPlan::new(r.clone(), n),
        PlanSpec::Optimized => {
            let res = match scheme {
                Scheme::Digital => optimize_inclusion_digital(
                    &config::weights(fleet),
                    &bounds::success_probs(cfg, fleet),
                    n,
                    OPTIMIZER_TOL,
                )?,
                Scheme::Analog => dinkelbach_analog(cfg, fleet, lc, OPTIMIZER_TOL, DINKELBACH_MAX_ITER)?,
            };
            SamplingPlan::new(res.probs, n)
        }
        kind => baseline_plan(kind, cfg, fleet, n),
    }
}

/// Per-scheme closed-form terms for one fleet: virtual weight, noise or
/// quantisation term, the gap (or why it is unavailable) and the noiseless
/// limit of the gap.
#[derive(Debug)]
pub struct SchemeTerms {
    pub g: f64,
    pub phi: f64,
    pub gap: Result<f64>,
    pub gap_inf: Result<f64>,
}

pub fn scheme_terms(
    cfg: &SystemConfig,
    fleet: &[DeviceProfile],
    lc: &LearningConstants,
    scheme: Scheme,
) -> Result<SchemeTerms> {
    let alpha = config::weights(fleet);
    let r = config::inclusion_probs(fleet);
    let eta = cfg.learning_rate;
    Ok(match scheme {
        Scheme::Digital => {
            let p = bounds::success_probs(cfg, fleet);
            let phi = quantizer_variance_bound(lc.quant_range_sq, cfg.quant_bits);
            let g_inf = virtual_weight_digital(&alpha, &r, &vec![1.0; alpha.len()])?;
            let gap_inf = gap_digital(lc, eta, g_inf, phi);
            if p.iter().any(|&v| !(v > 0.0)) {
                SchemeTerms { g: f64::INFINITY, phi, gap: Err(Error::arg("every packet is lost")), gap_inf }
            } else {
                let g = virtual_weight_digital(&alpha, &r, &p)?;
                SchemeTerms { g, phi, gap: gap_digital(lc, eta, g, phi), gap_inf }
            }
        }
        Scheme::Analog => {
            let g = virtual_weight_analog(&alpha, &r, cfg.csi_correlation, cfg.trunc_threshold)?;
            let phi = noise_term(cfg, &alpha, &r, &config::distances(fleet), lc, cfg.power_mode)?;
            SchemeTerms { g, phi, gap: gap_analog(lc, eta, g, phi), gap_inf: gap_analog(lc, eta, g, 0.0) }
        }
    })
}

/// One replication of training.
///
/// `loss`, `gap` and `cumulative_delay_s` have `rounds + 1` entries, index 0
/// being the zero initial model; the bitmaps have one entry per round.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub scheme: Scheme,
    pub plan: String,
    pub seed: u64,
    pub replication: usize,
    pub config_hash: String,
    pub loss: Vec<f64>,
    pub gap: Vec<f64>,
    pub participated: Vec<Vec<bool>>,
    pub delivered: Vec<Vec<bool>>,
    pub cumulative_delay_s: Vec<f64>,
    /// Held-out accuracy of the final model.
    pub final_accuracy: f64,
}

impl TrainTrace {
    pub fn final_gap(&self) -> f64 {
        *self.gap.last().expect("trace has an initial entry")
    }
}

enum Link {
    Digital(DigitalLink),
    Analog(AnalogLink),
}

/// Runs `replications` independent training runs of `rounds` rounds each.
/// Round `m` of replication `i` draws from its own stream keyed by
/// `(seed, i, m)`, so results do not depend on `exec`.
#[allow(clippy::too_many_arguments)]
pub fn run_experiment(
    problem: &Problem,
    scheme: Scheme,
    plan: &SamplingPlan,
    plan_name: &str,
    rounds: usize,
    replications: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<TrainTrace>> {
    let cfg = &problem.cfg;
    if plan.size() != cfg.participants_per_round {
        return Err(Error::InvalidPlan(format!(
            "plan selects {} devices, config expects {}",
            plan.size(),
            cfg.participants_per_round
        )));
    }
    if plan.num_devices() != problem.fleet.len() {
        return Err(Error::DimensionMismatch { expected: problem.fleet.len(), found: plan.num_devices() });
    }
    let reference = problem.reference()?;
    let fleet = problem.fleet_with(plan)?;
    let link = match scheme {
        Scheme::Digital => Link::Digital(DigitalLink::new(cfg, &fleet)),
        Scheme::Analog => Link::Analog(AnalogLink::new(cfg, &fleet, &problem.lc)?),
    };
    let data = problem.datasets()?;
    let weights = problem.weights();
    let reg = problem.lc.strong_convexity;
    let d = cfg.model_dim;

    let one = |rep: usize| -> Result<TrainTrace> {
        let mut w = ModelVector::zeros(d);
        let mut loss = Vec::with_capacity(rounds + 1);
        let mut gap = Vec::with_capacity(rounds + 1);
        let mut delay = Vec::with_capacity(rounds + 1);
        let mut participated = Vec::with_capacity(rounds);
        let mut delivered = Vec::with_capacity(rounds);
        let f0 = global_loss(&w, &data, &weights, reg)?;
        loss.push(f0);
        gap.push(f0 - reference.f_star);
        delay.push(0.0);
        for m in 0..rounds {
            let mut rng = stream(seed, Purpose::Training, &[rep as u64, m as u64]);
            let chosen = sample_participants(plan, &mut rng);
            let est: GradientEstimate = match &link {
                Link::Digital(l) => l.round(&w, &fleet, &chosen, &problem.lc, cfg.participants_per_round, &mut rng)?,
                Link::Analog(l) => l.round(&w, &fleet, &chosen, cfg, &problem.lc, &mut rng)?,
            };
            w.axpy(-cfg.learning_rate, &est.vector);
            if !w.is_finite() {
                return Err(Error::NonConvergence { what: "training (model diverged)", iterations: m + 1 });
            }
            let f = global_loss(&w, &data, &weights, reg)?;
            loss.push(f);
            gap.push(f - reference.f_star);
            delay.push(delay[m] + est.round_delay_s);
            participated.push(est.participated);
            delivered.push(est.delivered);
        }
        Ok(TrainTrace {
            scheme,
            plan: plan_name.to_string(),
            seed,
            replication: rep,
            config_hash: problem.config_hash.clone(),
            loss,
            gap,
            participated,
            delivered,
            cumulative_delay_s: delay,
            final_accuracy: accuracy(&w, &reference.holdout)?,
        })
    };
    exec.map(replications, one).into_iter().collect()
}

/// Full-participation gradient descent on clipped local gradients with an
/// error-free uplink. Returns the gap after `0..=rounds` updates.
pub fn run_ideal(problem: &Problem, rounds: usize) -> Result<Vec<f64>> {
    let data = problem.datasets()?;
    let weights = problem.weights();
    let mut w = ModelVector::zeros(problem.cfg.model_dim);
    let mut out = vec![problem.gap(&w)?];
    for _ in 0..rounds {
        let grads: Vec<ModelVector> =
            data.iter().map(|ds| local_gradient(&w, ds, &problem.lc)).collect::<Result<_>>()?;
        let g = global_gradient(&grads, &weights)?;
        w.axpy(-problem.cfg.learning_rate, &g);
        out.push(problem.gap(&w)?);
    }
    Ok(out)
}

/// Mean and standard error per round over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct GapSummary {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

pub fn summarize(traces: &[TrainTrace]) -> Result<GapSummary> {
    let first = traces.first().ok_or_else(|| Error::arg("no traces to summarise"))?;
    let len = first.gap.len();
    if traces.iter().any(|t| t.gap.len() != len) {
        return Err(Error::arg("traces differ in length"));
    }
    let n = traces.len() as f64;
    let mut mean = vec![0.0; len];
    let mut stderr = vec![0.0; len];
    for m in 0..len {
        let mu = traces.iter().map(|t| t.gap[m]).sum::<f64>() / n;
        let var = if traces.len() > 1 {
            traces.iter().map(|t| (t.gap[m] - mu).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        mean[m] = mu;
        stderr[m] = (var / n).sqrt();
    }
    Ok(GapSummary { mean, stderr })
}

pub const TRACE_COLUMNS: [&str; 9] = [
    "scheme",
    "plan",
    "replication",
    "round",
    "loss",
    "gap",
    "cumulative_delay_s",
    "participants",
    "delivered",
];

fn bitmap(v: &[bool]) -> String {
    v.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// One row per (replication, round); round 0 is the initial model.
pub fn trace_table(config_hash: &str, traces: &[TrainTrace]) -> Result<Table> {
    let mut t = Table::new(config_hash, &TRACE_COLUMNS);
    for tr in traces {
        for m in 0..tr.gap.len() {
            let (part, deliv) =
                if m == 0 { (String::new(), String::new()) } else { (bitmap(&tr.participated[m - 1]), bitmap(&tr.delivered[m - 1])) };
            t.push_tagged(
                &tr.config_hash,
                vec![
                    tr.scheme.to_string(),
                    tr.plan.clone(),
                    tr.replication.to_string(),
                    m.to_string(),
                    fmt_f64(tr.loss[m]),
                    fmt_f64(tr.gap[m]),
                    fmt_f64(tr.cumulative_delay_s[m]),
                    part,
                    deliv,
                ],
            )?;
        }
    }
    Ok(t)
}

/// One (scheme, plan) line of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub scheme: Scheme,
    pub plan: String,
    pub power_budget_w: f64,
    pub delay_target_s: f64,
    pub replications: usize,
    pub final_gap_mean: f64,
    pub final_gap_stderr: f64,
    /// Closed-form bound at the last round.
    pub bound_final: f64,
    /// Asymptotic gap `G_D` or `G_A`.
    pub bound_gap: f64,
    pub mean_round_delay_s: f64,
    pub accuracy_mean: f64,
    pub inclusion_probs: Vec<f64>,
}

pub const COMPARISON_COLUMNS: [&str; 12] = [
    "scheme",
    "plan",
    "power_budget_w",
    "delay_target_s",
    "replications",
    "final_gap_mean",
    "final_gap_stderr",
    "bound_final",
    "bound_gap",
    "mean_round_delay_s",
    "accuracy_mean",
    "inclusion_probs",
];

/// Simulates every plan under both schemes. Both schemes see the same
/// `SystemConfig`, so delay target and power budget are shared.
pub fn compare_schemes(
    problem: &Problem,
    plans: &[PlanSpec],
    rounds: usize,
    replications: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<ComparisonRow>> {
    if plans.is_empty() {
        return Err(Error::arg("no plans to compare"));
    }
    if replications == 0 {
        return Err(Error::arg("need at least one replication"));
    }
    let mut rows = Vec::new();
    for scheme in Scheme::ALL {
        for spec in plans {
            let plan = problem.plan(spec, scheme)?;
            let traces = run_experiment(problem, scheme, &plan, spec.name(), rounds, replications, seed, exec)?;
            let summary = summarize(&traces)?;
            let terms = scheme_terms(&problem.cfg, &problem.fleet_with(&plan)?, &problem.lc, scheme)?;
            let bound_final = match problem.bound_curve(scheme, &plan, rounds) {
                Ok(c) => c[rounds],
                Err(_) => f64::INFINITY,
            };
            let n = traces.len() as f64;
            let delay = traces.iter().map(|t| t.cumulative_delay_s[rounds]).sum::<f64>() / n;
            rows.push(ComparisonRow {
                scheme,
                plan: spec.name().to_string(),
                power_budget_w: problem.cfg.power_budget_w,
                delay_target_s: problem.cfg.delay_target_s,
                replications,
                final_gap_mean: summary.mean[rounds],
                final_gap_stderr: summary.stderr[rounds],
                bound_final,
                bound_gap: terms.gap.unwrap_or(f64::INFINITY),
                mean_round_delay_s: if rounds == 0 { 0.0 } else { delay / rounds as f64 },
                accuracy_mean: traces.iter().map(|t| t.final_accuracy).sum::<f64>() / n,
                inclusion_probs: plan.probs().to_vec(),
            });
        }
    }
    Ok(rows)
}

fn join_probs(r: &[f64]) -> String {
    r.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(";")
}

pub fn comparison_table(config_hash: &str, rows: &[ComparisonRow]) -> Result<Table> {
    let mut t = Table::new(config_hash, &COMPARISON_COLUMNS);
    for r in rows {
        t.push(vec![
            r.scheme.to_string(),
            r.plan.clone(),
            fmt_f64(r.power_budget_w),
            fmt_f64(r.delay_target_s),
            r.replications.to_string(),
            fmt_f64(r.final_gap_mean),
            fmt_f64(r.final_gap_stderr),
            fmt_f64(r.bound_final),
            fmt_f64(r.bound_gap),
            fmt_f64(r.mean_round_delay_s),
            fmt_f64(r.accuracy_mean),
            join_probs(&r.inclusion_probs),
        ])?;
    }
    Ok(t)
}

/// Swept parameter. Grid values are: transmit power in dBm, participants
/// per round, CSI correlation, quantisation bits, truncation threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Power,
    Devices,
    Rho,
    Bits,
    Threshold,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "power" => Ok(SweepAxis::Power),
            "devices" => Ok(SweepAxis::Devices),
            "rho" => Ok(SweepAxis::Rho),
            "bits" => Ok(SweepAxis::Bits),
            "threshold" => Ok(SweepAxis::Threshold),
            other => Err(Error::arg(format!("unknown sweep axis '{other}'"))),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::Power => "power",
            SweepAxis::Devices => "devices",
            SweepAxis::Rho => "rho",
            SweepAxis::Bits => "bits",
            SweepAxis::Threshold => "threshold",
        })
    }
}

/// Applies one grid value. `Devices` changes only `N`: subbands and `T_max`
/// stay fixed, so `theta` grows with `N`, and `N > M` is flagged.
pub fn apply_axis(cfg: &SystemConfig, axis: SweepAxis, value: f64) -> Result<SystemConfig> {
    let mut c = cfg.clone();
    let whole = |v: f64| -> Result<u64> {
        if v >= 1.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
            Ok(v as u64)
        } else {
            Err(Error::arg(format!("{axis} grid needs positive integers, got {value}")))
        }
    };
    match axis {
        SweepAxis::Power => c.power_budget_w = config::dbm_to_watts(value),
        SweepAxis::Devices => c.participants_per_round = whole(value)? as usize,
        SweepAxis::Rho => c.csi_correlation = value,
        SweepAxis::Bits => c.quant_bits = whole(value)? as u32,
        SweepAxis::Threshold => c.trunc_threshold = value,
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub scheme: Scheme,
    pub feasible: bool,
    pub g: f64,
    /// `phi(b)` for digital, the receiver-noise term for analog.
    pub phi: f64,
    pub bound_gap: f64,
    /// Gap with every packet delivered (digital) or without receiver noise
    /// (analog).
    pub bound_gap_limit: f64,
    pub sim_gap_mean: f64,
    pub sim_gap_stderr: f64,
    pub note: String,
}

pub const SWEEP_COLUMNS: [&str; 11] = [
    "axis",
    "value",
    "scheme",
    "feasible",
    "g",
    "phi",
    "bound_gap",
    "bound_gap_limit",
    "sim_gap_mean",
    "sim_gap_stderr",
    "note",
];

fn sweep_point(
    problem: &Problem,
    cfg: &SystemConfig,
    spec: &PlanSpec,
    scheme: Scheme,
    sim: Option<(usize, usize, u64, Exec)>,
) -> Result<(SchemeTerms, Option<GapSummary>)> {
    let violations = cfg.violations();
    if !violations.is_empty() {
        return Err(Error::arg(violations.join("; ")));
    }
    let plan = resolve_plan(cfg, &problem.fleet, &problem.lc, spec, scheme)?;
    let fleet = config::with_probs(&problem.fleet, plan.probs())?;
    let terms = scheme_terms(cfg, &fleet, &problem.lc, scheme)?;
    let summary = match sim {
        Some((rounds, reps, seed, exec)) => {
            let p = Problem { cfg: cfg.clone(), fleet: problem.fleet.clone(), ..problem.clone() };
            let traces = run_experiment(&p, scheme, &plan, spec.name(), rounds, reps, seed, exec)?;
            Some(summarize(&traces)?)
        }
        None => None,
    };
    Ok((terms, summary))
}

/// One row per (grid value, scheme). Bounds only when `replications == 0`.
/// Points whose parameters are invalid or infeasible are flagged in `note`.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    problem: &Problem,
    axis: SweepAxis,
    grid: &[f64],
    schemes: &[Scheme],
    spec: &PlanSpec,
    rounds: usize,
    replications: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::arg("empty sweep grid"));
    }
    if schemes.is_empty() {
        return Err(Error::arg("no schemes to sweep"));
    }
    let points: Vec<(f64, Scheme)> = grid.iter().flat_map(|&v| schemes.iter().map(move |&s| (v, s))).collect();
    let sim = (replications > 0).then_some((rounds, replications, seed, exec));
    let rows = exec.map(points.len(), |i| {
        let (value, scheme) = points[i];
        let mut row = SweepRow {
            axis,
            value,
            scheme,
            feasible: false,
            g: f64::NAN,
            phi: f64::NAN,
            bound_gap: f64::INFINITY,
            bound_gap_limit: f64::INFINITY,
            sim_gap_mean: f64::NAN,
            sim_gap_stderr: f64::NAN,
            note: String::new(),
        };
        let outcome = apply_axis(&problem.cfg, axis, value).and_then(|cfg| sweep_point(problem, &cfg, spec, scheme, sim));
        match outcome {
            Ok((terms, summary)) => {
                row.g = terms.g;
                row.phi = terms.phi;
                row.bound_gap_limit = terms.gap_inf.unwrap_or(f64::INFINITY);
                match terms.gap {
                    Ok(gap) => {
                        row.feasible = true;
                        row.bound_gap = gap;
                    }
                    Err(e) => row.note = e.to_string(),
                }
                if let Some(s) = summary {
                    let last = s.mean.len() - 1;
                    row.sim_gap_mean = s.mean[last];
                    row.sim_gap_stderr = s.stderr[last];
                }
            }
            Err(e) => row.note = e.to_string(),
        }
        row
    });
    Ok(rows)
}

pub fn sweep_table(config_hash: &str, rows: &[SweepRow]) -> Result<Table> {
    let mut t = Table::new(config_hash, &SWEEP_COLUMNS);
    for r in rows {
        t.push(vec![
            r.axis.to_string(),
            fmt_f64(r.value),
            r.scheme.to_string(),
            r.feasible.to_string(),
            fmt_f64(r.g),
            fmt_f64(r.phi),
            fmt_f64(r.bound_gap),
            fmt_f64(r.bound_gap_limit),
            fmt_f64(r.sim_gap_mean),
            fmt_f64(r.sim_gap_stderr),
            r.note.clone(),
        ])?;
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn small_scenario() -> Scenario {
        let mut sc = Scenario::default();
        sc.set("num_devices", "6").unwrap();
        sc.set("participants_per_round", "3").unwrap();
        sc.set("num_subbands", "3").unwrap();
        sc.set("model_dim", "6").unwrap();
        sc.set("delay_target_s", "auto").unwrap();
        sc.set("max_samples", "60").unwrap();
        sc.set("probe_models", "4").unwrap();
        sc.set("holdout_samples", "200").unwrap();
        sc
    }

    #[test]
    fn placement_respects_annulus_and_square() {
        let d = place_devices(500, 100.0, 20.0, 3).unwrap();
        assert_eq!(d.len(), 500);
        assert!(d.iter().all(|&v| (20.0..=100.0 * 2f64.sqrt()).contains(&v)));
        assert_eq!(d, place_devices(500, 100.0, 20.0, 3).unwrap());
        assert!(place_devices(3, 10.0, 10.0, 1).is_err());
    }

    #[test]
    fn uniform_baseline() {
        let w = vec![1.0; 20];
        let p = proportional_plan(&w, 10).unwrap();
        assert!(p.probs().iter().all(|&r| r == 0.5));
    }

    #[test]
    fn capping_example() {
        let p = proportional_plan(&[10.0, 1.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(p.probs()[0], 1.0);
        for &r in &p.probs()[1..] {
            assert_relative_eq!(r, 1.0 / 3.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn baselines_follow_their_weights() {
        let sc = small_scenario();
        let problem = Problem::from_scenario(&sc).unwrap();
        let n = problem.cfg.participants_per_round;
        for kind in [PlanSpec::Uniform, PlanSpec::LearningOriented, PlanSpec::ChannelAware, PlanSpec::MinDistortion] {
            let plan = baseline_plan(&kind, &problem.cfg, &problem.fleet, n).unwrap();
            assert_relative_eq!(plan.probs().iter().sum::<f64>(), n as f64, max_relative = 1e-12);
        }
        let near = problem.fleet.iter().enumerate().min_by(|a, b| a.1.distance_m.total_cmp(&b.1.distance_m)).unwrap().0;
        let chan = baseline_plan(&PlanSpec::ChannelAware, &problem.cfg, &problem.fleet, n).unwrap();
        assert!(chan.probs().iter().all(|&r| r <= chan.probs()[near]));
        assert!(baseline_plan(&PlanSpec::Optimized, &problem.cfg, &problem.fleet, n).is_err());
    }

    #[test]
    fn equal_weights_give_uniform_learning_plan() {
        let fleet = DeviceProfile::from_counts(&[5; 8], &[100.0; 8], &[0.5; 8]).unwrap();
        let cfg = SystemConfig { num_devices: 8, participants_per_round: 4, ..SystemConfig::convex() };
        let plan = baseline_plan(&PlanSpec::LearningOriented, &cfg, &fleet, 4).unwrap();
        for &r in plan.probs() {
            assert_relative_eq!(r, 0.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn experiment_is_deterministic_across_exec() {
        let problem = Problem::from_scenario(&small_scenario()).unwrap();
        let plan = problem.plan(&PlanSpec::Uniform, Scheme::Digital).unwrap();
        for scheme in Scheme::ALL {
            let a = run_experiment(&problem, scheme, &plan, "uniform", 15, 3, 9, Exec::Serial).unwrap();
            let b = run_experiment(&problem, scheme, &plan, "uniform", 15, 3, 9, Exec::Parallel).unwrap();
            assert_eq!(a, b);
            assert_ne!(a[0].gap, a[1].gap);
            for t in &a {
                assert_eq!(t.gap.len(), 16);
                assert_eq!(t.participated.len(), 15);
                assert!(t.gap.iter().all(|&g| g >= -1e-9));
                assert!(t.cumulative_delay_s.windows(2).all(|w| w[1] > w[0]));
                assert!(t.participated.iter().all(|p| p.iter().filter(|&&b| b).count() == 3));
            }
        }
    }

    #[test]
    fn bounds_only_problem_has_no_reference() {
        let sc = Scenario::preset("reference").unwrap();
        let p = Problem::for_bounds(&sc).unwrap();
        assert!(p.reference.is_none());
        assert_eq!(p.lc, LearningConstants::reference());
        assert_relative_eq!(p.weights().iter().sum::<f64>(), 1.0, max_relative = 1e-12);
        let plan = p.plan(&PlanSpec::Uniform, Scheme::Digital).unwrap();
        assert!(run_experiment(&p, Scheme::Digital, &plan, "uniform", 1, 1, 1, Exec::Serial).is_err());
    }

    #[test]
    fn compare_rejects_empty_plan_list() {
        let problem = Problem::from_scenario(&small_scenario()).unwrap();
        assert!(compare_schemes(&problem, &[], 5, 2, 1, Exec::Serial).is_err());
    }

    #[test]
    fn rho_axis_scales_noise_term() {
        let problem = Problem::from_scenario(&small_scenario()).unwrap();
        let rows = sweep(&problem, SweepAxis::Rho, &[0.8, 0.4], &[Scheme::Analog], &PlanSpec::Uniform, 0, 0, 1, Exec::Serial)
            .unwrap();
        assert_relative_eq!(rows[1].phi / rows[0].phi, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn sweep_flags_bad_points() {
        let problem = Problem::from_scenario(&small_scenario()).unwrap();
        let rows =
            sweep(&problem, SweepAxis::Bits, &[0.0, 4.0], &[Scheme::Digital], &PlanSpec::Uniform, 0, 0, 1, Exec::Serial).unwrap();
        assert!(!rows[0].feasible && !rows[0].note.is_empty());
        assert!(rows[1].note.is_empty(), "{:?}", rows[1]);
    }

    proptest! {
        #[test]
        fn capped_plans_sum_to_n(
            w in prop::collection::vec(0.01f64..100.0, 2..30),
            frac in 0.0f64..1.0,
        ) {
            let k = w.len();
            let n = 1 + ((k - 1) as f64 * frac) as usize;
            let plan = proportional_plan(&w, n).unwrap();
            let sum: f64 = plan.probs().iter().sum();
            prop_assert!((sum - n as f64).abs() < 1e-9);
            prop_assert!(plan.probs().iter().all(|&r| r > 0.0 && r <= 1.0));
            // uncapped entries keep their proportions
            let free: Vec<usize> = (0..k).filter(|&i| plan.probs()[i] < 1.0).collect();
            for pair in free.windows(2) {
                let (i, j) = (pair[0], pair[1]);
                let lhs = plan.probs()[i] * w[j];
                let rhs = plan.probs()[j] * w[i];
                prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()));
            }
        }
    }
}
