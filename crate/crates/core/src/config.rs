//! System configuration, shared domain types and feasibility checks.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::bounds;
use crate::channel;
use crate::error::{Error, Result};
use crate::learn::{LocalDataset, SyntheticSpec};

/// Floor applied to every inclusion probability wherever `1/r_k` appears.
pub const MIN_INCLUSION_PROB: f64 = 1e-6;

/// Tolerance on `sum r_k = N` and `sum alpha_k = 1`.
pub const SUM_TOL: f64 = 1e-9;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PowerMode {
    Max,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Digital,
    Analog,
}

impl Scheme {
    pub const ALL: [Scheme; 2] = [Scheme::Digital, Scheme::Analog];
}

macro_rules! keyword_enum {
    ($ty:ty { $($name:literal => $variant:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($name => Ok($variant),)+
                    other => Err(Error::arg(format!(
                        "unknown {} '{other}'", stringify!($ty).to_ascii_lowercase()
                    ))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $variant { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

keyword_enum!(PowerMode { "max" => PowerMode::Max, "average" => PowerMode::Average });
keyword_enum!(Scheme { "digital" => Scheme::Digital, "analog" => Scheme::Analog });

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub bandwidth_hz: f64,
    pub noise_density_w_per_hz: f64,
    pub pathloss_exponent: f64,
    pub power_budget_w: f64,
    pub power_mode: PowerMode,
    pub delay_target_s: f64,
    pub num_subbands: usize,
    pub quant_bits: u32,
    pub side_info_bits: u64,
    pub trunc_threshold: f64,
    pub csi_correlation: f64,
    pub learning_rate: f64,
    pub model_dim: usize,
    pub participants_per_round: usize,
    pub num_devices: usize,
    /// Distance at which the large-scale gain is 1; gain is `(d/d_ref)^-alpha`.
    pub ref_distance_m: f64,
}

impl SystemConfig {
    /// Paper-scale defaults: 20 devices, 10 participants, 1 MHz, 0 dBm,
    /// -80 dBm/Hz, b = 8, gamma_th = 0.5, d = 23860 and `T_max = dM/B`.
    pub fn reference() -> Self {
        let mut cfg = SystemConfig {
            bandwidth_hz: 1e6,
            noise_density_w_per_hz: dbm_to_watts(-80.0),
            pathloss_exponent: 3.0,
            power_budget_w: dbm_to_watts(0.0),
            power_mode: PowerMode::Max,
            delay_target_s: 0.0,
            num_subbands: 10,
            quant_bits: 8,
            side_info_bits: 64,
            trunc_threshold: 0.5,
            csi_correlation: 0.9,
            learning_rate: 0.001,
            model_dim: 23_860,
            participants_per_round: 10,
            num_devices: 20,
            ref_distance_m: 1000.0,
        };
        cfg.delay_target_s = cfg.analog_delay_s();
        cfg
    }

    /// Desk-scale fixture for Monte Carlo runs: 10 devices, 5 per round,
    /// d = 20.
    pub fn convex() -> Self {
        let mut cfg = SystemConfig {
            model_dim: 20,
            num_devices: 10,
            participants_per_round: 5,
            num_subbands: 5,
            learning_rate: 0.02,
            ..Self::reference()
        };
        cfg.delay_target_s = cfg.analog_delay_s();
        cfg
    }

    /// Per-round analog delay `T_A = d M / B`.
    pub fn analog_delay_s(&self) -> f64 {
        self.model_dim as f64 * self.num_subbands as f64 / self.bandwidth_hz
    }

    /// Large-scale power gain of a device at `distance_m`.
    pub fn large_scale_gain(&self, distance_m: f64) -> f64 {
        (distance_m / self.ref_distance_m).powf(-self.pathloss_exponent)
    }

    /// Every violated invariant, as human-readable messages.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_density_w_per_hz", self.noise_density_w_per_hz),
            ("pathloss_exponent", self.pathloss_exponent),
            ("power_budget_w", self.power_budget_w),
            ("delay_target_s", self.delay_target_s),
            ("trunc_threshold", self.trunc_threshold),
            ("learning_rate", self.learning_rate),
            ("ref_distance_m", self.ref_distance_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{name} must be positive and finite"));
            }
        }
        let counts = [
            ("num_subbands", self.num_subbands),
            ("model_dim", self.model_dim),
            ("participants_per_round", self.participants_per_round),
            ("num_devices", self.num_devices),
        ];
        for (name, v) in counts {
            if v == 0 {
                out.push(format!("{name} must be positive"));
            }
        }
        if !(1..=32).contains(&self.quant_bits) {
            out.push("quant_bits must lie in 1..=32".into());
        }
        if self.side_info_bits == 0 {
            out.push("side_info_bits must be positive".into());
        }
        if !(self.csi_correlation > 0.0 && self.csi_correlation <= 1.0) {
            out.push("csi_correlation must lie in (0, 1]".into());
        }
        if self.participants_per_round > self.num_devices {
            out.push("participants_per_round must not exceed num_devices".into());
        }
        if self.participants_per_round > self.num_subbands {
            out.push("participants_per_round must not exceed num_subbands".into());
        }
        let t_a = self.analog_delay_s();
        if self.delay_target_s < t_a * (1.0 - 1e-12) {
            out.push(format!("delay_target_s must be at least d*M/B = {t_a}"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningConstants {
    pub strong_convexity: f64,
    pub smoothness: f64,
    pub grad_bound: f64,
    pub local_global_distance: f64,
    pub quant_range_sq: f64,
}

impl LearningConstants {
    /// `mu = 2`, `L = 8`, `gamma = 1`, `delta = 0.1`, `Delta^2 = 1`.
    pub fn reference() -> Self {
        LearningConstants {
            strong_convexity: 2.0,
            smoothness: 8.0,
            grad_bound: 1.0,
            local_global_distance: 0.1,
            quant_range_sq: 1.0,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("strong_convexity", self.strong_convexity),
            ("smoothness", self.smoothness),
            ("grad_bound", self.grad_bound),
            ("quant_range_sq", self.quant_range_sq),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{name} must be positive and finite"));
            }
        }
        if !(self.local_global_distance >= 0.0 && self.local_global_distance.is_finite()) {
            out.push("local_global_distance must be nonnegative".into());
        }
        if self.strong_convexity > self.smoothness {
            out.push("strong_convexity must not exceed smoothness".into());
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct DeviceProfile {
    pub weight: f64,
    pub distance_m: f64,
    pub inclusion_prob: f64,
    /// Local samples; `None` for fleets used only to evaluate bounds.
    pub dataset: Option<Arc<LocalDataset>>,
}

impl DeviceProfile {
    /// Builds a fleet with `alpha_k = D_k / D`.
    pub fn fleet(datasets: Vec<LocalDataset>, distances_m: &[f64], probs: &[f64]) -> Result<Vec<DeviceProfile>> {
        let k = datasets.len();
        if distances_m.len() != k {
            return Err(Error::DimensionMismatch { expected: k, found: distances_m.len() });
        }
        if probs.len() != k {
            return Err(Error::DimensionMismatch { expected: k, found: probs.len() });
        }
        let counts: Vec<usize> = datasets.iter().map(|d| d.len()).collect();
        let mut fleet = Self::from_counts(&counts, distances_m, probs)?;
        for (dev, ds) in fleet.iter_mut().zip(datasets) {
            dev.dataset = Some(Arc::new(ds));
        }
        Ok(fleet)
    }

    /// Data-less fleet with `alpha_k` from sample counts.
    pub fn from_counts(counts: &[usize], distances_m: &[f64], probs: &[f64]) -> Result<Vec<DeviceProfile>> {
        let k = counts.len();
        if distances_m.len() != k {
            return Err(Error::DimensionMismatch { expected: k, found: distances_m.len() });
        }
        if probs.len() != k {
            return Err(Error::DimensionMismatch { expected: k, found: probs.len() });
        }
        let total: usize = counts.iter().sum();
        if total == 0 || counts.contains(&0) {
            return Err(Error::arg("every device needs at least one sample"));
        }
        Ok(counts
            .iter()
            .zip(distances_m)
            .zip(probs)
            .map(|((&n, &distance_m), &inclusion_prob)| DeviceProfile {
                weight: n as f64 / total as f64,
                distance_m,
                inclusion_prob,
                dataset: None,
            })
            .collect())
    }

    pub fn data(&self) -> Result<&LocalDataset> {
        self.dataset.as_deref().ok_or_else(|| Error::arg("device carries no local dataset"))
    }

    /// `r_k` floored at [`MIN_INCLUSION_PROB`].
    pub fn safe_prob(&self) -> f64 {
        self.inclusion_prob.max(MIN_INCLUSION_PROB)
    }
}

pub fn weights(fleet: &[DeviceProfile]) -> Vec<f64> {
    fleet.iter().map(|d| d.weight).collect()
}

pub fn inclusion_probs(fleet: &[DeviceProfile]) -> Vec<f64> {
    fleet.iter().map(|d| d.inclusion_prob).collect()
}

pub fn distances(fleet: &[DeviceProfile]) -> Vec<f64> {
    fleet.iter().map(|d| d.distance_m).collect()
}

/// Returns a copy of `fleet` with inclusion probabilities replaced.
pub fn with_probs(fleet: &[DeviceProfile], probs: &[f64]) -> Result<Vec<DeviceProfile>> {
    if probs.len() != fleet.len() {
        return Err(Error::DimensionMismatch { expected: fleet.len(), found: probs.len() });
    }
    Ok(fleet
        .iter()
        .zip(probs)
        .map(|(d, &r)| DeviceProfile { inclusion_prob: r, ..d.clone() })
        .collect())
}

/// Learning-rate check `eta < mu / (2 L^2 g)` for one scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRateCheck {
    pub virtual_weight: f64,
    pub max_learning_rate: f64,
    pub feasible: bool,
}

impl LearningRateCheck {
    fn new(g: f64, eta: f64, lc: &LearningConstants) -> Self {
        let max = lc.strong_convexity / (2.0 * lc.smoothness * lc.smoothness * g);
        LearningRateCheck { virtual_weight: g, max_learning_rate: max, feasible: g.is_finite() && eta < max }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// Config, constant and fleet invariants that do not depend on the scheme.
    pub violations: Vec<String>,
    pub digital: Option<LearningRateCheck>,
    pub analog: Option<LearningRateCheck>,
}

impl ValidationReport {
    pub fn learning_rate(&self, scheme: Scheme) -> Option<&LearningRateCheck> {
        match scheme {
            Scheme::Digital => self.digital.as_ref(),
            Scheme::Analog => self.analog.as_ref(),
        }
    }

    /// All violations relevant to `scheme`.
    pub fn messages(&self, scheme: Scheme) -> Vec<String> {
        let mut out = self.violations.clone();
        match self.learning_rate(scheme) {
            Some(c) if !c.feasible => out.push(format!(
                "learning-rate condition violated for the {scheme} scheme: eta must be below {} (g = {})",
                c.max_learning_rate, c.virtual_weight
            )),
            Some(_) => {}
            None => out.push(format!("learning-rate condition for the {scheme} scheme could not be evaluated")),
        }
        out
    }

    pub fn passes(&self, scheme: Scheme) -> bool {
        self.messages(scheme).is_empty()
    }
}

/// Checks every invariant of the configuration, learning constants and fleet,
/// and the learning-rate condition of both schemes.
pub fn validate_config(cfg: &SystemConfig, fleet: &[DeviceProfile], lc: &LearningConstants) -> ValidationReport {
    let mut violations = cfg.violations();
    violations.extend(lc.violations());

    if fleet.len() != cfg.num_devices {
        violations.push(format!("fleet has {} devices but num_devices is {}", fleet.len(), cfg.num_devices));
    }
    let mut fleet_ok = !fleet.is_empty();
    for (k, dev) in fleet.iter().enumerate() {
        if !(dev.weight > 0.0 && dev.weight <= 1.0) {
            violations.push(format!("device {k}: weight must lie in (0, 1]"));
            fleet_ok = false;
        }
        if !(dev.distance_m > 0.0 && dev.distance_m.is_finite()) {
            violations.push(format!("device {k}: distance must be positive"));
            fleet_ok = false;
        }
        if !(dev.inclusion_prob > 0.0 && dev.inclusion_prob <= 1.0) {
            violations.push(format!("device {k}: inclusion probability must lie in (0, 1]"));
            fleet_ok = false;
        }
        if let Some(ds) = &dev.dataset {
            if ds.model_dim() != cfg.model_dim {
                violations.push(format!(
                    "device {k}: dataset model dimension {} differs from model_dim {}",
                    ds.model_dim(),
                    cfg.model_dim
                ));
            }
        }
    }
    let alpha_sum: f64 = fleet.iter().map(|d| d.weight).sum();
    if (alpha_sum - 1.0).abs() > SUM_TOL {
        violations.push(format!("dataset weights must sum to 1 (sum = {alpha_sum})"));
    }
    let r_sum: f64 = fleet.iter().map(|d| d.inclusion_prob).sum();
    if (r_sum - cfg.participants_per_round as f64).abs() > SUM_TOL {
        violations.push(format!("inclusion probabilities must sum to N (sum = {r_sum})"));
    }

    let (mut digital, mut analog) = (None, None);
    let numeric_ok = fleet_ok
        && cfg.csi_correlation > 0.0
        && cfg.csi_correlation <= 1.0
        && cfg.trunc_threshold > 0.0
        && lc.violations().is_empty();
    if numeric_ok {
        let alpha = weights(fleet);
        let r = inclusion_probs(fleet);
        let theta = channel::min_rate_param(cfg);
        let p: Vec<f64> = fleet
            .iter()
            .map(|d| channel::success_probability(cfg, d, theta, cfg.power_budget_w))
            .collect();
        if let Ok(g) = bounds::virtual_weight_digital(&alpha, &r, &p) {
            digital = Some(LearningRateCheck::new(g, cfg.learning_rate, lc));
        }
        if let Ok(g) = bounds::virtual_weight_analog(&alpha, &r, cfg.csi_correlation, cfg.trunc_threshold) {
            analog = Some(LearningRateCheck::new(g, cfg.learning_rate, lc));
        }
    }
    ValidationReport { violations, digital, analog }
}

/// How a run chooses its inclusion probabilities.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanSpec {
    Uniform,
    LearningOriented,
    ChannelAware,
    MinDistortion,
    Optimized,
    Explicit(Vec<f64>),
}

impl PlanSpec {
    pub fn name(&self) -> &'static str {
        match self {
            PlanSpec::Uniform => "uniform",
            PlanSpec::LearningOriented => "learning",
            PlanSpec::ChannelAware => "channel",
            PlanSpec::MinDistortion => "distortion",
            PlanSpec::Optimized => "optimized",
            PlanSpec::Explicit(_) => "explicit",
        }
    }
}

impl FromStr for PlanSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(PlanSpec::Uniform),
            "learning" => Ok(PlanSpec::LearningOriented),
            "channel" => Ok(PlanSpec::ChannelAware),
            "distortion" => Ok(PlanSpec::MinDistortion),
            "optimized" => Ok(PlanSpec::Optimized),
            other => Err(Error::arg(format!("unknown plan '{other}'"))),
        }
    }
}

/// Overrides for learning constants; unset fields are estimated from data.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LearningOverrides {
    pub smoothness: Option<f64>,
    pub grad_bound: Option<f64>,
    pub local_global_distance: Option<f64>,
    pub quant_range_sq: Option<f64>,
}

impl LearningOverrides {
    pub fn is_complete(&self) -> bool {
        self.smoothness.is_some()
            && self.grad_bound.is_some()
            && self.local_global_distance.is_some()
            && self.quant_range_sq.is_some()
    }

    pub fn apply(&self, mut lc: LearningConstants) -> LearningConstants {
        if let Some(v) = self.smoothness {
            lc.smoothness = v;
        }
        if let Some(v) = self.grad_bound {
            lc.grad_bound = v;
        }
        if let Some(v) = self.local_global_distance {
            lc.local_global_distance = v;
        }
        if let Some(v) = self.quant_range_sq {
            lc.quant_range_sq = v;
        }
        lc
    }
}

/// Everything needed to reproduce a run: system, data, placement, plan.
///
/// Parsed from `key = value` lines; `#` starts a comment. The optional
/// `preset` key (`convex` or `reference`) must come first and selects the
/// starting values. See [`Scenario::KEYS`] for the schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub preset: String,
    pub system: SystemConfig,
    /// `mu`, the l2 regulariser of the learning task.
    pub regularizer: f64,
    pub probe_models: usize,
    pub learning: LearningOverrides,
    pub data: SyntheticSpec,
    pub holdout_samples: usize,
    pub area_half_side_m: f64,
    pub min_distance_m: f64,
    pub distances_m: Option<Vec<f64>>,
    pub plan: PlanSpec,
    pub scheme: Scheme,
    pub rounds: usize,
    pub replications: usize,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::preset("convex").expect("built-in preset")
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| Error::arg(format!("{key}: {e}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| parse_num::<f64>(key, v)).collect()
}

fn render_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Scenario {
    /// Recognised keys, in canonical order.
    pub const KEYS: &'static [&'static str] = &[
        "preset",
        "bandwidth_hz",
        "noise_density_w_per_hz",
        "pathloss_exponent",
        "power_budget_w",
        "power_mode",
        "delay_target_s",
        "num_subbands",
        "quant_bits",
        "side_info_bits",
        "trunc_threshold",
        "csi_correlation",
        "learning_rate",
        "model_dim",
        "participants_per_round",
        "num_devices",
        "ref_distance_m",
        "regularizer",
        "probe_models",
        "smoothness",
        "grad_bound",
        "local_global_distance",
        "quant_range_sq",
        "classes_per_device",
        "min_samples",
        "max_samples",
        "cluster_radius",
        "noise_std",
        "positive_class",
        "holdout_samples",
        "area_half_side_m",
        "min_distance_m",
        "distances_m",
        "plan",
        "inclusion_probs",
        "scheme",
        "rounds",
        "replications",
        "seed",
    ];

    /// Accepted in input only; converted to the watt keys.
    pub const ALIASES: &'static [&'static str] = &["power_dbm", "noise_density_dbm_per_hz"];

    pub fn preset(name: &str) -> Result<Self> {
        let (system, regularizer) = match name {
            "convex" => (SystemConfig::convex(), 0.5),
            "reference" => (SystemConfig::reference(), LearningConstants::reference().strong_convexity),
            other => return Err(Error::arg(format!("unknown preset '{other}'"))),
        };
        let data = SyntheticSpec { feature_dim: system.model_dim - 1, ..SyntheticSpec::default() };
        let learning = if name == "reference" {
            let lc = LearningConstants::reference();
            LearningOverrides {
                smoothness: Some(lc.smoothness),
                grad_bound: Some(lc.grad_bound),
                local_global_distance: Some(lc.local_global_distance),
                quant_range_sq: Some(lc.quant_range_sq),
            }
        } else {
            LearningOverrides::default()
        };
        Ok(Scenario {
            preset: name.to_string(),
            system,
            regularizer,
            probe_models: 16,
            learning,
            data,
            holdout_samples: 1000,
            area_half_side_m: 500.0,
            min_distance_m: 50.0,
            distances_m: None,
            plan: PlanSpec::Uniform,
            scheme: Scheme::Digital,
            rounds: 200,
            replications: 10,
            seed: 1,
        })
    }

    /// Sets one key. `delay_target_s = auto` means `d M / B`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let s = &mut self.system;
        match key {
            "preset" => {
                let keep = (self.seed, self.replications);
                *self = Scenario::preset(v)?;
                (self.seed, self.replications) = keep;
            }
            "bandwidth_hz" => s.bandwidth_hz = parse_num(key, v)?,
            "noise_density_w_per_hz" => s.noise_density_w_per_hz = parse_num(key, v)?,
            "noise_density_dbm_per_hz" => s.noise_density_w_per_hz = dbm_to_watts(parse_num(key, v)?),
            "pathloss_exponent" => s.pathloss_exponent = parse_num(key, v)?,
            "power_budget_w" => s.power_budget_w = parse_num(key, v)?,
            "power_dbm" => s.power_budget_w = dbm_to_watts(parse_num(key, v)?),
            "power_mode" => s.power_mode = v.parse()?,
            "delay_target_s" => {
                s.delay_target_s = if v == "auto" { s.analog_delay_s() } else { parse_num(key, v)? }
            }
            "num_subbands" => s.num_subbands = parse_num(key, v)?,
            "quant_bits" => s.quant_bits = parse_num(key, v)?,
            "side_info_bits" => s.side_info_bits = parse_num(key, v)?,
            "trunc_threshold" => s.trunc_threshold = parse_num(key, v)?,
            "csi_correlation" => s.csi_correlation = parse_num(key, v)?,
            "learning_rate" => s.learning_rate = parse_num(key, v)?,
            "model_dim" => {
                s.model_dim = parse_num(key, v)?;
                if s.model_dim < 2 {
                    return Err(Error::arg("model_dim must be at least 2"));
                }
                self.data.feature_dim = s.model_dim - 1;
            }
            "participants_per_round" => s.participants_per_round = parse_num(key, v)?,
            "num_devices" => s.num_devices = parse_num(key, v)?,
            "ref_distance_m" => s.ref_distance_m = parse_num(key, v)?,
            "regularizer" => self.regularizer = parse_num(key, v)?,
            "probe_models" => self.probe_models = parse_num(key, v)?,
            "smoothness" => self.learning.smoothness = Some(parse_num(key, v)?),
            "grad_bound" => self.learning.grad_bound = Some(parse_num(key, v)?),
            "local_global_distance" => self.learning.local_global_distance = Some(parse_num(key, v)?),
            "quant_range_sq" => self.learning.quant_range_sq = Some(parse_num(key, v)?),
            "classes_per_device" => self.data.classes_per_device = parse_num(key, v)?,
            "min_samples" => self.data.min_samples = parse_num(key, v)?,
            "max_samples" => self.data.max_samples = parse_num(key, v)?,
            "cluster_radius" => self.data.cluster_radius = parse_num(key, v)?,
            "noise_std" => self.data.noise_std = parse_num(key, v)?,
            "positive_class" => self.data.positive_class = parse_num(key, v)?,
            "holdout_samples" => self.holdout_samples = parse_num(key, v)?,
            "area_half_side_m" => self.area_half_side_m = parse_num(key, v)?,
            "min_distance_m" => self.min_distance_m = parse_num(key, v)?,
            "distances_m" => self.distances_m = Some(parse_list(key, v)?),
            "plan" => self.plan = v.parse()?,
            "inclusion_probs" => self.plan = PlanSpec::Explicit(parse_list(key, v)?),
            "scheme" => self.scheme = v.parse()?,
            "rounds" => self.rounds = parse_num(key, v)?,
            "replications" => self.replications = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            other => return Err(Error::arg(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parses a config file body on top of the `convex` preset.
    pub fn parse(text: &str) -> Result<Self> {
        let mut sc = Scenario::default();
        sc.apply_text(text)?;
        Ok(sc)
    }

    /// Applies the lines of a config file body to `self`. A `preset` line
    /// is accepted only before any other key has changed a value.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let start = self.clone();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: "expected 'key = value'".into(),
            })?;
            let key = key.trim();
            if key == "preset" && *self != start {
                return Err(Error::Parse { line: idx + 1, message: "preset must precede other keys".into() });
            }
            self.set(key, value).map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; parsing it gives back `self`.
    pub fn render(&self) -> String {
        let s = &self.system;
        let l = &self.learning;
        let d = &self.data;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("preset", self.preset.clone());
        put("bandwidth_hz", s.bandwidth_hz.to_string());
        put("noise_density_w_per_hz", s.noise_density_w_per_hz.to_string());
        put("pathloss_exponent", s.pathloss_exponent.to_string());
        put("power_budget_w", s.power_budget_w.to_string());
        put("power_mode", s.power_mode.to_string());
        put("model_dim", s.model_dim.to_string());
        put("num_subbands", s.num_subbands.to_string());
        put("delay_target_s", s.delay_target_s.to_string());
        put("quant_bits", s.quant_bits.to_string());
        put("side_info_bits", s.side_info_bits.to_string());
        put("trunc_threshold", s.trunc_threshold.to_string());
        put("csi_correlation", s.csi_correlation.to_string());
        put("learning_rate", s.learning_rate.to_string());
        put("participants_per_round", s.participants_per_round.to_string());
        put("num_devices", s.num_devices.to_string());
        put("ref_distance_m", s.ref_distance_m.to_string());
        put("regularizer", self.regularizer.to_string());
        put("probe_models", self.probe_models.to_string());
        for (k, v) in [
            ("smoothness", l.smoothness),
            ("grad_bound", l.grad_bound),
            ("local_global_distance", l.local_global_distance),
            ("quant_range_sq", l.quant_range_sq),
        ] {
            if let Some(v) = v {
                put(k, v.to_string());
            }
        }
        put("classes_per_device", d.classes_per_device.to_string());
        put("min_samples", d.min_samples.to_string());
        put("max_samples", d.max_samples.to_string());
        put("cluster_radius", d.cluster_radius.to_string());
        put("noise_std", d.noise_std.to_string());
        put("positive_class", d.positive_class.to_string());
        put("holdout_samples", self.holdout_samples.to_string());
        put("area_half_side_m", self.area_half_side_m.to_string());
        put("min_distance_m", self.min_distance_m.to_string());
        if let Some(dist) = &self.distances_m {
            put("distances_m", render_list(dist));
        }
        match &self.plan {
            PlanSpec::Explicit(r) => put("inclusion_probs", render_list(r)),
            p => put("plan", p.name().to_string()),
        }
        put("scheme", self.scheme.to_string());
        put("rounds", self.rounds.to_string());
        put("replications", self.replications.to_string());
        put("seed", self.seed.to_string());
        out
    }

    /// First 16 hex digits of the SHA-256 of [`Scenario::render`].
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.render().as_bytes());
        hex::encode(&digest[..8])
    }
}
