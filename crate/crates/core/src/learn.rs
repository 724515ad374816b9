//! Desk-scale strongly convex learning task.
//!
//! Every device trains an l2-regularised binary logistic regression on its
//! own slice of a synthetic 10-cluster dataset. A sample is a feature vector
//! `x` of length `d - 1` and a label in `{0, 1}`; the model acts on the
//! augmented vector `x~ = (x, 1)` so the last model coordinate is a bias.
//! With `y = +1/-1` the per-sample loss is
//!
//! ```text
//! l(w, (x, y)) = log(1 + exp(-y x~^T w)) + (mu / 2) ||w||^2
//! ```
//!
//! which is `mu`-strongly convex and `(mu + ||x~||^2 / 4)`-smooth.

use std::io::{BufRead, Write};
use std::ops::{Deref, DerefMut};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::LearningConstants;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose, SimRng};

/// Number of Gaussian clusters ("classes") in the synthetic population.
pub const NUM_CLUSTERS: usize = 10;

/// Radius of the ball from which probe models are drawn.
pub const PROBE_RADIUS: f64 = 10.0;

/// Safety margin applied to the probed gradient bound and quantiser range.
pub const PROBE_MARGIN: f64 = 1.1;

const SOLVER_MAX_ITER: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelVector(Vec<f64>);

impl ModelVector {
    pub fn zeros(dim: usize) -> Self {
        ModelVector(vec![0.0; dim])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist_sq(&self, other: &ModelVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &[f64]) {
        for (a, b) in self.0.iter_mut().zip(other) {
            *a += scale * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for ModelVector {
    fn from(v: Vec<f64>) -> Self {
        ModelVector(v)
    }
}

impl Deref for ModelVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ModelVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Samples held by one device. Features are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDataset {
    feature_dim: usize,
    features: Vec<f64>,
    labels: Vec<u8>,
    clusters: Vec<u8>,
}

impl LocalDataset {
    pub fn new(feature_dim: usize, features: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        let clusters = vec![0; labels.len()];
        Self::with_clusters(feature_dim, features, labels, clusters)
    }

    pub fn with_clusters(
        feature_dim: usize,
        features: Vec<f64>,
        labels: Vec<u8>,
        clusters: Vec<u8>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::arg("dataset must hold at least one sample"));
        }
        if features.len() != feature_dim * labels.len() {
            return Err(Error::DimensionMismatch {
                expected: feature_dim * labels.len(),
                found: features.len(),
            });
        }
        if clusters.len() != labels.len() {
            return Err(Error::arg("cluster tags must match sample count"));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::arg("labels must be 0 or 1"));
        }
        Ok(LocalDataset { feature_dim, features, labels, clusters })
    }

    /// Concatenation of several datasets, i.e. the population behind `F(w)`.
    pub fn pooled<'a>(parts: impl IntoIterator<Item = &'a LocalDataset>) -> Result<Self> {
        let mut iter = parts.into_iter().peekable();
        let dim = iter.peek().ok_or_else(|| Error::arg("no datasets to pool"))?.feature_dim;
        let (mut features, mut labels, mut clusters) = (Vec::new(), Vec::new(), Vec::new());
        for ds in iter {
            if ds.feature_dim != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: ds.feature_dim });
            }
            features.extend_from_slice(&ds.features);
            labels.extend_from_slice(&ds.labels);
            clusters.extend_from_slice(&ds.clusters);
        }
        Self::with_clusters(dim, features, labels, clusters)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Dimension `d` of models trained on this data (features plus bias).
    pub fn model_dim(&self) -> usize {
        self.feature_dim + 1
    }

    pub fn sample(&self, i: usize) -> (&[f64], u8) {
        let f = self.feature_dim;
        (&self.features[i * f..(i + 1) * f], self.labels[i])
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn clusters(&self) -> &[u8] {
        &self.clusters
    }

    /// Distinct cluster ids present, ascending.
    pub fn cluster_set(&self) -> Vec<u8> {
        let mut set = self.clusters.clone();
        set.sort_unstable();
        set.dedup();
        set
    }

    fn check_model(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.model_dim() {
            return Err(Error::DimensionMismatch { expected: self.model_dim(), found: w.len() });
        }
        Ok(())
    }

    fn samples(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.features
            .chunks_exact(self.feature_dim.max(1))
            .take(self.labels.len())
            .zip(&self.labels)
            .map(|(x, &y)| (if self.feature_dim == 0 { &x[..0] } else { x }, signed(y)))
    }

    /// Writes one `label,cluster,x1,...` line per sample after a
    /// `# feature_dim=<n>` header.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# feature_dim={}", self.feature_dim)?;
        for i in 0..self.len() {
            let (x, y) = self.sample(i);
            write!(out, "{},{}", y, self.clusters[i])?;
            for v in x {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut dim = None;
        let (mut features, mut labels, mut clusters) = (Vec::new(), Vec::new(), Vec::new());
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            let parse_err = |message: String| Error::Parse { line: idx + 1, message };
            if let Some(rest) = line.strip_prefix("# feature_dim=") {
                dim = Some(rest.trim().parse::<usize>().map_err(|e| parse_err(e.to_string()))?);
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let dim = dim.ok_or_else(|| parse_err("missing feature_dim header".into()))?;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 2 {
                return Err(parse_err(format!("expected {} fields, found {}", dim + 2, fields.len())));
            }
            labels.push(fields[0].parse::<u8>().map_err(|e| parse_err(e.to_string()))?);
            clusters.push(fields[1].parse::<u8>().map_err(|e| parse_err(e.to_string()))?);
            for f in &fields[2..] {
                features.push(f.parse::<f64>().map_err(|e| parse_err(e.to_string()))?);
            }
        }
        let dim = dim.ok_or_else(|| Error::Parse { line: 0, message: "empty dataset file".into() })?;
        Self::with_clusters(dim, features, labels, clusters)
    }
}

fn signed(label: u8) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// `x~^T w` with the implicit trailing 1.
fn affine(w: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d]
}

/// Numerically stable `log(1 + exp(z))`.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `F_k(w)`: mean regularised logistic loss over the dataset.
pub fn local_loss(w: &[f64], ds: &LocalDataset, reg: f64) -> Result<f64> {
    ds.check_model(w)?;
    let data: f64 = ds.samples().map(|(x, y)| softplus(-y * affine(w, x))).sum();
    let norm_sq: f64 = w.iter().map(|v| v * v).sum();
    Ok(data / ds.len() as f64 + 0.5 * reg * norm_sq)
}

/// Mean of per-sample gradients; each is clipped to `clip` in norm when given.
fn mean_gradient(w: &[f64], ds: &LocalDataset, reg: f64, clip: Option<f64>) -> Result<ModelVector> {
    ds.check_model(w)?;
    let d = w.len();
    let w_norm_sq: f64 = w.iter().map(|v| v * v).sum();
    let mut data_part = vec![0.0; d];
    // Regulariser contributions accumulate separately: sum of per-sample scale on mu*w.
    let mut reg_scale = 0.0;
    for (x, y) in ds.samples() {
        // grad = s * x~ + reg * w, s = -y * sigmoid(-y x~^T w)
        let s = -y * sigmoid(-y * affine(w, x));
        let mut scale = 1.0;
        if let Some(bound) = clip {
            let x_norm_sq: f64 = x.iter().map(|v| v * v).sum::<f64>() + 1.0;
            let x_dot_w = affine(w, x);
            let norm_sq = s * s * x_norm_sq + 2.0 * s * reg * x_dot_w + reg * reg * w_norm_sq;
            let norm = norm_sq.max(0.0).sqrt();
            if norm > bound {
                scale = bound / norm;
            }
        }
        let c = scale * s;
        for (acc, xi) in data_part[..d - 1].iter_mut().zip(x) {
            *acc += c * xi;
        }
        data_part[d - 1] += c;
        reg_scale += scale;
    }
    let n = ds.len() as f64;
    Ok(data_part
        .iter()
        .zip(w)
        .map(|(g, wi)| g / n + reg * reg_scale / n * wi)
        .collect::<Vec<_>>()
        .into())
}

/// Exact gradient `grad F_k(w)` without clipping.
pub fn exact_gradient(w: &[f64], ds: &LocalDataset, reg: f64) -> Result<ModelVector> {
    mean_gradient(w, ds, reg, None)
}

/// Local gradient reported by a device: the mean of per-sample gradients,
/// each clipped to norm `lc.grad_bound` so that the bounded-gradient
/// assumption holds by construction. `lc.strong_convexity` is the
/// regulariser.
pub fn local_gradient(w: &[f64], ds: &LocalDataset, lc: &LearningConstants) -> Result<ModelVector> {
    mean_gradient(w, ds, lc.strong_convexity, Some(lc.grad_bound))
}

/// Largest per-sample gradient norm at `w`.
pub fn max_sample_gradient_norm(w: &[f64], ds: &LocalDataset, reg: f64) -> Result<f64> {
    ds.check_model(w)?;
    let mut best: f64 = 0.0;
    for (x, y) in ds.samples() {
        let s = -y * sigmoid(-y * affine(w, x));
        let mut norm_sq = 0.0;
        for (xi, wi) in x.iter().zip(w) {
            let g = s * xi + reg * wi;
            norm_sq += g * g;
        }
        let g = s + reg * w[w.len() - 1];
        norm_sq += g * g;
        best = best.max(norm_sq.sqrt());
    }
    Ok(best)
}

/// Weighted sum of local gradients, `g = sum_k alpha_k g_k`.
pub fn global_gradient(grads: &[ModelVector], weights: &[f64]) -> Result<ModelVector> {
    if grads.is_empty() || grads.len() != weights.len() {
        return Err(Error::arg("need one weight per gradient"));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::WeightSum { sum });
    }
    let d = grads[0].len();
    let mut out = ModelVector::zeros(d);
    for (g, &a) in grads.iter().zip(weights) {
        if g.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: g.len() });
        }
        out.axpy(a, g);
    }
    Ok(out)
}

/// `w - eta * g`.
pub fn gd_step(w: &ModelVector, g: &[f64], eta: f64) -> Result<ModelVector> {
    if w.len() != g.len() {
        return Err(Error::DimensionMismatch { expected: w.len(), found: g.len() });
    }
    Ok(w.iter().zip(g).map(|(a, b)| a - eta * b).collect::<Vec<_>>().into())
}

/// `F(w) = sum_k alpha_k F_k(w)`.
pub fn global_loss(w: &[f64], datasets: &[&LocalDataset], weights: &[f64], reg: f64) -> Result<f64> {
    if datasets.len() != weights.len() {
        return Err(Error::arg("need one weight per dataset"));
    }
    datasets
        .iter()
        .zip(weights)
        .map(|(ds, a)| local_loss(w, ds, reg).map(|f| a * f))
        .sum()
}

/// Minimises `F_k` by gradient descent with backtracking line search until
/// `||grad F_k|| <= tol`.
pub fn solve_local_optimum(ds: &LocalDataset, reg: f64, tol: f64) -> Result<ModelVector> {
    if !(tol > 0.0) {
        return Err(Error::arg("tolerance must be positive"));
    }
    if !(reg > 0.0) {
        return Err(Error::arg("regulariser must be positive"));
    }
    // Armijo always holds for steps up to 1/L; below that a failed test is round-off.
    let safe_step = 1.0 / smoothness_bound(ds, reg);
    let mut w = ModelVector::zeros(ds.model_dim());
    let mut f = local_loss(&w, ds, reg)?;
    let mut step = safe_step;
    for _ in 0..SOLVER_MAX_ITER {
        let g = exact_gradient(&w, ds, reg)?;
        let g_sq = g.norm_sq();
        if g_sq.sqrt() <= tol {
            return Ok(w);
        }
        let mut t = step * 2.0;
        loop {
            let trial = gd_step(&w, &g, t)?;
            let f_trial = local_loss(&trial, ds, reg)?;
            let armijo = f_trial <= f - 0.5 * t * g_sq && f_trial < f;
            if armijo || t <= safe_step {
                w = trial;
                f = f_trial;
                break;
            }
            t *= 0.5;
        }
        step = t;
    }
    Err(Error::NonConvergence { what: "local optimum solver", iterations: SOLVER_MAX_ITER })
}

/// Largest eigenvalue of the second-moment matrix `(1/D) sum x~ x~^T`.
pub fn second_moment_max_eigenvalue(ds: &LocalDataset) -> f64 {
    let d = ds.model_dim();
    let mut m = DMatrix::<f64>::zeros(d, d);
    let mut xa = vec![0.0; d];
    for (x, _) in ds.samples() {
        xa[..d - 1].copy_from_slice(x);
        xa[d - 1] = 1.0;
        for i in 0..d {
            for j in i..d {
                m[(i, j)] += xa[i] * xa[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
    m /= ds.len() as f64;
    SymmetricEigen::new(m).eigenvalues.iter().cloned().fold(f64::MIN, f64::max)
}

/// Smoothness bound for the regularised logistic loss on one dataset.
pub fn smoothness_bound(ds: &LocalDataset, reg: f64) -> f64 {
    reg + 0.25 * second_moment_max_eigenvalue(ds)
}

fn random_in_ball<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> ModelVector {
    let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    dir.into_iter().map(|v| v / norm * r).collect::<Vec<_>>().into()
}

/// Empirical learning constants for a fleet.
///
/// * `mu` is the regulariser.
/// * `L = mu + max_k lambda_max((1/D_k) sum x~ x~^T) / 4`.
/// * `gamma` is the largest per-sample gradient norm seen at the probe models
///   (the origin plus `probe_models` uniform draws from a radius-10 ball),
///   times 1.1.
/// * `delta = max_k ||w_k* - w*||`.
/// * `Delta^2 = 1.1 * max (d/4)(g_max - g_min)^2` over probes and devices,
///   with `g_max`/`g_min` the extreme entry magnitudes of the local gradient.
pub fn estimate_constants(
    fleet: &[LocalDataset],
    reg: f64,
    probe_models: usize,
    seed: u64,
) -> Result<LearningConstants> {
    if probe_models == 0 {
        return Err(Error::arg("need at least one probe model"));
    }
    if fleet.is_empty() {
        return Err(Error::arg("empty fleet"));
    }
    let tol = 1e-9;
    let d = fleet[0].model_dim();
    let smoothness = fleet.iter().map(|ds| smoothness_bound(ds, reg)).fold(reg, f64::max);

    let pooled = LocalDataset::pooled(fleet)?;
    let w_star = solve_local_optimum(&pooled, reg, tol)?;
    let mut delta: f64 = 0.0;
    for ds in fleet {
        let wk = solve_local_optimum(ds, reg, tol)?;
        delta = delta.max(wk.dist_sq(&w_star).sqrt());
    }

    let mut rng = rng::stream(seed, Purpose::Probe, &[]);
    let mut probes = vec![ModelVector::zeros(d)];
    probes.extend((0..probe_models).map(|_| random_in_ball(&mut rng, d, PROBE_RADIUS)));
    let mut max_norm: f64 = 0.0;
    let mut max_range: f64 = 0.0;
    for w in &probes {
        for ds in fleet {
            max_norm = max_norm.max(max_sample_gradient_norm(w, ds, reg)?);
            let g = exact_gradient(w, ds, reg)?;
            let (lo, hi) = g.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
                (lo.min(v.abs()), hi.max(v.abs()))
            });
            max_range = max_range.max(d as f64 / 4.0 * (hi - lo) * (hi - lo));
        }
    }

    Ok(LearningConstants {
        strong_convexity: reg,
        smoothness,
        grad_bound: PROBE_MARGIN * max_norm,
        local_global_distance: delta,
        quant_range_sq: PROBE_MARGIN * max_range,
    })
}

/// Parameters of the synthetic population.
///
/// Ten cluster centres sit at distance `cluster_radius` from the origin in
/// random directions; a sample from cluster `c` is its centre plus isotropic
/// Gaussian noise of total standard deviation `noise_std`. Labels are
/// one-vs-rest: 1 for cluster `positive_class`, 0 otherwise.
///
/// Device `k` owns `classes_per_device` clusters: cluster `k mod 10` plus,
/// for two classes, one more drawn uniformly from the rest. Its sample count
/// is uniform on `[min_samples, max_samples]`, so the weights `alpha_k` are
/// imbalanced.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub feature_dim: usize,
    pub classes_per_device: usize,
    pub min_samples: usize,
    pub max_samples: usize,
    pub cluster_radius: f64,
    pub noise_std: f64,
    pub positive_class: u8,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            feature_dim: 19,
            classes_per_device: 2,
            min_samples: 20,
            max_samples: 200,
            cluster_radius: 2.0,
            noise_std: 1.0,
            positive_class: 0,
        }
    }
}

/// Draws datasets that share one set of cluster centres.
#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    spec: SyntheticSpec,
    seed: u64,
    centres: Vec<Vec<f64>>,
}

impl SyntheticGenerator {
    pub fn new(spec: SyntheticSpec, seed: u64) -> Result<Self> {
        if !(1..=2).contains(&spec.classes_per_device) {
            return Err(Error::arg("classes_per_device must be 1 or 2"));
        }
        if spec.feature_dim == 0 {
            return Err(Error::arg("feature_dim must be positive"));
        }
        if spec.min_samples == 0 || spec.min_samples > spec.max_samples {
            return Err(Error::arg("need 1 <= min_samples <= max_samples"));
        }
        if usize::from(spec.positive_class) >= NUM_CLUSTERS {
            return Err(Error::arg("positive_class out of range"));
        }
        let mut rng = rng::stream(seed, Purpose::Data, &[u64::MAX]);
        let centres = (0..NUM_CLUSTERS)
            .map(|_| {
                let dir: Vec<f64> =
                    (0..spec.feature_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                dir.into_iter().map(|v| v / norm * spec.cluster_radius).collect()
            })
            .collect();
        Ok(SyntheticGenerator { spec, seed, centres })
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    fn draw<R: Rng>(&self, rng: &mut R, clusters: &[u8], count: usize) -> Result<LocalDataset> {
        let f = self.spec.feature_dim;
        let sd = self.spec.noise_std / (f as f64).sqrt();
        let mut features = Vec::with_capacity(count * f);
        let mut labels = Vec::with_capacity(count);
        let mut tags = Vec::with_capacity(count);
        for _ in 0..count {
            let c = clusters[rng.random_range(0..clusters.len())];
            let centre = &self.centres[usize::from(c)];
            for &mu in centre {
                let z: f64 = StandardNormal.sample(rng);
                features.push(mu + sd * z);
            }
            labels.push(u8::from(c == self.spec.positive_class));
            tags.push(c);
        }
        LocalDataset::with_clusters(f, features, labels, tags)
    }

    /// Dataset of device `k`.
    pub fn device(&self, k: usize) -> Result<LocalDataset> {
        let (mut rng, clusters, count) = device_layout(&self.spec, k, self.seed);
        self.draw(&mut rng, &clusters, count)
    }

    pub fn fleet(&self, num_devices: usize) -> Result<Vec<LocalDataset>> {
        (0..num_devices).map(|k| self.device(k)).collect()
    }

    /// IID sample over all clusters, for held-out accuracy.
    pub fn holdout(&self, count: usize) -> Result<LocalDataset> {
        let mut rng = rng::stream(self.seed, Purpose::Holdout, &[]);
        let all: Vec<u8> = (0..NUM_CLUSTERS as u8).collect();
        self.draw(&mut rng, &all, count.max(1))
    }
}

fn device_layout(spec: &SyntheticSpec, k: usize, seed: u64) -> (SimRng, Vec<u8>, usize) {
    let mut rng = rng::stream(seed, Purpose::Data, &[k as u64]);
    let primary = (k % NUM_CLUSTERS) as u8;
    let mut clusters = vec![primary];
    if spec.classes_per_device == 2 {
        let offset = rng.random_range(1..NUM_CLUSTERS) as u8;
        clusters.push((primary + offset) % NUM_CLUSTERS as u8);
    }
    let count = rng.random_range(spec.min_samples..=spec.max_samples);
    (rng, clusters, count)
}

/// Sample counts `D_k` the generator would give each device, without
/// drawing any features.
pub fn synthetic_sample_counts(spec: &SyntheticSpec, num_devices: usize, seed: u64) -> Result<Vec<usize>> {
    if spec.min_samples == 0 || spec.min_samples > spec.max_samples {
        return Err(Error::arg("need 1 <= min_samples <= max_samples"));
    }
    Ok((0..num_devices).map(|k| device_layout(spec, k, seed).2).collect())
}

pub fn gen_synthetic_fleet(spec: &SyntheticSpec, num_devices: usize, seed: u64) -> Result<Vec<LocalDataset>> {
    if num_devices == 0 {
        return Err(Error::arg("need at least one device"));
    }
    SyntheticGenerator::new(spec.clone(), seed)?.fleet(num_devices)
}

/// Fraction of samples whose predicted label matches.
pub fn accuracy(w: &[f64], ds: &LocalDataset) -> Result<f64> {
    ds.check_model(w)?;
    let correct = ds.samples().filter(|(x, y)| affine(w, x) * y > 0.0).count();
    Ok(correct as f64 / ds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn constants(reg: f64, clip: f64) -> LearningConstants {
        LearningConstants {
            strong_convexity: reg,
            smoothness: 10.0,
            grad_bound: clip,
            local_global_distance: 0.0,
            quant_range_sq: 1.0,
        }
    }

    fn small_fleet() -> Vec<LocalDataset> {
        let spec = SyntheticSpec { feature_dim: 4, min_samples: 10, max_samples: 30, ..Default::default() };
        gen_synthetic_fleet(&spec, 4, 3).unwrap()
    }

    #[test]
    fn origin_gradient_single_positive_sample() {
        let ds = LocalDataset::new(3, vec![1.0, -2.0, 0.5], vec![1]).unwrap();
        let g = local_gradient(&[0.0; 4], &ds, &constants(0.3, f64::INFINITY)).unwrap();
        assert_eq!(&*g, &[-0.5, 1.0, -0.25, -0.5]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let fleet = small_fleet();
        let reg = 0.2;
        let lc = constants(reg, f64::INFINITY);
        let w: Vec<f64> = (0..5).map(|i| 0.3 * i as f64 - 0.7).collect();
        for ds in &fleet {
            let g = local_gradient(&w, ds, &lc).unwrap();
            for i in 0..w.len() {
                let h = 1e-5;
                let mut up = w.clone();
                let mut dn = w.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (local_loss(&up, ds, reg).unwrap() - local_loss(&dn, ds, reg).unwrap()) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-5 * fd.abs().max(1e-3), "coord {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn clipping_bounds_every_sample() {
        let fleet = small_fleet();
        let w = vec![3.0; 5];
        let lc = constants(0.5, 0.2);
        for ds in &fleet {
            let unclipped = max_sample_gradient_norm(&w, ds, 0.5).unwrap();
            assert!(unclipped > 0.2);
            let g = local_gradient(&w, ds, &lc).unwrap();
            assert!(g.norm() <= 0.2 + 1e-12);
        }
    }

    #[test]
    fn global_gradient_examples() {
        let g1: ModelVector = vec![1.0, 0.0].into();
        let g2: ModelVector = vec![0.0, 1.0].into();
        assert_eq!(&*global_gradient(std::slice::from_ref(&g1), &[1.0]).unwrap(), &[1.0, 0.0]);
        assert_eq!(&*global_gradient(&[g1.clone(), g2.clone()], &[0.25, 0.75]).unwrap(), &[0.25, 0.75]);
        let same = global_gradient(&[g2.clone(), g2.clone()], &[0.4, 0.6]).unwrap();
        assert_relative_eq!(same[1], 1.0);
        assert!(matches!(global_gradient(&[g1, g2], &[0.5, 0.6]), Err(Error::WeightSum { .. })));
    }

    #[test]
    fn gd_step_examples() {
        let w: ModelVector = vec![1.0, 1.0].into();
        assert_eq!(&*gd_step(&w, &[1.0, -1.0], 0.5).unwrap(), &[0.5, 1.5]);
        assert_eq!(gd_step(&w, &[0.0, 0.0], 0.5).unwrap(), w);
        assert_eq!(gd_step(&w, &[3.0, 4.0], 0.0).unwrap(), w);
        assert!(gd_step(&w, &[1.0], 0.1).is_err());
    }

    #[test]
    fn solver_reaches_tolerance_and_descends() {
        for ds in small_fleet() {
            let w = solve_local_optimum(&ds, 0.1, 1e-8).unwrap();
            assert!(exact_gradient(&w, &ds, 0.1).unwrap().norm() <= 1e-8);
            let f0 = local_loss(&vec![0.0; w.len()], &ds, 0.1).unwrap();
            assert!(local_loss(&w, &ds, 0.1).unwrap() <= f0);
            let lc = constants(0.1, f64::INFINITY);
            assert!(local_gradient(&w, &ds, &lc).unwrap().norm() <= 1e-8);
        }
    }

    #[test]
    fn mirror_symmetric_data_has_zero_first_coordinate() {
        // Every sample appears again with its first feature negated.
        let base = [(0.7, 1.2, 1u8), (1.5, -0.3, 0), (-0.4, 0.8, 1), (2.0, 2.0, 0), (0.1, -1.0, 1)];
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for &(a, b, y) in &base {
            features.extend_from_slice(&[a, b, -a, b]);
            labels.extend_from_slice(&[y, y]);
        }
        let ds = LocalDataset::new(2, features, labels).unwrap();
        let w = solve_local_optimum(&ds, 0.05, 1e-10).unwrap();
        assert!(w[0].abs() < 1e-9, "{w:?}");
    }

    #[test]
    fn generator_is_deterministic() {
        let spec = SyntheticSpec::default();
        let a = gen_synthetic_fleet(&spec, 1, 7).unwrap();
        let b = gen_synthetic_fleet(&spec, 1, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_synthetic_fleet(&spec, 1, 8).unwrap());
    }

    #[test]
    fn each_device_holds_at_most_two_clusters() {
        let fleet = gen_synthetic_fleet(&SyntheticSpec::default(), 20, 1).unwrap();
        for ds in &fleet {
            assert!(ds.cluster_set().len() <= 2);
            assert!((20..=200).contains(&ds.len()));
        }
    }

    #[test]
    fn single_class_fleet_covers_every_cluster() {
        let spec = SyntheticSpec { classes_per_device: 1, ..Default::default() };
        let fleet = gen_synthetic_fleet(&spec, 20, 1).unwrap();
        let mut histogram = [0usize; NUM_CLUSTERS];
        for ds in &fleet {
            for &c in ds.clusters() {
                histogram[usize::from(c)] += 1;
            }
        }
        assert!(histogram.iter().all(|&n| n > 0), "{histogram:?}");
    }

    #[test]
    fn global_loss_is_weighted_mean() {
        let fleet = small_fleet();
        let refs: Vec<&LocalDataset> = fleet.iter().collect();
        let w = vec![0.1; 5];
        let single = global_loss(&w, &refs[..1], &[1.0], 0.1).unwrap();
        assert_relative_eq!(single, local_loss(&w, &fleet[0], 0.1).unwrap());
        let uniform = global_loss(&w, &refs, &[0.25; 4], 0.1).unwrap();
        let mean = fleet.iter().map(|ds| local_loss(&w, ds, 0.1).unwrap()).sum::<f64>() / 4.0;
        assert_relative_eq!(uniform, mean, max_relative = 1e-12);
    }

    #[test]
    fn pooled_optimum_minimises_global_loss() {
        let fleet = small_fleet();
        let refs: Vec<&LocalDataset> = fleet.iter().collect();
        let total: usize = fleet.iter().map(|d| d.len()).sum();
        let alpha: Vec<f64> = fleet.iter().map(|d| d.len() as f64 / total as f64).collect();
        let w_star = solve_local_optimum(&LocalDataset::pooled(&fleet).unwrap(), 0.1, 1e-10).unwrap();
        let f_star = global_loss(&w_star, &refs, &alpha, 0.1).unwrap();
        let mut rng = rng::stream(1, Purpose::Test, &[]);
        for _ in 0..20 {
            let w = random_in_ball(&mut rng, 5, 3.0);
            assert!(global_loss(&w, &refs, &alpha, 0.1).unwrap() >= f_star);
        }
    }

    #[test]
    fn estimated_constants_are_consistent() {
        let fleet = small_fleet();
        let lc = estimate_constants(&fleet, 0.25, 8, 11).unwrap();
        assert_eq!(lc.strong_convexity, 0.25);
        assert!(lc.smoothness >= lc.strong_convexity);
        assert!(lc.grad_bound > 0.0 && lc.quant_range_sq > 0.0 && lc.local_global_distance > 0.0);
    }

    #[test]
    fn iid_fleet_has_zero_heterogeneity() {
        let ds = small_fleet().remove(0);
        let fleet = vec![ds.clone(), ds.clone(), ds];
        let lc = estimate_constants(&fleet, 0.2, 2, 1).unwrap();
        assert!(lc.local_global_distance <= 1e-8, "{}", lc.local_global_distance);
    }

    #[test]
    fn text_round_trip() {
        let ds = small_fleet().remove(1);
        let mut buf = Vec::new();
        ds.write_text(&mut buf).unwrap();
        let back = LocalDataset::read_text(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let ds = small_fleet().remove(0);
        assert!(matches!(local_loss(&[0.0; 3], &ds, 0.1), Err(Error::DimensionMismatch { .. })));
    }
}
