//! Diagonal-covariance Gaussian mixture fit by expectation-maximization.
//!
//! The mixture is the dictionary of the Fisher encoder. Fitting starts from a
//! seeded k-means++ / Lloyd initialization and then runs EM, recording the
//! mean log-likelihood of every E-step so convergence (and monotonicity) can
//! be inspected. Sufficient statistics are reduced over fixed-size chunks in
//! a fixed order, so results do not depend on the rayon thread count.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::kmeans::{kmeans, nearest_center};
use crate::tensor::DescriptorSet;

const CHUNK: usize = 1024;
const KMEANS_ITERS: usize = 10;
const MIN_ABS_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop once the relative improvement of the mean log-likelihood drops below this.
    pub tol: f64,
    pub seed: u64,
    pub weight_floor: f64,
    /// Relative to the mean per-dimension variance of the training data.
    pub variance_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
            seed: 0,
            weight_floor: 1e-6,
            variance_floor: 1e-4,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::config("em max_iters must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config("em tol must be positive"));
        }
        if !(self.weight_floor > 0.0) || !(self.variance_floor > 0.0) {
            return Err(Error::config("em floors must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    k: usize,
    dim: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    stddevs: Vec<f64>,
    weight_floor: f64,
    /// Absolute variance floor resolved from the data at fit time.
    variance_floor: f64,
    seed: u64,
    // cached per-component terms
    log_norm: Vec<f64>,
    inv_var: Vec<f64>,
}

impl GmmModel {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        k: usize,
        dim: usize,
        weights: Vec<f64>,
        means: Vec<f64>,
        stddevs: Vec<f64>,
        weight_floor: f64,
        variance_floor: f64,
        seed: u64,
    ) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::config("gmm needs k >= 1 and dim >= 1"));
        }
        check_dim(k, weights.len(), "gmm weights")?;
        check_dim(k * dim, means.len(), "gmm means")?;
        check_dim(k * dim, stddevs.len(), "gmm stddevs")?;
        if (weights.iter().sum::<f64>() - 1.0).abs() >= 1e-10 {
            return Err(Error::config("gmm weights must sum to one"));
        }
        if weights.iter().any(|&w| !(w > 0.0)) || stddevs.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::config("gmm weights and stddevs must be positive"));
        }
        if means.iter().any(|v| !v.is_finite()) || stddevs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gmm parameters".into()));
        }
        Ok(Self::build(
            k,
            dim,
            weights,
            means,
            stddevs,
            weight_floor,
            variance_floor,
            seed,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        k: usize,
        dim: usize,
        weights: Vec<f64>,
        means: Vec<f64>,
        stddevs: Vec<f64>,
        weight_floor: f64,
        variance_floor: f64,
        seed: u64,
    ) -> Self {
        let inv_var: Vec<f64> = stddevs.iter().map(|s| 1.0 / (s * s)).collect();
        let log_norm = (0..k)
            .map(|c| {
                let log_det: f64 = stddevs[c * dim..(c + 1) * dim]
                    .iter()
                    .map(|s| 2.0 * s.ln())
                    .sum();
                weights[c].ln() - 0.5 * (dim as f64 * (2.0 * PI).ln() + log_det)
            })
            .collect();
        Self {
            k,
            dim,
            weights,
            means,
            stddevs,
            weight_floor,
            variance_floor,
            seed,
            log_norm,
            inv_var,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stddevs(&self) -> &[f64] {
        &self.stddevs
    }

    pub fn mean(&self, c: usize) -> &[f64] {
        &self.means[c * self.dim..(c + 1) * self.dim]
    }

    pub fn stddev(&self, c: usize) -> &[f64] {
        &self.stddevs[c * self.dim..(c + 1) * self.dim]
    }

    pub fn weight_floor(&self) -> f64 {
        self.weight_floor
    }

    pub fn variance_floor(&self) -> f64 {
        self.variance_floor
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `log(w_c) + log N(x; mu_c, sigma_c^2)` for every component.
    #[inline]
    pub(crate) fn log_joint(&self, x: &[f64], out: &mut [f64]) {
        let dim = self.dim;
        for (c, o) in out.iter_mut().enumerate() {
            let mu = &self.means[c * dim..(c + 1) * dim];
            let iv = &self.inv_var[c * dim..(c + 1) * dim];
            let mut q = 0.0;
            for j in 0..dim {
                let diff = x[j] - mu[j];
                q += diff * diff * iv[j];
            }
            *o = self.log_norm[c] - 0.5 * q;
        }
    }

    /// Turns log-joint values into posteriors in place; returns the log of
    /// the mixture density.
    #[inline]
    pub(crate) fn normalize_log(log_joint: &mut [f64]) -> f64 {
        let max = log_joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in log_joint.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in log_joint.iter_mut() {
            *v /= sum;
        }
        max + sum.ln()
    }

    /// Soft assignment of `d` to each mixture component.
    pub fn posteriors(&self, d: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, d.len(), "gmm input")?;
        let mut out = vec![0.0; self.k];
        self.log_joint(d, &mut out);
        Self::normalize_log(&mut out);
        Ok(out)
    }

    pub fn log_density(&self, d: &[f64]) -> Result<f64> {
        check_dim(self.dim, d.len(), "gmm input")?;
        let mut buf = vec![0.0; self.k];
        self.log_joint(d, &mut buf);
        Ok(Self::normalize_log(&mut buf))
    }
}

/// Mean log-likelihood of the descriptors under the mixture.
pub fn log_likelihood(model: &GmmModel, set: &DescriptorSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Empty("log-likelihood of an empty descriptor set"));
    }
    check_dim(model.dim, set.dim(), "gmm input")?;
    let partials: Vec<f64> = set
        .as_flat()
        .par_chunks(CHUNK * model.dim)
        .map(|chunk| {
            let mut buf = vec![0.0; model.k];
            chunk
                .chunks_exact(model.dim)
                .map(|x| {
                    model.log_joint(x, &mut buf);
                    GmmModel::normalize_log(&mut buf)
                })
                .sum::<f64>()
        })
        .collect();
    Ok(partials.iter().sum::<f64>() / set.count() as f64)
}

/// Result of [`fit_gmm_traced`].
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Mean log-likelihood evaluated at the start of every EM iteration.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

pub fn fit_gmm(set: &DescriptorSet, k: usize, cfg: &EmConfig) -> Result<GmmModel> {
    fit_gmm_traced(set, k, cfg).map(|fit| fit.model)
}

struct Stats {
    ll: f64,
    s0: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Stats {
    fn zeros(k: usize, dim: usize) -> Self {
        Self {
            ll: 0.0,
            s0: vec![0.0; k],
            s1: vec![0.0; k * dim],
            s2: vec![0.0; k * dim],
        }
    }

    fn add(&mut self, other: &Stats) {
        self.ll += other.ll;
        for (a, b) in self.s0.iter_mut().zip(&other.s0) {
            *a += b;
        }
        for (a, b) in self.s1.iter_mut().zip(&other.s1) {
            *a += b;
        }
        for (a, b) in self.s2.iter_mut().zip(&other.s2) {
            *a += b;
        }
    }
}

fn e_step(model: &GmmModel, set: &DescriptorSet) -> Stats {
    let (k, dim) = (model.k, model.dim);
    let partials: Vec<Stats> = set
        .as_flat()
        .par_chunks(CHUNK * dim)
        .map(|chunk| {
            let mut stats = Stats::zeros(k, dim);
            let mut gamma = vec![0.0; k];
            for x in chunk.chunks_exact(dim) {
                model.log_joint(x, &mut gamma);
                stats.ll += GmmModel::normalize_log(&mut gamma);
                for (c, &g) in gamma.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    stats.s0[c] += g;
                    let s1 = &mut stats.s1[c * dim..(c + 1) * dim];
                    let s2 = &mut stats.s2[c * dim..(c + 1) * dim];
                    for j in 0..dim {
                        let gx = g * x[j];
                        s1[j] += gx;
                        s2[j] += gx * x[j];
                    }
                }
            }
            stats
        })
        .collect();
    let mut total = Stats::zeros(k, dim);
    for p in &partials {
        total.add(p);
    }
    total
}

/// Clamps weights to `floor` and rescales the rest so they sum to one,
/// repeating until no unclamped weight falls under the floor.
fn floor_weights(weights: &mut [f64], floor: f64) {
    let k = weights.len();
    let floor = floor.min(1.0 / k as f64);
    let mut clamped = vec![false; k];
    loop {
        let free_mass: f64 = weights
            .iter()
            .zip(&clamped)
            .filter(|(_, &c)| !c)
            .map(|(w, _)| *w)
            .sum();
        let n_clamped = clamped.iter().filter(|&&c| c).count();
        let target = 1.0 - n_clamped as f64 * floor;
        let mut changed = false;
        for (w, c) in weights.iter_mut().zip(clamped.iter_mut()) {
            if *c {
                *w = floor;
            } else if free_mass > 0.0 {
                *w *= target / free_mass;
            }
        }
        for (w, c) in weights.iter_mut().zip(clamped.iter_mut()) {
            if !*c && *w < floor {
                *c = true;
                changed = true;
            }
        }
        if !changed {
            for (w, c) in weights.iter_mut().zip(&clamped) {
                if *c {
                    *w = floor;
                }
            }
            break;
        }
    }
}

fn data_variance(set: &DescriptorSet) -> (Vec<f64>, Vec<f64>) {
    let mean = crate::pca::sample_mean(set);
    let dim = set.dim();
    let mut var = vec![0.0; dim];
    for x in set.iter() {
        for j in 0..dim {
            let d = x[j] - mean[j];
            var[j] += d * d;
        }
    }
    let t = set.count() as f64;
    var.iter_mut().for_each(|v| *v /= t);
    (mean, var)
}

pub fn fit_gmm_traced(set: &DescriptorSet, k: usize, cfg: &EmConfig) -> Result<GmmFit> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::Empty("gmm training descriptors"));
    }
    if k == 0 || set.count() < k {
        return Err(Error::config(format!(
            "gmm needs 1 <= k <= T, got k = {k}, T = {}",
            set.count()
        )));
    }
    let dim = set.dim();
    let t = set.count() as f64;
    let (global_mean, global_var) = data_variance(set);
    let mean_var = global_var.iter().sum::<f64>() / dim as f64;
    let var_floor = (cfg.variance_floor * mean_var).max(MIN_ABS_VARIANCE);

    // k-means initialization: hard-assignment statistics
    let mut weights;
    let means;
    let mut vars;
    if k == 1 {
        weights = vec![1.0];
        means = global_mean;
        vars = global_var.clone();
    } else {
        let km = kmeans(set, k, KMEANS_ITERS, cfg.seed)?;
        let mut s0 = vec![0.0; k];
        let mut s1 = vec![0.0; k * dim];
        let mut s2 = vec![0.0; k * dim];
        for x in set.iter() {
            let c = nearest_center(&km.centers, dim, x).0;
            s0[c] += 1.0;
            for j in 0..dim {
                s1[c * dim + j] += x[j];
                s2[c * dim + j] += x[j] * x[j];
            }
        }
        weights = s0.iter().map(|n| n / t).collect();
        means = km.centers.clone();
        vars = vec![0.0; k * dim];
        for c in 0..k {
            for j in 0..dim {
                vars[c * dim + j] = if s0[c] >= 2.0 {
                    let m = s1[c * dim + j] / s0[c];
                    s2[c * dim + j] / s0[c] - m * m
                } else {
                    global_var[j]
                };
            }
        }
    }
    vars.iter_mut().for_each(|v| *v = v.max(var_floor));
    floor_weights(&mut weights, cfg.weight_floor);
    let mut model = GmmModel::build(
        k,
        dim,
        weights,
        means,
        vars.iter().map(|v| v.sqrt()).collect(),
        cfg.weight_floor,
        var_floor,
        cfg.seed,
    );

    let mut trace: Vec<f64> = Vec::with_capacity(cfg.max_iters);
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let stats = e_step(&model, set);
        let ll = stats.ll / t;
        if !ll.is_finite() {
            return Err(Error::NonFinite("gmm log-likelihood".into()));
        }
        if let Some(&prev) = trace.last() {
            let improvement: f64 = (ll - prev) / f64::max(prev.abs(), 1e-300);
            if improvement < cfg.tol {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);

        let mut weights: Vec<f64> = stats.s0.iter().map(|s| s / t).collect();
        let mut means = model.means.clone();
        let mut vars: Vec<f64> = model.stddevs.iter().map(|s| s * s).collect();
        for c in 0..k {
            let n = stats.s0[c];
            if n <= 1e-300 {
                continue;
            }
            for j in 0..dim {
                let m = stats.s1[c * dim + j] / n;
                means[c * dim + j] = m;
                vars[c * dim + j] = (stats.s2[c * dim + j] / n - m * m).max(var_floor);
            }
        }
        floor_weights(&mut weights, cfg.weight_floor);
        model = GmmModel::build(
            k,
            dim,
            weights,
            means,
            vars.iter().map(|v| v.sqrt()).collect(),
            cfg.weight_floor,
            var_floor,
            cfg.seed,
        );
    }
    Ok(GmmFit {
        model,
        log_likelihoods: trace,
        converged,
    })
}
