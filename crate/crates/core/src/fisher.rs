//! Fisher Convolutional Vector encoding of convolutional maps, plus the
//! Direct-concatenation and bag-of-words baselines.
//!
//! Pipeline for one map stack: split into channel fibers, max-abs normalize
//! each fiber, project with PCA, soft-assign to the GMM, accumulate zeroth,
//! first and second order statistics, turn them into mean/stddev gradients,
//! then apply signed power and l2 normalization.

use log::warn;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::gmm::GmmModel;
use crate::kmeans::{kmeans, nearest_center};
use crate::pca::PcaModel;
use crate::tensor::{channels_to_descriptors, max_abs_normalize, DescriptorSet, Tensor3};

pub const DEFAULT_POWER: f64 = 0.5;

/// `2 * M * K` gradient vector laid out as `F_1^mu .. F_K^mu, F_1^sigma .. F_K^sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct FcvVector {
    dim: usize,
    k: usize,
    values: Vec<f64>,
}

impl FcvVector {
    pub fn new(dim: usize, k: usize, values: Vec<f64>) -> Result<Self> {
        check_dim(2 * dim * k, values.len(), "fcv length")?;
        Ok(Self { dim, k, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean_block(&self, c: usize) -> &[f64] {
        &self.values[c * self.dim..(c + 1) * self.dim]
    }

    pub fn stddev_block(&self, c: usize) -> &[f64] {
        let off = self.k * self.dim;
        &self.values[off + c * self.dim..off + (c + 1) * self.dim]
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

/// Posterior-weighted statistics of a descriptor set.
#[derive(Debug, Clone, PartialEq)]
pub struct FvAccumulators {
    pub k: usize,
    pub dim: usize,
    pub s0: Vec<f64>,
    pub s_mu: Vec<f64>,
    pub s_sigma: Vec<f64>,
}

pub fn accumulate(set: &DescriptorSet, model: &GmmModel) -> Result<FvAccumulators> {
    check_dim(model.dim(), set.dim(), "fv accumulate input")?;
    let (k, dim) = (model.k(), model.dim());
    let mut acc = FvAccumulators {
        k,
        dim,
        s0: vec![0.0; k],
        s_mu: vec![0.0; k * dim],
        s_sigma: vec![0.0; k * dim],
    };
    let mut gamma = vec![0.0; k];
    for x in set.iter() {
        model.log_joint(x, &mut gamma);
        GmmModel::normalize_log(&mut gamma);
        for (c, &g) in gamma.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            acc.s0[c] += g;
            let s1 = &mut acc.s_mu[c * dim..(c + 1) * dim];
            let s2 = &mut acc.s_sigma[c * dim..(c + 1) * dim];
            for j in 0..dim {
                let gx = g * x[j];
                s1[j] += gx;
                s2[j] += gx * x[j];
            }
        }
    }
    Ok(acc)
}

/// Unnormalized Fisher gradients with respect to the means and stddevs.
pub fn fv_gradients(acc: &FvAccumulators, model: &GmmModel) -> Result<FcvVector> {
    check_dim(model.k(), acc.k, "fv accumulator mixtures")?;
    check_dim(model.dim(), acc.dim, "fv accumulator dimension")?;
    let (k, dim) = (acc.k, acc.dim);
    let mut values = vec![0.0; 2 * k * dim];
    let (mu_part, sigma_part) = values.split_at_mut(k * dim);
    for c in 0..k {
        let w = model.weights()[c];
        let mu = model.mean(c);
        let sd = model.stddev(c);
        let s0 = acc.s0[c];
        let s1 = &acc.s_mu[c * dim..(c + 1) * dim];
        let s2 = &acc.s_sigma[c * dim..(c + 1) * dim];
        let mu_scale = w.sqrt();
        let sigma_scale = (2.0 * w).sqrt();
        for j in 0..dim {
            let var = sd[j] * sd[j];
            mu_part[c * dim + j] = (s1[j] - mu[j] * s0) / (mu_scale * sd[j]);
            sigma_part[c * dim + j] =
                (s2[j] - 2.0 * mu[j] * s1[j] + (mu[j] * mu[j] - var) * s0) / (sigma_scale * var);
        }
    }
    FcvVector::new(dim, k, values)
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `v` to unit l2 norm. Returns `false` (leaving `v` untouched) for
/// an all-zero vector.
pub fn l2_normalize(v: &mut [f64]) -> bool {
    let norm = l2_norm(v);
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
        true
    } else {
        false
    }
}

/// Signed power `sign(x) |x|^alpha` then l2 normalization. An all-zero input
/// stays zero and `false` is returned.
pub fn power_l2_normalize(v: &mut [f64], alpha: f64) -> bool {
    assert!(alpha > 0.0 && alpha <= 1.0, "power exponent must be in (0, 1]");
    if alpha != 1.0 {
        for x in v.iter_mut() {
            *x = x.signum() * x.abs().powf(alpha);
        }
    }
    let ok = l2_normalize(v);
    if !ok {
        warn!("power/l2 normalization of an all-zero vector");
    }
    ok
}

/// Max-abs normalized fibers of `maps`, projected by `pca`.
pub fn projected_descriptors(maps: &Tensor3, pca: &PcaModel) -> Result<DescriptorSet> {
    check_dim(pca.input_dim(), maps.channels(), "map channels vs pca input")?;
    let raw = channels_to_descriptors(maps);
    let mut scratch = vec![0.0; maps.channels()];
    Ok(raw.map_rows(pca.output_dim(), |row, out| {
        scratch.copy_from_slice(row);
        max_abs_normalize(&mut scratch);
        pca.project_into(&scratch, out);
    }))
}

pub fn encode_fcv(maps: &Tensor3, pca: &PcaModel, gmm: &GmmModel, alpha: f64) -> Result<FcvVector> {
    check_dim(pca.output_dim(), gmm.dim(), "pca output vs gmm dimension")?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::config(format!("power exponent {alpha} outside (0, 1]")));
    }
    let projected = projected_descriptors(maps, pca)?;
    let acc = accumulate(&projected, gmm)?;
    let mut fcv = fv_gradients(&acc, gmm)?;
    power_l2_normalize(&mut fcv.values, alpha);
    Ok(fcv)
}

/// PCA + GMM dictionary bundled for batch encoding.
#[derive(Debug, Clone)]
pub struct FcvEncoder {
    pub pca: PcaModel,
    pub gmm: GmmModel,
    pub alpha: f64,
}

impl FcvEncoder {
    pub fn new(pca: PcaModel, gmm: GmmModel, alpha: f64) -> Result<Self> {
        check_dim(pca.output_dim(), gmm.dim(), "pca output vs gmm dimension")?;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::config(format!("power exponent {alpha} outside (0, 1]")));
        }
        Ok(Self { pca, gmm, alpha })
    }

    pub fn output_len(&self) -> usize {
        2 * self.gmm.dim() * self.gmm.k()
    }

    pub fn encode(&self, maps: &Tensor3) -> Result<FcvVector> {
        encode_fcv(maps, &self.pca, &self.gmm, self.alpha)
    }

    /// Encodes every map stack; output order matches input order.
    pub fn encode_batch(&self, maps: &[Tensor3]) -> Result<Vec<FcvVector>> {
        maps.par_iter().map(|m| self.encode(m)).collect()
    }
}

/// Max-abs normalized fibers concatenated in spatial row-major order, then
/// l2-normalized. Length `H * W * D`.
pub fn encode_direct(maps: &Tensor3) -> Vec<f64> {
    let mut out = maps.data().to_vec();
    for fiber in out.chunks_exact_mut(maps.channels()) {
        max_abs_normalize(fiber);
    }
    l2_normalize(&mut out);
    out
}

/// Hard-assignment codebook over projected descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct BowCodebook {
    dim: usize,
    centers: Vec<f64>,
}

impl BowCodebook {
    pub fn new(dim: usize, centers: Vec<f64>) -> Result<Self> {
        if dim == 0 || centers.is_empty() {
            return Err(Error::Empty("bow codebook"));
        }
        if centers.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: centers.len() % dim,
                context: "bow centers",
            });
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("bow center".into()));
        }
        Ok(Self { dim, centers })
    }

    /// Seeded k-means over (already projected) training descriptors.
    pub fn train(set: &DescriptorSet, size: usize, iters: usize, seed: u64) -> Result<Self> {
        let km = kmeans(set, size, iters, seed)?;
        Self::new(km.dim, km.centers)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        self.centers.len() / self.dim
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn assign(&self, x: &[f64]) -> usize {
        nearest_center(&self.centers, self.dim, x).0
    }
}

/// Histogram of nearest-center assignments, l1 then l2 normalized.
pub fn encode_bow(maps: &Tensor3, pca: &PcaModel, codebook: &BowCodebook) -> Result<Vec<f64>> {
    check_dim(codebook.dim(), pca.output_dim(), "bow codebook vs pca output")?;
    let projected = projected_descriptors(maps, pca)?;
    Ok(bow_histogram(&projected, codebook))
}

/// The l1-normalized histogram, before the final l2 step.
pub fn bow_counts(set: &DescriptorSet, codebook: &BowCodebook) -> Vec<f64> {
    let mut hist = vec![0.0; codebook.size()];
    for x in set.iter() {
        hist[codebook.assign(x)] += 1.0;
    }
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        hist.iter_mut().for_each(|h| *h /= total);
    }
    hist
}

fn bow_histogram(set: &DescriptorSet, codebook: &BowCodebook) -> Vec<f64> {
    let mut hist = bow_counts(set, codebook);
    l2_normalize(&mut hist);
    hist
}
