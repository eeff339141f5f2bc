//! Principal component analysis for reducing descriptor dimension.

use rayon::prelude::*;

use crate::eigen::symmetric_eigen;
use crate::error::{check_dim, Error, Result};
use crate::tensor::DescriptorSet;

/// Descriptors per partial covariance sum. Fixed so the reduction order
/// (and therefore the result) does not depend on the thread count.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    input_dim: usize,
    output_dim: usize,
    mean: Vec<f64>,
    basis: Vec<f64>,
    explained_variance: Vec<f64>,
    whitened: bool,
}

impl PcaModel {
    /// Rebuilds a model from stored parts, checking the shape and
    /// orthonormality invariants.
    pub fn from_parts(
        input_dim: usize,
        output_dim: usize,
        mean: Vec<f64>,
        basis: Vec<f64>,
        explained_variance: Vec<f64>,
        whitened: bool,
    ) -> Result<Self> {
        if output_dim == 0 || output_dim > input_dim {
            return Err(Error::config(format!(
                "pca output dimension {output_dim} must be in 1..={input_dim}"
            )));
        }
        check_dim(input_dim, mean.len(), "pca mean")?;
        check_dim(input_dim * output_dim, basis.len(), "pca basis")?;
        check_dim(output_dim, explained_variance.len(), "pca variances")?;
        if whitened {
            return Err(Error::config("whitened pca models are not supported"));
        }
        let model = Self {
            input_dim,
            output_dim,
            mean,
            basis,
            explained_variance,
            whitened,
        };
        for i in 0..output_dim {
            for j in 0..output_dim {
                let dot: f64 = model.row(i).iter().zip(model.row(j)).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                if (dot - target).abs() >= 1e-8 {
                    return Err(Error::config("pca basis rows are not orthonormal"));
                }
            }
        }
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Row-major `output_dim x input_dim` principal directions.
    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.basis[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn whitened(&self) -> bool {
        self.whitened
    }

    /// `basis * (d - mean)`.
    pub fn project(&self, d: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim, d.len(), "pca input")?;
        let mut out = vec![0.0; self.output_dim];
        self.project_into(d, &mut out);
        Ok(out)
    }

    pub(crate) fn project_into(&self, d: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.basis.chunks_exact(self.input_dim)) {
            *o = row
                .iter()
                .zip(d.iter().zip(&self.mean))
                .map(|(b, (x, m))| b * (x - m))
                .sum();
        }
    }

    pub fn project_set(&self, set: &DescriptorSet) -> Result<DescriptorSet> {
        check_dim(self.input_dim, set.dim(), "pca input")?;
        Ok(set.map_rows(self.output_dim, |row, out| self.project_into(row, out)))
    }

    /// Maps a projected vector back into descriptor space.
    pub fn reconstruct(&self, p: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.output_dim, p.len(), "pca projection")?;
        let mut out = self.mean.clone();
        for (coef, row) in p.iter().zip(self.basis.chunks_exact(self.input_dim)) {
            for (o, b) in out.iter_mut().zip(row) {
                *o += coef * b;
            }
        }
        Ok(out)
    }
}

/// Population covariance (1/T) of the descriptors around `mean`, row-major.
pub(crate) fn covariance(set: &DescriptorSet, mean: &[f64]) -> Vec<f64> {
    let dim = set.dim();
    let partials: Vec<Vec<f64>> = set
        .as_flat()
        .par_chunks(CHUNK * dim)
        .map(|chunk| {
            let mut acc = vec![0.0; dim * dim];
            let mut centered = vec![0.0; dim];
            for row in chunk.chunks_exact(dim) {
                for ((c, x), m) in centered.iter_mut().zip(row).zip(mean) {
                    *c = x - m;
                }
                for i in 0..dim {
                    let ci = centered[i];
                    let acc_row = &mut acc[i * dim..(i + 1) * dim];
                    for j in i..dim {
                        acc_row[j] += ci * centered[j];
                    }
                }
            }
            acc
        })
        .collect();
    let mut cov = vec![0.0; dim * dim];
    for partial in &partials {
        for (c, p) in cov.iter_mut().zip(partial) {
            *c += p;
        }
    }
    let t = set.count() as f64;
    for i in 0..dim {
        for j in i..dim {
            let v = cov[i * dim + j] / t;
            cov[i * dim + j] = v;
            cov[j * dim + i] = v;
        }
    }
    cov
}

pub(crate) fn sample_mean(set: &DescriptorSet) -> Vec<f64> {
    let dim = set.dim();
    let partials: Vec<Vec<f64>> = set
        .as_flat()
        .par_chunks(CHUNK * dim)
        .map(|chunk| {
            let mut acc = vec![0.0; dim];
            for row in chunk.chunks_exact(dim) {
                for (a, x) in acc.iter_mut().zip(row) {
                    *a += x;
                }
            }
            acc
        })
        .collect();
    let mut mean = vec![0.0; dim];
    for partial in &partials {
        for (m, p) in mean.iter_mut().zip(partial) {
            *m += p;
        }
    }
    let t = set.count() as f64;
    mean.iter_mut().for_each(|m| *m /= t);
    mean
}

/// Fits an `output_dim`-component PCA. Each basis row is sign-fixed so its
/// first component with magnitude above 1e-12 is positive.
pub fn fit_pca(set: &DescriptorSet, output_dim: usize) -> Result<PcaModel> {
    let dim = set.dim();
    if output_dim == 0 || output_dim > dim {
        return Err(Error::config(format!(
            "pca output dimension {output_dim} must be in 1..={dim}"
        )));
    }
    if set.count() < output_dim {
        return Err(Error::config(format!(
            "pca needs at least {output_dim} descriptors, got {}",
            set.count()
        )));
    }
    let mean = sample_mean(set);
    let cov = covariance(set, &mean);
    let eig = symmetric_eigen(&cov, dim);

    let mut basis = Vec::with_capacity(output_dim * dim);
    for i in 0..output_dim {
        let mut row = eig.vector(i).to_vec();
        if let Some(first) = row.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
        }
        basis.extend(row);
    }
    let explained_variance = eig.values[..output_dim].iter().map(|v| v.max(0.0)).collect();
    Ok(PcaModel {
        input_dim: dim,
        output_dim,
        mean,
        basis,
        explained_variance,
        whitened: false,
    })
}
