//! One-vs-rest linear SVMs trained by averaged SGD on the regularized hinge loss.
//!
//! Each class solves `lambda/2 |w|^2 + 1/N sum_i max(0, 1 - y_i (w.x_i + b))`
//! with `lambda = 1 / (C N)`. The bias is not regularized. Step sizes decay
//! as `eta_0 / (1 + t / N)` and the returned weights are the average of the
//! iterates after the first epoch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 30,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    num_classes: usize,
    dim: usize,
    c: f64,
    /// Row-major `num_classes x dim`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub scores: Vec<f64>,
}

impl SvmModel {
    pub fn from_parts(num_classes: usize, dim: usize, c: f64, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::config("svm needs at least two classes"));
        }
        check_dim(num_classes * dim, weights.len(), "svm weights")?;
        check_dim(num_classes, biases.len(), "svm biases")?;
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("svm parameters".into()));
        }
        Ok(Self {
            num_classes,
            dim,
            c,
            weights,
            biases,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn class_weights(&self, class: usize) -> &[f64] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len(), "svm input")?;
        Ok((0..self.num_classes)
            .map(|c| self.biases[c] + self.class_weights(c).iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect())
    }

    /// Regularized hinge objective summed over the one-vs-rest problems.
    pub fn objective(&self, features: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
        let n = features.len() as f64;
        let lambda = 1.0 / (self.c * n);
        let mut total = 0.0;
        for c in 0..self.num_classes {
            let w = self.class_weights(c);
            total += 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
        }
        for (x, &label) in features.iter().zip(labels) {
            let scores = self.scores(x)?;
            for (c, s) in scores.iter().enumerate() {
                let y = if c == label { 1.0 } else { -1.0 };
                total += (1.0 - y * s).max(0.0) / n;
            }
        }
        Ok(total)
    }
}

/// Argmax of the per-class scores; ties go to the lowest class index.
pub fn predict(model: &SvmModel, x: &[f64]) -> Result<Prediction> {
    let scores = model.scores(x)?;
    let mut label = 0;
    for (c, &s) in scores.iter().enumerate() {
        if s > scores[label] {
            label = c;
        }
    }
    Ok(Prediction { label, scores })
}

fn train_binary(features: &[Vec<f64>], targets: &[f64], cfg: &SvmConfig, stream: u64) -> (Vec<f64>, f64) {
    let n = features.len();
    let dim = features[0].len();
    let lambda = 1.0 / (cfg.c * n as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let mut order: Vec<usize> = (0..n).collect();

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut w_avg = vec![0.0; dim];
    let mut b_avg = 0.0;
    let mut averaged = 0usize;
    let mut t = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let eta = cfg.learning_rate / (1.0 + t as f64 / n as f64);
            let x = &features[i];
            let y = targets[i];
            let margin = y * (b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>());
            let shrink = 1.0 - eta * lambda;
            if margin < 1.0 {
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj = shrink * *wj + eta * y * xj;
                }
                b += eta * y;
            } else {
                w.iter_mut().for_each(|wj| *wj *= shrink);
            }
            t += 1;
            if epoch > 0 || cfg.epochs == 1 {
                averaged += 1;
                let k = 1.0 / averaged as f64;
                for (a, wj) in w_avg.iter_mut().zip(&w) {
                    *a += (wj - *a) * k;
                }
                b_avg += (b - b_avg) * k;
            }
        }
    }
    (w_avg, b_avg)
}

/// Trains one linear classifier per class. Deterministic for a given seed;
/// each class uses its own random stream, so classes may train in parallel.
pub fn train_svm(features: &[Vec<f64>], labels: &[usize], num_classes: usize, cfg: &SvmConfig) -> Result<SvmModel> {
    if features.is_empty() {
        return Err(Error::Empty("svm training set"));
    }
    check_dim(features.len(), labels.len(), "svm labels")?;
    if !(cfg.c > 0.0) || !(cfg.learning_rate > 0.0) || cfg.epochs == 0 {
        return Err(Error::config("svm needs C > 0, learning rate > 0 and epochs > 0"));
    }
    let dim = features[0].len();
    for x in features {
        check_dim(dim, x.len(), "svm feature dimension")?;
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            num_classes,
        });
    }
    let first = labels[0];
    if num_classes < 2 || labels.iter().all(|&l| l == first) {
        return Err(Error::config("svm training needs samples from at least two classes"));
    }

    let per_class: Vec<(Vec<f64>, f64)> = (0..num_classes)
        .into_par_iter()
        .map(|c| {
            let targets: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            train_binary(features, &targets, cfg, c as u64)
        })
        .collect();
    let mut weights = Vec::with_capacity(num_classes * dim);
    let mut biases = Vec::with_capacity(num_classes);
    for (w, b) in per_class {
        weights.extend(w);
        biases.push(b);
    }
    SvmModel::from_parts(num_classes, dim, cfg.c, weights, biases)
}

/// Fraction of correctly predicted samples.
pub fn accuracy(model: &SvmModel, features: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if features.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut correct = 0;
    for (x, &l) in features.iter().zip(labels) {
        if predict(model, x)?.label == l {
            correct += 1;
        }
    }
    Ok(correct as f64 / features.len() as f64)
}
