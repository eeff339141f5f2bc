//! Mini-batch SGD with momentum and weight decay on the joint objective.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::net::{ConvNet, Dense, Params};
use crate::error::{Error, Result};
use crate::tensor::{LabeledDataset, Tensor3};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Importance factor of each auxiliary head.
    pub lambda_aux: Vec<f64>,
    pub learning_rate: f64,
    /// Per-epoch multiplicative learning-rate decay.
    pub lr_decay: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Seeds the per-epoch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_aux: vec![0.3],
            learning_rate: 0.01,
            lr_decay: 0.9,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 16,
            epochs: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, num_heads: usize) -> Result<()> {
        if self.lambda_aux.len() != num_heads {
            return Err(Error::config(format!(
                "{} auxiliary weights given for {num_heads} heads",
                self.lambda_aux.len()
            )));
        }
        if self.lambda_aux.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::config("auxiliary weights must be finite and non-negative"));
        }
        if !(self.learning_rate >= 0.0) || !(self.lr_decay > 0.0) {
            return Err(Error::config("learning rate must be >= 0 and decay > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::config("momentum must be in [0, 1) and weight decay >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi(epoch as i32)
    }
}

/// Momentum buffers, shaped like the network parameters.
#[derive(Debug, Clone)]
pub struct SgdState {
    velocity: Params,
}

impl SgdState {
    pub fn new(net: &ConvNet) -> Self {
        Self {
            velocity: net.params().zeros_like(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub main: f64,
    /// Mean unweighted auxiliary loss per head (`NaN` for inactive heads).
    pub aux: Vec<f64>,
    pub total: f64,
}

/// Gradients of the batch-mean joint loss. Per-sample gradients are
/// computed in parallel and summed in batch order.
pub fn batch_gradients(
    net: &ConvNet,
    batch: &[(&Tensor3, usize)],
    lambdas: &[f64],
) -> Result<(BatchLoss, Params)> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    let per_sample: Vec<_> = batch
        .par_iter()
        .map(|(img, label)| net.sample_gradients(img, *label, lambdas))
        .collect::<Result<_>>()?;
    let n = batch.len() as f64;
    let mut grads = net.params().zeros_like();
    let mut loss = BatchLoss {
        main: 0.0,
        aux: vec![0.0; lambdas.len()],
        total: 0.0,
    };
    for (terms, g) in &per_sample {
        grads.add(g);
        loss.main += terms.main;
        loss.total += terms.total;
        for (a, t) in loss.aux.iter_mut().zip(&terms.aux) {
            *a += t;
        }
    }
    for block in grads.blocks_mut() {
        block.weights.iter_mut().for_each(|g| *g /= n);
        block.bias.iter_mut().for_each(|g| *g /= n);
    }
    loss.main /= n;
    loss.total /= n;
    loss.aux.iter_mut().for_each(|a| *a /= n);
    Ok((loss, grads))
}

fn sgd_update(param: &mut Dense, grad: &Dense, vel: &mut Dense, lr: f64, momentum: f64, wd: f64) {
    for ((w, g), v) in param.weights.iter_mut().zip(&grad.weights).zip(vel.weights.iter_mut()) {
        *v = momentum * *v - lr * (g + wd * *w);
        *w += *v;
    }
    for ((b, g), v) in param.bias.iter_mut().zip(&grad.bias).zip(vel.bias.iter_mut()) {
        *v = momentum * *v - lr * g;
        *b += *v;
    }
}

/// One SGD step on `batch`. Weight decay applies to weights, not biases.
/// Heads with a zero weight are left untouched.
pub fn backward_and_step(
    net: &mut ConvNet,
    state: &mut SgdState,
    batch: &[(&Tensor3, usize)],
    cfg: &TrainConfig,
    learning_rate: f64,
) -> Result<BatchLoss> {
    cfg.validate(net.heads().len())?;
    let (loss, grads) = batch_gradients(net, batch, &cfg.lambda_aux)?;
    if !loss.total.is_finite() {
        return Err(Error::NonFinite(format!("batch loss {}", loss.total)));
    }
    let params = net.params_mut();
    for ((p, g), v) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.velocity.layers.iter_mut())
    {
        if let (Some(p), Some(g), Some(v)) = (p.as_mut(), g.as_ref(), v.as_mut()) {
            sgd_update(p, g, v, learning_rate, cfg.momentum, cfg.weight_decay);
        }
    }
    sgd_update(
        &mut params.score,
        &grads.score,
        &mut state.velocity.score,
        learning_rate,
        cfg.momentum,
        cfg.weight_decay,
    );
    for (a, ((p, g), v)) in params
        .heads
        .iter_mut()
        .zip(&grads.heads)
        .zip(state.velocity.heads.iter_mut())
        .enumerate()
    {
        if cfg.lambda_aux[a] == 0.0 {
            continue;
        }
        sgd_update(&mut p.conv, &g.conv, &mut v.conv, learning_rate, cfg.momentum, cfg.weight_decay);
        sgd_update(&mut p.score, &g.score, &mut v.score, learning_rate, cfg.momentum, cfg.weight_decay);
    }
    if !net.params().all_finite() {
        return Err(Error::NonFinite("parameters after sgd step".into()));
    }
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogEntry {
    pub iteration: usize,
    pub main_loss: f64,
    pub aux_losses: Vec<f64>,
    pub learning_rate: f64,
}

/// Trains for `cfg.epochs` passes over `data`, shuffling every epoch with a
/// generator seeded from `cfg.seed`. Stops after `max_steps` steps if given.
pub fn train(
    net: &mut ConvNet,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    max_steps: Option<usize>,
) -> Result<Vec<TrainLogEntry>> {
    cfg.validate(net.heads().len())?;
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if data.num_classes() != net.num_classes() {
        return Err(Error::config(format!(
            "dataset has {} classes, network {}",
            data.num_classes(),
            net.num_classes()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = SgdState::new(net);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::new();
    let mut step = 0;
    'outer: for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            if max_steps.is_some_and(|m| step >= m) {
                break 'outer;
            }
            let batch: Vec<(&Tensor3, usize)> = chunk
                .iter()
                .map(|&i| {
                    let (img, label) = &data.items()[i];
                    (img, *label)
                })
                .collect();
            let loss = backward_and_step(net, &mut state, &batch, cfg, lr)?;
            log.push(TrainLogEntry {
                iteration: step,
                main_loss: loss.main,
                aux_losses: loss.aux,
                learning_rate: lr,
            });
            step += 1;
        }
    }
    Ok(log)
}

/// Mean joint loss over a dataset (no parameter update).
pub fn dataset_loss(net: &ConvNet, data: &LabeledDataset, lambdas: &[f64]) -> Result<f64> {
    let losses: Vec<f64> = data
        .items()
        .par_iter()
        .map(|(img, label)| {
            let out = net.forward(img)?;
            let used: Vec<Vec<f64>> = out.aux_scores;
            super::loss::joint_loss(&out.main_scores, &used, *label, lambdas)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / data.len().max(1) as f64)
}
