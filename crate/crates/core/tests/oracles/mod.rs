//! Straightforward reference implementations used as test oracles, plus
//! random model builders. Shared with the harness acceptance suite.
#![allow(dead_code)]

use lsdhm_core::nn::{ConvNet, LayerSpec};
use lsdhm_core::{DescriptorSet, GmmModel, PcaModel, Tensor3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, h: usize, w: usize, d: usize) -> Tensor3 {
    let data = (0..h * w * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor3::new(h, w, d, data).unwrap()
}

/// Non-negative maps, as produced by a ReLU layer.
pub fn random_maps(rng: &mut ChaCha8Rng, h: usize, w: usize, d: usize) -> Tensor3 {
    let data = (0..h * w * d).map(|_| rng.random_range(0.0..2.0)).collect();
    Tensor3::new(h, w, d, data).unwrap()
}

/// PCA with a random orthonormal basis (Gram-Schmidt on Gaussian-ish rows).
pub fn random_pca(rng: &mut ChaCha8Rng, input: usize, output: usize) -> PcaModel {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    while rows.len() < output {
        let mut v: Vec<f64> = (0..input).map(|_| rng.random_range(-1.0..1.0)).collect();
        for r in &rows {
            let d: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= d * b);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            rows.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    let mean = (0..input).map(|_| rng.random_range(0.0..0.5)).collect();
    let var = (0..output).map(|i| 1.0 / (i + 1) as f64).collect();
    PcaModel::from_parts(input, output, mean, rows.concat(), var, false).unwrap()
}

pub fn random_gmm(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> GmmModel {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let rest: f64 = weights[1..].iter().sum();
    weights[0] = 1.0 - rest;
    let means = (0..k * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sds = (0..k * dim).map(|_| rng.random_range(0.3..1.5)).collect();
    GmmModel::from_parts(k, dim, weights, means, sds, 1e-6, 1e-8, 0).unwrap()
}

/// Draws from a random diagonal mixture so EM has real structure to find.
pub fn mixture_sample(seed: u64, t: usize, dim: usize, k: usize) -> DescriptorSet {
    let mut r = rng(seed);
    let centers: Vec<Vec<f64>> = (0..k).map(|_| (0..dim).map(|_| r.random_range(-3.0..3.0)).collect()).collect();
    let sds: Vec<f64> = (0..k).map(|_| r.random_range(0.3..1.2)).collect();
    let mut data = Vec::with_capacity(t * dim);
    for _ in 0..t {
        let c = r.random_range(0..k);
        let n = Normal::new(0.0, sds[c]).unwrap();
        data.extend(centers[c].iter().map(|m| m + n.sample(&mut r)));
    }
    DescriptorSet::new(dim, data).unwrap()
}

/// Posteriors by explicit Gaussian densities with a max shift.
pub fn posteriors(gmm: &GmmModel, x: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = (0..gmm.k())
        .map(|c| {
            let mut l = gmm.weights()[c].ln();
            for j in 0..gmm.dim() {
                let s = gmm.stddev(c)[j];
                let z = (x[j] - gmm.mean(c)[j]) / s;
                l += -0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
            }
            l
        })
        .collect();
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_density(gmm: &GmmModel, x: &[f64]) -> f64 {
    let mut total = 0.0;
    for c in 0..gmm.k() {
        let mut p = gmm.weights()[c];
        for j in 0..gmm.dim() {
            let s = gmm.stddev(c)[j];
            let z = (x[j] - gmm.mean(c)[j]) / s;
            p *= (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        }
        total += p;
    }
    total.ln()
}

/// Fisher vector computed one descriptor at a time from the textbook
/// per-sample gradients, then power and l2 normalized.
pub fn brute_force_fcv(maps: &Tensor3, pca: &PcaModel, gmm: &GmmModel, alpha: f64) -> Vec<f64> {
    let (k, m) = (gmm.k(), gmm.dim());
    let mut fv = vec![0.0; 2 * k * m];
    for h in 0..maps.height() {
        for w in 0..maps.width() {
            let fiber: Vec<f64> = (0..maps.channels()).map(|d| maps.get(h, w, d)).collect();
            let peak = fiber.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let norm: Vec<f64> = fiber.iter().map(|v| if peak > 0.0 { v / peak } else { *v }).collect();
            let x: Vec<f64> = (0..m)
                .map(|i| (0..pca.input_dim()).map(|j| pca.row(i)[j] * (norm[j] - pca.mean()[j])).sum())
                .collect();
            let gamma = posteriors(gmm, &x);
            for c in 0..k {
                let wc = gmm.weights()[c];
                for j in 0..m {
                    let z = (x[j] - gmm.mean(c)[j]) / gmm.stddev(c)[j];
                    fv[c * m + j] += gamma[c] * z / wc.sqrt();
                    fv[k * m + c * m + j] += gamma[c] * (z * z - 1.0) / (2.0 * wc).sqrt();
                }
            }
        }
    }
    for v in fv.iter_mut() {
        *v = v.signum() * v.abs().powf(alpha);
    }
    let n = fv.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        fv.iter_mut().for_each(|v| *v /= n);
    }
    fv
}

pub fn hinge(scores: &[f64], label: usize) -> f64 {
    scores
        .iter()
        .enumerate()
        .map(|(c, s)| {
            let t = if c == label { 1.0 } else { -1.0 };
            (1.0 - s * t).max(0.0)
        })
        .sum()
}

fn dense(input: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let n = input.len();
    (0..b.len())
        .map(|o| b[o] + (0..n).map(|i| w[o * n + i] * input[i]).sum::<f64>())
        .collect()
}

/// Same-padded convolution with `[out][kh][kw][in]` weights, then ReLU.
pub fn conv_relu(x: &Tensor3, w: &[f64], b: &[f64], kernel: usize, stride: usize) -> Tensor3 {
    let (h, wd, c) = x.shape();
    let pad = (kernel - 1) / 2;
    let oh = (h + 2 * pad - kernel) / stride + 1;
    let ow = (wd + 2 * pad - kernel) / stride + 1;
    let oc = b.len();
    let mut out = vec![0.0; oh * ow * oc];
    for y in 0..oh {
        for xx in 0..ow {
            for o in 0..oc {
                let mut acc = b[o];
                for kh in 0..kernel {
                    for kw in 0..kernel {
                        let iy = (y * stride + kh) as isize - pad as isize;
                        let ix = (xx * stride + kw) as isize - pad as isize;
                        if iy < 0 || ix < 0 || iy as usize >= h || ix as usize >= wd {
                            continue;
                        }
                        for i in 0..c {
                            acc += w[((o * kernel + kh) * kernel + kw) * c + i] * x.get(iy as usize, ix as usize, i);
                        }
                    }
                }
                out[(y * ow + xx) * oc + o] = acc.max(0.0);
            }
        }
    }
    Tensor3::new(oh, ow, oc, out).unwrap()
}

pub fn max_pool(x: &Tensor3, kernel: usize, stride: usize) -> Tensor3 {
    let (h, w, c) = x.shape();
    let oh = (h - kernel) / stride + 1;
    let ow = (w - kernel) / stride + 1;
    let mut out = vec![0.0; oh * ow * c];
    for y in 0..oh {
        for xx in 0..ow {
            for ch in 0..c {
                let mut m = f64::NEG_INFINITY;
                for kh in 0..kernel {
                    for kw in 0..kernel {
                        m = m.max(x.get(y * stride + kh, xx * stride + kw, ch));
                    }
                }
                out[(y * ow + xx) * c + ch] = m;
            }
        }
    }
    Tensor3::new(oh, ow, c, out).unwrap()
}

/// Trunk activations and main scores computed with the loops above.
pub fn naive_forward(net: &ConvNet, image: &Tensor3) -> (Vec<Tensor3>, Vec<f64>) {
    let mut cur = image.clone();
    let mut maps = Vec::new();
    for (i, layer) in net.spec().layers.iter().enumerate() {
        let p = &net.params().layers[i];
        cur = match *layer {
            LayerSpec::Conv { kernel, stride, .. } => {
                let p = p.as_ref().unwrap();
                conv_relu(&cur, &p.weights, &p.bias, kernel, stride)
            }
            LayerSpec::MaxPool { kernel, stride } => max_pool(&cur, kernel, stride),
            LayerSpec::FullyConnected { .. } => {
                let p = p.as_ref().unwrap();
                let v: Vec<f64> = dense(cur.data(), &p.weights, &p.bias).into_iter().map(|v| v.max(0.0)).collect();
                Tensor3::new(1, 1, v.len(), v).unwrap()
            }
        };
        maps.push(cur.clone());
    }
    let s = &net.params().score;
    let scores = dense(cur.data(), &s.weights, &s.bias);
    (maps, scores)
}

#[derive(Debug, Clone, Default)]
pub struct GradCheck {
    pub max_rel: f64,
    pub worst: String,
    pub checked: usize,
    /// Coordinates where every step size straddled a kink.
    pub skipped: usize,
}

/// Denominator floor of the relative error, so that exact zeros compare
/// against round-off instead of dividing by it.
pub const REL_FLOOR: f64 = 1e-4;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Central differences of the joint loss for every parameter, compared with
/// `sample_gradients`.
///
/// Along a single coordinate the loss is piecewise affine, so a step that
/// stays inside one linear region has equal forward and backward
/// differences. When they disagree the step crossed a ReLU, max-pool or
/// hinge kink; the step is jittered smaller and retried. The agreement
/// threshold is 1e-12 of the loss because slope changes at some kinks are
/// tiny, and a looser threshold lets them through as gradient errors.
///
/// The last FC layer, the main score layer and head score layers are
/// perturbed analytically from the cached activations; every other
/// parameter goes through a full forward pass.
pub fn gradient_check(net: &mut ConvNet, image: &Tensor3, label: usize, lambdas: &[f64], eps: f64) -> GradCheck {
    let (_, analytic) = net.sample_gradients(image, label, lambdas).unwrap();
    let fwd = net.forward(image).unwrap();
    let loss_of = |main: &[f64], aux: &[Vec<f64>]| -> f64 {
        hinge(main, label)
            + lambdas
                .iter()
                .zip(aux)
                .filter(|(l, _)| **l != 0.0)
                .map(|(l, s)| l * hinge(s, label))
                .sum::<f64>()
    };
    let mut report = GradCheck::default();
    let mut record = |name: String, idx: usize, a: f64, f: &mut dyn FnMut(f64) -> f64| {
        let f0 = f(0.0);
        let mut step = eps;
        for _ in 0..4 {
            let (fp, fm) = (f(step), f(-step));
            let (df, db) = (fp - f0, f0 - fm);
            if (df - db).abs() <= 1e-12 * (1.0 + f0.abs()) {
                let n = (fp - fm) / (2.0 * step);
                let r = rel_err(a, n);
                if r > report.max_rel {
                    report.max_rel = r;
                    report.worst = format!("{name}[{idx}] analytic {a:e} numeric {n:e}");
                }
                report.checked += 1;
                return;
            }
            step *= 0.37;
        }
        report.skipped += 1;
    };

    let spec = net.spec().clone();
    let last_fc = spec.last_fc();
    let top_fc = last_fc.filter(|&i| i + 1 == spec.layers.len());
    let n_cls = spec.num_classes;

    // last FC layer and score layer from cached activations
    let score_w = net.params().score.weights.clone();
    if let Some(l) = top_fc {
        let x: Vec<f64> = if l == 0 { image.data().to_vec() } else { fwd.maps[l - 1].data().to_vec() };
        let p = net.params().layers[l].clone().unwrap();
        let z = dense(&x, &p.weights, &p.bias);
        let n_in = x.len();
        let h: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
        let scores_from = |o: usize, dz: f64| -> Vec<f64> {
            let dh = (z[o] + dz).max(0.0) - h[o];
            (0..n_cls).map(|c| fwd.main_scores[c] + dh * score_w[c * h.len() + o]).collect()
        };
        for o in 0..z.len() {
            for i in 0..n_in {
                let a = analytic.layers[l].as_ref().unwrap().weights[o * n_in + i];
                record(format!("layer{l}.w"), o * n_in + i, a, &mut |d| loss_of(&scores_from(o, d * x[i]), &fwd.aux_scores));
            }
            let a = analytic.layers[l].as_ref().unwrap().bias[o];
            record(format!("layer{l}.b"), o, a, &mut |d| loss_of(&scores_from(o, d), &fwd.aux_scores));
        }
    }
    let feat: Vec<f64> = fwd.maps.last().map(|m| m.data().to_vec()).unwrap_or_else(|| image.data().to_vec());
    for c in 0..n_cls {
        let bump = |d: f64| {
            let mut s = fwd.main_scores.clone();
            s[c] += d;
            s
        };
        for j in 0..feat.len() {
            let a = analytic.score.weights[c * feat.len() + j];
            record("score.w".into(), c * feat.len() + j, a, &mut |d| loss_of(&bump(d * feat[j]), &fwd.aux_scores));
        }
        record("score.b".into(), c, analytic.score.bias[c], &mut |d| loss_of(&bump(d), &fwd.aux_scores));
    }

    // head score layers from cached pooled maps
    for (a_idx, hm) in fwd.head_maps.iter().enumerate() {
        let pooled = hm.pooled.data();
        for c in 0..n_cls {
            let bump = |d: f64| {
                let mut aux = fwd.aux_scores.clone();
                aux[a_idx][c] += d;
                aux
            };
            for j in 0..pooled.len() {
                let a = analytic.heads[a_idx].score.weights[c * pooled.len() + j];
                record(format!("head{a_idx}.score.w"), c * pooled.len() + j, a, &mut |d| {
                    loss_of(&fwd.main_scores, &bump(d * pooled[j]))
                });
            }
            let a = analytic.heads[a_idx].score.bias[c];
            record(format!("head{a_idx}.score.b"), c, a, &mut |d| loss_of(&fwd.main_scores, &bump(d)));
        }
    }

    // everything else by full forward passes
    let full_loss = |net: &ConvNet| {
        let out = net.forward(image).unwrap();
        loss_of(&out.main_scores, &out.aux_scores)
    };
    for l in 0..spec.layers.len() {
        if Some(l) == top_fc || net.params().layers[l].is_none() {
            continue;
        }
        let nw = net.params().layers[l].as_ref().unwrap().weights.len();
        let nb = net.params().layers[l].as_ref().unwrap().bias.len();
        for i in 0..nw + nb {
            let a = {
                let g = analytic.layers[l].as_ref().unwrap();
                if i < nw { g.weights[i] } else { g.bias[i - nw] }
            };
            let orig = {
                let p = net.params().layers[l].as_ref().unwrap();
                if i < nw { p.weights[i] } else { p.bias[i - nw] }
            };
            let net_ref = &mut *net;
            record(format!("layer{l}"), i, a, &mut |d| {
                set_param(net_ref, l, i, nw, orig + d);
                let v = full_loss(net_ref);
                set_param(net_ref, l, i, nw, orig);
                v
            });
        }
    }
    for a_idx in 0..net.heads().len() {
        let nw = net.params().heads[a_idx].conv.weights.len();
        let nb = net.params().heads[a_idx].conv.bias.len();
        for i in 0..nw + nb {
            let g = &analytic.heads[a_idx].conv;
            let a = if i < nw { g.weights[i] } else { g.bias[i - nw] };
            let p = &net.params().heads[a_idx].conv;
            let orig = if i < nw { p.weights[i] } else { p.bias[i - nw] };
            let net_ref = &mut *net;
            record(format!("head{a_idx}.conv"), i, a, &mut |d| {
                let p = &mut net_ref.params_mut().heads[a_idx].conv;
                if i < nw { p.weights[i] = orig + d } else { p.bias[i - nw] = orig + d }
                let v = full_loss(net_ref);
                let p = &mut net_ref.params_mut().heads[a_idx].conv;
                if i < nw { p.weights[i] = orig } else { p.bias[i - nw] = orig }
                v
            });
        }
    }
    report
}

fn set_param(net: &mut ConvNet, layer: usize, i: usize, nw: usize, v: f64) {
    let p = net.params_mut().layers[layer].as_mut().unwrap();
    if i < nw {
        p.weights[i] = v;
    } else {
        p.bias[i - nw] = v;
    }
}
