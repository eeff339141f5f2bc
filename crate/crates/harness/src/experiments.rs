//! Diagnostic experiments: ambiguous-pair errors, occlusion sensitivity and
//! top-activation class distributions.

use lsdhm_core::nn::ConvNet;
use lsdhm_core::{LabeledDataset, Rect, Tensor3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataset::{SceneMeta, GLYPH_H, GLYPH_W};
use crate::error::{HarnessError, Result};
use crate::pipeline::{accuracy, select_and_train, FeatureTable};

/// Binary test errors (percent) for one ambiguous pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairErrors {
    pub a: usize,
    pub b: usize,
    pub fc: f64,
    pub conv: f64,
    pub both: f64,
}

fn restrict(x: &[Vec<f64>], y: &[usize], a: usize, b: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    x.iter()
        .zip(y)
        .filter(|(_, &l)| l == a || l == b)
        .map(|(v, &l)| (v.clone(), usize::from(l == b)))
        .unzip()
}

/// For each pair, trains binary classifiers on FC features, FCV (the conv
/// encoding) and the fused vector, and reports their test errors.
pub fn pair_errors(
    cfg: &RunConfig,
    train: &FeatureTable,
    test: &FeatureTable,
    pairs: &[(usize, usize)],
) -> Result<Vec<PairErrors>> {
    if pairs.is_empty() {
        return Err(HarnessError::Config("no ambiguous pairs configured".into()));
    }
    let mut out = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        let err = |name: &str| -> Result<f64> {
            let (tx, ty) = restrict(train.get(name).expect("feature set"), &train.labels, a, b);
            let (vx, vy) = restrict(test.get(name).expect("feature set"), &test.labels, a, b);
            if tx.is_empty() || vx.is_empty() {
                return Err(HarnessError::Data(format!("pair ({a}, {b}) has no samples")));
            }
            let (_, clf) = select_and_train(cfg, &tx, &ty, 2)?;
            Ok(100.0 * (1.0 - accuracy(&clf, &vx, &vy)?))
        };
        out.push(PairErrors {
            a,
            b,
            fc: err("fc")?,
            conv: err("fcv")?,
            both: err("fused")?,
        });
    }
    Ok(out)
}

pub fn pairs_csv(rows: &[PairErrors]) -> String {
    let mut s = String::from("pair,fc_error,conv_error,both_error\n");
    for r in rows {
        s.push_str(&format!("{}-{},{:.2},{:.2},{:.2}\n", r.a, r.b, r.fc, r.conv, r.both));
    }
    s
}

/// l2 distance between the conv maps of `image` and of each occluded copy.
/// Occluded pixels are set to the image mean.
pub fn occlusion_differences(net: &ConvNet, layer: usize, image: &Tensor3, rects: &[Rect]) -> Result<Vec<f64>> {
    let base = net.extract_conv(image, layer)?;
    let fill = image.mean();
    rects
        .iter()
        .map(|&r| {
            let occluded = image.occlude(r, fill)?;
            Ok(base.l2_distance(&net.extract_conv(&occluded, layer)?)?)
        })
        .collect()
}

/// Random rectangles of glyph size that avoid every glyph box grown by
/// `margin`. Returns fewer than `n` if the image has no room.
pub fn background_rects(meta: &SceneMeta, height: usize, width: usize, n: usize, margin: usize, seed: u64) -> Vec<Rect> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grown: Vec<Rect> = meta.glyph_boxes.iter().map(|b| b.dilate(margin, height, width)).collect();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n * 200 {
        if out.len() == n {
            break;
        }
        let top = rng.random_range(0..=height - GLYPH_H);
        let left = rng.random_range(0..=width - GLYPH_W);
        let r = Rect::new(top, left, top + GLYPH_H, left + GLYPH_W);
        if !grown.iter().any(|g| g.intersects(&r)) {
            out.push(r);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionRow {
    pub image: usize,
    pub label: usize,
    pub glyph_rects: usize,
    pub glyph_mean: f64,
    pub background_mean: f64,
}

impl OcclusionRow {
    pub fn glyph_wins(&self) -> bool {
        self.glyph_mean > self.background_mean
    }
}

/// Occludes each glyph box and as many equal-area background rectangles in
/// `count` test images spread evenly over the test set.
pub fn occlusion_study(
    cfg: &RunConfig,
    net: &ConvNet,
    test: &LabeledDataset,
    meta: &[SceneMeta],
    count: usize,
) -> Result<Vec<OcclusionRow>> {
    let candidates: Vec<usize> = (0..test.len()).filter(|&i| !meta[i].glyph_boxes.is_empty()).collect();
    if candidates.is_empty() {
        return Err(HarnessError::Data("no test image contains glyphs".into()));
    }
    let count = count.min(candidates.len());
    let picked: Vec<usize> = (0..count).map(|j| candidates[j * candidates.len() / count]).collect();
    picked
        .par_iter()
        .map(|&i| {
            let (img, label) = &test.items()[i];
            let m = &meta[i];
            let glyph = occlusion_differences(net, cfg.encode_layer, img, &m.glyph_boxes)?;
            let bg_rects = background_rects(
                m,
                img.height(),
                img.width(),
                m.glyph_boxes.len(),
                2,
                cfg.exp_occlusion_seed.wrapping_add(i as u64),
            );
            let bg = occlusion_differences(net, cfg.encode_layer, img, &bg_rects)?;
            let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
            Ok(OcclusionRow {
                image: i,
                label: *label,
                glyph_rects: glyph.len(),
                glyph_mean: mean(&glyph),
                background_mean: mean(&bg),
            })
        })
        .collect()
}

pub fn occlusion_csv(rows: &[OcclusionRow]) -> String {
    let mut s = String::from("image,label,glyph_rects,glyph_diff,background_diff\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.image, r.label, r.glyph_rects, r.glyph_mean, r.background_mean
        ));
    }
    s
}

/// Indices of the `q` largest values; equal values keep index order.
pub fn top_indices(values: &[f64], q: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx.truncate(q);
    idx
}

pub fn class_histogram(indices: &[usize], labels: &[usize], num_classes: usize) -> Vec<usize> {
    let mut h = vec![0; num_classes];
    for &i in indices {
        h[labels[i]] += 1;
    }
    h
}

/// Total-variation distance between two histograms of equal mass.
pub fn total_variation(a: &[usize], b: &[usize]) -> f64 {
    let na: usize = a.iter().sum();
    let nb: usize = b.iter().sum();
    if na == 0 || nb == 0 {
        return 0.0;
    }
    0.5 * a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 / na as f64 - y as f64 / nb as f64).abs())
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationStats {
    pub q: usize,
    pub fc_histogram: Vec<usize>,
    pub conv_histogram: Vec<usize>,
    pub total_variation: f64,
}

/// Class distribution of the `q` images with the largest mean activation,
/// once at the FC layer and once at the encoding conv layer.
pub fn activation_stats(net: &ConvNet, layer: usize, data: &LabeledDataset, fraction: f64) -> Result<ActivationStats> {
    let means: Vec<(f64, f64)> = data
        .items()
        .par_iter()
        .map(|(img, _)| {
            let fc = net.extract_fc(img)?;
            let conv = net.extract_conv(img, layer)?;
            Ok((fc.iter().sum::<f64>() / fc.len() as f64, conv.mean()))
        })
        .collect::<lsdhm_core::Result<_>>()?;
    let q = ((data.len() as f64 * fraction).round() as usize).clamp(1, data.len());
    let labels = data.labels();
    let fc: Vec<f64> = means.iter().map(|m| m.0).collect();
    let conv: Vec<f64> = means.iter().map(|m| m.1).collect();
    let fc_histogram = class_histogram(&top_indices(&fc, q), &labels, data.num_classes());
    let conv_histogram = class_histogram(&top_indices(&conv, q), &labels, data.num_classes());
    let tv = total_variation(&fc_histogram, &conv_histogram);
    Ok(ActivationStats {
        q,
        fc_histogram,
        conv_histogram,
        total_variation: tv,
    })
}

pub fn stats_csv(stats: &ActivationStats) -> String {
    let mut s = String::from("class,fc_top_count,conv_top_count\n");
    for (c, (a, b)) in stats.fc_histogram.iter().zip(&stats.conv_histogram).enumerate() {
        s.push_str(&format!("{c},{a},{b}\n"));
    }
    s
}
