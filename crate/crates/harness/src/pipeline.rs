//! Train net -> extract -> PCA/GMM/codebook -> encode -> fuse -> SVMs.

use std::path::Path;
use std::time::Instant;

use lsdhm_core::fisher::{encode_bow, encode_direct, l2_normalize, BowCodebook};
use lsdhm_core::fusion::fuse_slices;
use lsdhm_core::nn::{self, ConvNet, ConvNetSpec, LcsHeadSpec, Shape, TrainConfig, TrainLogEntry};
use lsdhm_core::svm::{self, SvmConfig, SvmModel};
use lsdhm_core::{
    channels_to_descriptors, fit_gmm, fit_pca, max_abs_normalize, DescriptorSet, EmConfig, FcvEncoder, GmmModel,
    LabeledDataset, PcaModel, Tensor3,
};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataset::{generate_dataset, MicroSceneSpec, SceneMeta};
use crate::error::{HarnessError, Result, StageContext};
use crate::ppm::ingest_images;

/// Feature sets evaluated by the pipeline, in reporting order.
pub const FEATURE_SETS: [&str; 5] = ["fc", "fcv", "direct", "bow", "fused"];

#[derive(Debug, Clone)]
pub struct RunData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    /// Glyph placements, when the data was generated.
    pub test_meta: Option<Vec<SceneMeta>>,
    pub pairs: Vec<(usize, usize)>,
}

pub fn load_data(cfg: &RunConfig) -> Result<RunData> {
    if cfg.data_dir.is_empty() {
        let spec = MicroSceneSpec::standard(cfg.data_classes, cfg.data_pairs, cfg.data_noise, cfg.data_seed)?;
        let split = generate_dataset(&spec, cfg.data_per_class)?;
        Ok(RunData {
            train: split.train,
            test: split.test,
            test_meta: Some(split.test_meta),
            pairs: spec.ambiguous_pairs,
        })
    } else {
        let dir = Path::new(&cfg.data_dir);
        let train = ingest_images(dir, &dir.join(&cfg.data_train_manifest), None)?;
        let test = ingest_images(dir, &dir.join(&cfg.data_test_manifest), Some(train.num_classes()))?;
        if train.image_shape() != test.image_shape() {
            return Err(HarnessError::Data("train and test images differ in size".into()));
        }
        Ok(RunData {
            train,
            test,
            test_meta: None,
            pairs: Vec::new(),
        })
    }
}

pub fn build_net(cfg: &RunConfig, input: (usize, usize, usize), num_classes: usize) -> Result<ConvNet> {
    let spec = ConvNetSpec::desk_with(Shape::new(input.0, input.1, input.2), cfg.net_fc_width, num_classes);
    let heads = if cfg.net_lcs {
        vec![LcsHeadSpec::new(cfg.net_head_layer, cfg.net_head_channels)]
    } else {
        Vec::new()
    };
    Ok(ConvNet::new(spec, heads, cfg.net_seed)?)
}

pub fn train_config(cfg: &RunConfig, num_heads: usize) -> TrainConfig {
    TrainConfig {
        lambda_aux: vec![cfg.train_lambda; num_heads],
        learning_rate: cfg.train_lr,
        lr_decay: cfg.train_lr_decay,
        momentum: cfg.train_momentum,
        weight_decay: cfg.train_weight_decay,
        batch_size: cfg.train_batch,
        epochs: cfg.train_epochs,
        seed: cfg.train_seed,
    }
}

pub fn train_net(cfg: &RunConfig, data: &LabeledDataset) -> Result<(ConvNet, Vec<TrainLogEntry>)> {
    let shape = data
        .image_shape()
        .ok_or_else(|| HarnessError::Data("training set is empty".into()))?;
    let mut net = build_net(cfg, shape, data.num_classes())?;
    let tc = train_config(cfg, net.heads().len());
    let log = nn::train(&mut net, data, &tc, None).map_err(|e| match e {
        lsdhm_core::Error::NonFinite(m) => HarnessError::Numeric(m),
        other => other.into(),
    })?;
    Ok((net, log))
}

/// Conv maps at the encoding layer and FC activations for every image.
pub struct Extracted {
    pub maps: Vec<Tensor3>,
    pub fc: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

pub fn extract(net: &ConvNet, data: &LabeledDataset, layer: usize) -> Result<Extracted> {
    let pairs: Vec<(Tensor3, Vec<f64>)> = data
        .items()
        .par_iter()
        .map(|(img, _)| Ok((net.extract_conv(img, layer)?, net.extract_fc(img)?)))
        .collect::<lsdhm_core::Result<_>>()?;
    let (maps, fc) = pairs.into_iter().unzip();
    Ok(Extracted {
        maps,
        fc,
        labels: data.labels(),
    })
}

/// Max-abs normalized fibers of all training maps, subsampled to `cap`.
pub fn training_descriptors(maps: &[Tensor3], cap: usize, seed: u64) -> Result<DescriptorSet> {
    let first = maps.first().ok_or_else(|| HarnessError::Data("no training maps".into()))?;
    let mut all = channels_to_descriptors(first);
    for m in &maps[1..] {
        all.extend(&channels_to_descriptors(m))?;
    }
    let dim = all.dim();
    let total = all.count();
    let mut rows: Vec<usize> = if total > cap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample(&mut rng, total, cap).into_vec()
    } else {
        (0..total).collect()
    };
    rows.sort_unstable();
    let mut data = Vec::with_capacity(rows.len() * dim);
    for r in rows {
        let start = data.len();
        data.extend_from_slice(all.get(r));
        max_abs_normalize(&mut data[start..]);
    }
    Ok(DescriptorSet::new(dim, data)?)
}

#[derive(Debug, Clone)]
pub struct Dictionaries {
    pub pca: PcaModel,
    pub gmm: GmmModel,
    pub codebook: BowCodebook,
}

pub fn fit_pca_stage(cfg: &RunConfig, train_maps: &[Tensor3]) -> Result<PcaModel> {
    let descriptors = training_descriptors(train_maps, cfg.gmm_sample_cap, cfg.gmm_seed)?;
    fit_pca(&descriptors, cfg.pca_dim).stage("fit-pca")
}

/// Fits the GMM and the BoW codebook on the same projected descriptor
/// sample. Codebook centers are rounded to f32, the precision they are
/// stored with, so a reloaded codebook assigns exactly like this one.
pub fn fit_gmm_stage(cfg: &RunConfig, train_maps: &[Tensor3], pca: &PcaModel) -> Result<(GmmModel, BowCodebook)> {
    let descriptors = training_descriptors(train_maps, cfg.gmm_sample_cap, cfg.gmm_seed)?;
    let projected = pca.project_set(&descriptors).stage("fit-gmm")?;
    let em = EmConfig {
        max_iters: cfg.gmm_max_iters,
        tol: cfg.gmm_tol,
        seed: cfg.gmm_seed,
        weight_floor: cfg.gmm_weight_floor,
        variance_floor: cfg.gmm_variance_floor,
    };
    let gmm = fit_gmm(&projected, cfg.gmm_k, &em).stage("fit-gmm")?;

    let n = projected.count().min(BOW_SAMPLE);
    let dim = projected.dim();
    let bow_set = DescriptorSet::new(dim, projected.as_flat()[..n * dim].to_vec())?;
    let trained = BowCodebook::train(&bow_set, cfg.bow_size.min(n), cfg.bow_iters, cfg.bow_seed).stage("fit-bow")?;
    let rounded = trained.centers().iter().map(|&c| c as f32 as f64).collect();
    let codebook = BowCodebook::new(dim, rounded)?;
    Ok((gmm, codebook))
}

pub fn fit_dictionaries(cfg: &RunConfig, train_maps: &[Tensor3], timings: &mut Timings) -> Result<Dictionaries> {
    let t = Instant::now();
    let pca = fit_pca_stage(cfg, train_maps)?;
    timings.push("fit-pca", t);
    let t = Instant::now();
    let (gmm, codebook) = fit_gmm_stage(cfg, train_maps, &pca)?;
    timings.push("fit-gmm", t);
    Ok(Dictionaries { pca, gmm, codebook })
}

/// Descriptors used for the BoW codebook (a prefix of the sampled set).
const BOW_SAMPLE: usize = 50_000;

/// All encodings of one split, each row already l2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub fc: Vec<Vec<f64>>,
    pub fcv: Vec<Vec<f64>>,
    pub direct: Vec<Vec<f64>>,
    pub bow: Vec<Vec<f64>>,
    pub fused: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl FeatureTable {
    pub fn get(&self, name: &str) -> Option<&[Vec<f64>]> {
        Some(match name {
            "fc" => &self.fc,
            "fcv" => &self.fcv,
            "direct" => &self.direct,
            "bow" => &self.bow,
            "fused" => &self.fused,
            _ => return None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn encode_all(cfg: &RunConfig, dicts: &Dictionaries, ex: &Extracted) -> Result<FeatureTable> {
    let encoder = FcvEncoder::new(dicts.pca.clone(), dicts.gmm.clone(), cfg.encode_alpha)?;
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = ex
        .maps
        .par_iter()
        .zip(&ex.fc)
        .map(|(maps, fc)| {
            let fcv = encoder.encode(maps)?.into_values();
            let direct = encode_direct(maps);
            let bow = encode_bow(maps, &dicts.pca, &dicts.codebook)?;
            let fused = fuse_slices(&fcv, fc)?.into_values();
            let mut fc = fc.clone();
            l2_normalize(&mut fc);
            Ok((fc, fcv, direct, bow, fused))
        })
        .collect::<lsdhm_core::Result<_>>()?;
    let mut t = FeatureTable {
        fc: Vec::new(),
        fcv: Vec::new(),
        direct: Vec::new(),
        bow: Vec::new(),
        fused: Vec::new(),
        labels: ex.labels.clone(),
    };
    for (fc, fcv, direct, bow, fused) in rows {
        t.fc.push(fc);
        t.fcv.push(fcv);
        t.direct.push(direct);
        t.bow.push(bow);
        t.fused.push(fused);
    }
    Ok(t)
}

/// A trained linear classifier, or a constant one when the training labels
/// hold a single class.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Svm(SvmModel),
    Constant(usize),
}

impl Classifier {
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        match self {
            Classifier::Svm(m) => Ok(svm::predict(m, x)?.label),
            Classifier::Constant(l) => Ok(*l),
        }
    }
}

pub fn svm_config(cfg: &RunConfig, c: f64) -> SvmConfig {
    SvmConfig {
        c,
        epochs: cfg.svm_epochs,
        learning_rate: cfg.svm_lr,
        seed: cfg.svm_seed,
    }
}

fn fit_classifier(x: &[Vec<f64>], y: &[usize], num_classes: usize, cfg: &SvmConfig) -> Result<Classifier> {
    let first = y.first().copied().unwrap_or(0);
    if y.iter().all(|&l| l == first) {
        return Ok(Classifier::Constant(first));
    }
    Ok(Classifier::Svm(svm::train_svm(x, y, num_classes, cfg)?))
}

pub fn accuracy(clf: &Classifier, x: &[Vec<f64>], y: &[usize]) -> Result<f64> {
    if x.is_empty() {
        return Err(HarnessError::Data("empty evaluation set".into()));
    }
    let mut correct = 0;
    for (v, &l) in x.iter().zip(y) {
        if clf.predict(v)? == l {
            correct += 1;
        }
    }
    Ok(correct as f64 / x.len() as f64)
}

/// Picks C from the grid on a stratified hold-out (every fifth training
/// sample of each class), then refits on the full training set. Ties go to
/// the earlier grid entry.
pub fn select_and_train(
    cfg: &RunConfig,
    x: &[Vec<f64>],
    y: &[usize],
    num_classes: usize,
) -> Result<(f64, Classifier)> {
    let grid = &cfg.svm_c_grid;
    let mut best_c = grid[0];
    if grid.len() > 1 {
        let mut seen = vec![0usize; num_classes];
        let (mut fit_x, mut fit_y, mut val_x, mut val_y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (v, &l) in x.iter().zip(y) {
            if seen[l] % 5 == 4 {
                val_x.push(v.clone());
                val_y.push(l);
            } else {
                fit_x.push(v.clone());
                fit_y.push(l);
            }
            seen[l] += 1;
        }
        if !val_x.is_empty() {
            let mut best_acc = f64::NEG_INFINITY;
            for &c in grid {
                let clf = fit_classifier(&fit_x, &fit_y, num_classes, &svm_config(cfg, c))?;
                let acc = accuracy(&clf, &val_x, &val_y)?;
                if acc > best_acc {
                    best_acc = acc;
                    best_c = c;
                }
            }
        }
    }
    let clf = fit_classifier(x, y, num_classes, &svm_config(cfg, best_c))?;
    Ok((best_c, clf))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureResult {
    pub name: String,
    pub dim: usize,
    pub c: f64,
    pub accuracy: f64,
    /// `None` for classes absent from the test split.
    pub per_class: Vec<Option<f64>>,
}

pub fn evaluate(
    clf: &Classifier,
    x: &[Vec<f64>],
    y: &[usize],
    num_classes: usize,
) -> Result<(f64, Vec<Option<f64>>)> {
    let mut hits = vec![0usize; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (v, &l) in x.iter().zip(y) {
        counts[l] += 1;
        if clf.predict(v)? == l {
            hits[l] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(HarnessError::Data("empty evaluation set".into()));
    }
    let acc = hits.iter().sum::<usize>() as f64 / total as f64;
    let per_class = hits
        .iter()
        .zip(&counts)
        .map(|(&h, &c)| (c > 0).then(|| h as f64 / c as f64))
        .collect();
    Ok((acc, per_class))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings(pub Vec<(String, f64)>);

impl Timings {
    pub fn push(&mut self, stage: &str, since: Instant) {
        self.0.push((stage.to_string(), since.elapsed().as_secs_f64()));
    }
}

pub struct PipelineOutput {
    pub data: RunData,
    pub net: ConvNet,
    pub train_log: Vec<TrainLogEntry>,
    pub dicts: Dictionaries,
    pub train_features: FeatureTable,
    pub test_features: FeatureTable,
    pub classifiers: Vec<(String, Classifier)>,
    pub results: Vec<FeatureResult>,
    pub timings: Timings,
}

impl PipelineOutput {
    pub fn result(&self, name: &str) -> Option<&FeatureResult> {
        self.results.iter().find(|r| r.name == name)
    }
}

/// Runs every stage in memory. Use [`crate::report::write_outputs`] to
/// persist the artifacts.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let mut timings = Timings::default();

    let t = Instant::now();
    let data = load_data(cfg).stage("load-data")?;
    timings.push("load-data", t);
    let num_classes = data.train.num_classes();

    let t = Instant::now();
    let (net, train_log) = train_net(cfg, &data.train).stage("train-net")?;
    timings.push("train-net", t);

    let t = Instant::now();
    let train_ex = extract(&net, &data.train, cfg.encode_layer).stage("extract")?;
    let test_ex = extract(&net, &data.test, cfg.encode_layer).stage("extract")?;
    timings.push("extract", t);

    let dicts = fit_dictionaries(cfg, &train_ex.maps, &mut timings)?;

    let t = Instant::now();
    let train_features = encode_all(cfg, &dicts, &train_ex).stage("encode")?;
    let test_features = encode_all(cfg, &dicts, &test_ex).stage("encode")?;
    timings.push("encode", t);

    let t = Instant::now();
    let mut classifiers = Vec::new();
    let mut results = Vec::new();
    for name in FEATURE_SETS {
        let x = train_features.get(name).expect("known feature set");
        let (c, clf) = select_and_train(cfg, x, &train_features.labels, num_classes).stage("train-svm")?;
        let test_x = test_features.get(name).expect("known feature set");
        let (acc, per_class) = evaluate(&clf, test_x, &test_features.labels, num_classes)?;
        results.push(FeatureResult {
            name: name.to_string(),
            dim: x.first().map_or(0, |v| v.len()),
            c,
            accuracy: acc,
            per_class,
        });
        classifiers.push((name.to_string(), clf));
    }
    timings.push("train-svm", t);

    Ok(PipelineOutput {
        data,
        net,
        train_log,
        dicts,
        train_features,
        test_features,
        classifiers,
        results,
        timings,
    })
}
