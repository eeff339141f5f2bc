//! CLI stages. Each stage reads its inputs from and writes its artifacts to
//! the run output directory, then records `run.json`.

use std::fs;
use std::path::Path;
use std::time::Instant;

use lsdhm_core::fisher::BowCodebook;
use lsdhm_core::io::{load_fvt, load_gmm, load_net, load_pca, load_vector_batch, save_fvt, Record};
use lsdhm_core::nn::ConvNet;
use lsdhm_core::{LabeledDataset, Tensor3};

use crate::config::RunConfig;
use crate::dataset::{generate_dataset, MicroSceneSpec, SceneMeta};
use crate::error::{HarnessError, Result, StageContext};
use crate::experiments::{
    activation_stats, occlusion_csv, occlusion_study, pair_errors, pairs_csv, stats_csv, OcclusionRow, PairErrors,
};
use crate::pipeline::{
    encode_all, evaluate, extract, fit_gmm_stage, fit_pca_stage, load_data, run_pipeline, select_and_train,
    train_net, Classifier, Dictionaries, FeatureResult, FeatureTable, RunData, Timings,
};
use crate::ppm::write_images;
use crate::report::{
    results_csv, train_log_csv, write_features, write_outputs, ArtifactWriter, RunRecord, SAVED_VECTORS,
};

pub const CODEBOOK_FILE: &str = "codebook.fvt";

/// Stores the codebook as a `1 x size x dim` FVT1 tensor.
pub fn save_codebook(w: &mut ArtifactWriter, codebook: &BowCodebook) -> Result<()> {
    let t = Tensor3::new(1, codebook.size(), codebook.dim(), codebook.centers().to_vec())?;
    save_fvt(w.dir.join(CODEBOOK_FILE), &t)?;
    w.text_written(CODEBOOK_FILE);
    Ok(())
}

pub fn load_codebook(path: &Path) -> Result<BowCodebook> {
    let t = load_fvt(path)?;
    Ok(BowCodebook::new(t.channels(), t.into_data())?)
}

fn finish(w: &ArtifactWriter, command: &str, cfg: &RunConfig, timings: Timings) -> Result<RunRecord> {
    let mut record = RunRecord::new(command, cfg);
    record.artifacts = w.hashes()?;
    record.timings = timings;
    record.write(&w.dir)?;
    Ok(record)
}

fn glyph_meta_tsv(prefix: &str, meta: &[SceneMeta]) -> String {
    let mut s = String::new();
    for (i, m) in meta.iter().enumerate() {
        let boxes: Vec<String> = m
            .glyph_boxes
            .iter()
            .map(|b| format!("{} {} {} {}", b.h0, b.w0, b.h1, b.w1))
            .collect();
        s.push_str(&format!("{prefix}{i:05}.ppm\t{}\t{}\n", m.label, boxes.join(";")));
    }
    s
}

/// Writes the synthetic dataset as PPM images with train/test manifests and
/// glyph boxes (`file<TAB>label<TAB>h0 w0 h1 w1;...`).
pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<RunRecord> {
    let t = Instant::now();
    let spec = MicroSceneSpec::standard(cfg.data_classes, cfg.data_pairs, cfg.data_noise, cfg.data_seed)?;
    let split = generate_dataset(&spec, cfg.data_per_class)?;
    let mut w = ArtifactWriter::new(out)?;
    write_images(out, &cfg.data_train_manifest, "train_", &split.train)?;
    write_images(out, &cfg.data_test_manifest, "test_", &split.test)?;
    w.text_written(&cfg.data_train_manifest);
    w.text_written(&cfg.data_test_manifest);
    w.text("train_glyphs.tsv", &glyph_meta_tsv("train_", &split.train_meta))?;
    w.text("test_glyphs.tsv", &glyph_meta_tsv("test_", &split.test_meta))?;
    let pairs: String = spec.ambiguous_pairs.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect();
    w.text("pairs.tsv", &pairs)?;
    let mut timings = Timings::default();
    timings.push("gen-data", t);
    finish(&w, "gen-data", cfg, timings)
}

pub fn train_net_stage(cfg: &RunConfig, out: &Path) -> Result<RunRecord> {
    let mut timings = Timings::default();
    let t = Instant::now();
    let data = load_data(cfg).stage("load-data")?;
    timings.push("load-data", t);
    let t = Instant::now();
    let (net, log) = train_net(cfg, &data.train).stage("train-net")?;
    timings.push("train-net", t);
    let mut w = ArtifactWriter::new(out)?;
    w.models("net.fvm", &[Record::Net(net)])?;
    w.text("train_log.csv", &train_log_csv(&log))?;
    finish(&w, "train-net", cfg, timings)
}

fn load_saved_net(out: &Path) -> Result<ConvNet> {
    load_net(out.join("net.fvm")).stage("load-net")
}

fn train_maps(cfg: &RunConfig, net: &ConvNet, data: &LabeledDataset) -> Result<Vec<Tensor3>> {
    Ok(extract(net, data, cfg.encode_layer).stage("extract")?.maps)
}

pub fn fit_pca_cmd(cfg: &RunConfig, out: &Path) -> Result<RunRecord> {
    let t = Instant::now();
    let net = load_saved_net(out)?;
    let data = load_data(cfg).stage("load-data")?;
    let pca = fit_pca_stage(cfg, &train_maps(cfg, &net, &data.train)?)?;
    let mut w = ArtifactWriter::new(out)?;
    w.models("pca.fvm", &[Record::Pca(pca)])?;
    let mut timings = Timings::default();
    timings.push("fit-pca", t);
    finish(&w, "fit-pca", cfg, timings)
}

pub fn fit_gmm_cmd(cfg: &RunConfig, out: &Path) -> Result<RunRecord> {
    let t = Instant::now();
    let net = load_saved_net(out)?;
    let pca = load_pca(out.join("pca.fvm")).stage("load-pca")?;
    let data = load_data(cfg).stage("load-data")?;
    let (gmm, codebook) = fit_gmm_stage(cfg, &train_maps(cfg, &net, &data.train)?, &pca)?;
    let mut w = ArtifactWriter::new(out)?;
    w.models("gmm.fvm", &[Record::Gmm(gmm)])?;
    save_codebook(&mut w, &codebook)?;
    let mut timings = Timings::default();
    timings.push("fit-gmm", t);
    finish(&w, "fit-gmm", cfg, timings)
}

pub fn load_dictionaries(out: &Path) -> Result<Dictionaries> {
    Ok(Dictionaries {
        pca: load_pca(out.join("pca.fvm")).stage("load-pca")?,
        gmm: load_gmm(out.join("gmm.fvm")).stage("load-gmm")?,
        codebook: load_codebook(&out.join(CODEBOOK_FILE)).stage("load-codebook")?,
    })
}

/// Encodes both splits with the saved net and dictionaries.
pub fn encode_with_saved(cfg: &RunConfig, out: &Path, data: &RunData) -> Result<(FeatureTable, FeatureTable)> {
    let net = load_saved_net(out)?;
    let dicts = load_dictionaries(out)?;
    let train = encode_all(cfg, &dicts, &extract(&net, &data.train, cfg.encode_layer)?).stage("encode")?;
    let test = encode_all(cfg, &dicts, &extract(&net, &data.test, cfg.encode_layer)?).stage("encode")?;
    Ok((train, test))
}

pub fn encode_cmd(cfg: &RunConfig, out: &Path) -> Result<RunRecord> {
    let t = Instant::now();
    let data = load_data(cfg).stage("load-data")?;
    let (train, test) = encode_with_saved(cfg, out, &data)?;
    let mut w = ArtifactWriter::new(out)?;
    write_features(&mut w, "train", &train)?;
    write_features(&mut w, "test", &test)?;
    let mut timings = Timings::default();
    timings.push("encode", t);
    finish(&w, "encode", cfg, timings)
}

fn load_vectors(out: &Path, name: &str, split: &str) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let entries = load_vector_batch(out.join(format!("vectors/{name}/{split}"))).stage("load-vectors")?;
    Ok(entries.into_iter().map(|e| (e.values, e.label)).unzip())
}

/// Trains and evaluates one classifier per saved feature set.
pub fn train_svm_cmd(cfg: &RunConfig, out: &Path) -> Result<RunRecord> {
    let t = Instant::now();
    let mut w = ArtifactWriter::new(out)?;
    let mut results = Vec::new();
    for name in SAVED_VECTORS {
        let (x, y) = load_vectors(out, name, "train")?;
        let (tx, ty) = load_vectors(out, name, "test")?;
        let num_classes = y.iter().chain(&ty).max().map_or(0, |m| m + 1);
        let (c, clf) = select_and_train(cfg, &x, &y, num_classes).stage("train-svm")?;
        let (accuracy, per_class) = evaluate(&clf, &tx, &ty, num_classes)?;
        if let Classifier::Svm(m) = &clf {
            w.models(&format!("svm_{name}.fvm"), &[Record::Svm(m.clone())])?;
        }
        results.push(FeatureResult {
            name: name.to_string(),
            dim: x.first().map_or(0, |v| v.len()),
            c,
            accuracy,
            per_class,
        });
    }
    w.text("results.csv", &results_csv(&results))?;
    let mut timings = Timings::default();
    timings.push("train-svm", t);
    let mut record = finish(&w, "train-svm", cfg, timings)?;
    record.results = results;
    record.write(out)?;
    Ok(record)
}

pub fn run_all(cfg: &RunConfig, out: &Path) -> Result<RunRecord> {
    let output = run_pipeline(cfg)?;
    write_outputs(out, "run-all", cfg, &output)
}

/// Pair errors from a fresh pipeline run.
pub fn exp_pairs(cfg: &RunConfig, out: &Path) -> Result<(RunRecord, Vec<PairErrors>)> {
    let output = run_pipeline(cfg)?;
    let rows = pair_errors(cfg, &output.train_features, &output.test_features, &output.data.pairs)
        .stage("exp-pairs")?;
    let mut w = ArtifactWriter::new(out)?;
    w.text("pairs.csv", &pairs_csv(&rows))?;
    Ok((finish(&w, "exp-pairs", cfg, output.timings.clone())?, rows))
}

fn net_for_experiment(cfg: &RunConfig, out: &Path, data: &RunData) -> Result<ConvNet> {
    if out.join("net.fvm").exists() {
        load_saved_net(out)
    } else {
        Ok(train_net(cfg, &data.train).stage("train-net")?.0)
    }
}

/// Occlusion study on generated test images. Reuses `net.fvm` from the
/// output directory when present, otherwise trains a net first.
pub fn exp_occlude(cfg: &RunConfig, out: &Path) -> Result<(RunRecord, Vec<OcclusionRow>)> {
    let t = Instant::now();
    let data = load_data(cfg).stage("load-data")?;
    let meta = data
        .test_meta
        .clone()
        .ok_or_else(|| HarnessError::Data("occlusion study needs generated data with glyph boxes".into()))?;
    let net = net_for_experiment(cfg, out, &data)?;
    let rows = occlusion_study(cfg, &net, &data.test, &meta, cfg.exp_occlusion_images).stage("exp-occlude")?;
    let mut w = ArtifactWriter::new(out)?;
    w.text("occlusion.csv", &occlusion_csv(&rows))?;
    let mut timings = Timings::default();
    timings.push("exp-occlude", t);
    Ok((finish(&w, "exp-occlude", cfg, timings)?, rows))
}

pub fn exp_stats(cfg: &RunConfig, out: &Path) -> Result<RunRecord> {
    let t = Instant::now();
    let data = load_data(cfg).stage("load-data")?;
    let net = net_for_experiment(cfg, out, &data)?;
    let stats = activation_stats(&net, cfg.encode_layer, &data.test, cfg.exp_top_fraction).stage("exp-stats")?;
    let mut w = ArtifactWriter::new(out)?;
    w.text("stats.csv", &stats_csv(&stats))?;
    let json = serde_json::to_string_pretty(&stats).map_err(|e| HarnessError::Data(e.to_string()))?;
    w.text("stats.json", &json)?;
    let mut timings = Timings::default();
    timings.push("exp-stats", t);
    finish(&w, "exp-stats", cfg, timings)
}

/// Makes sure the output directory exists and is a directory.
pub fn prepare_out(out: &Path) -> Result<()> {
    if out.exists() && !out.is_dir() {
        return Err(HarnessError::Config(format!("{} is not a directory", out.display())));
    }
    fs::create_dir_all(out)?;
    Ok(())
}
