//! Result tables, training logs, artifact files and `run.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lsdhm_core::io::{save_fvm, save_vector_batch, Record, VectorEntry};
use lsdhm_core::nn::TrainLogEntry;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::pipeline::{Classifier, FeatureResult, FeatureTable, PipelineOutput, Timings};

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

/// One row per feature set: accuracy and per-class accuracy in percent.
pub fn results_csv(results: &[FeatureResult]) -> String {
    let n = results.first().map_or(0, |r| r.per_class.len());
    let mut out = String::from("feature_set,dim,c,accuracy");
    for c in 0..n {
        out.push_str(&format!(",class_{c}"));
    }
    out.push('\n');
    for r in results {
        out.push_str(&format!("{},{},{},{}", r.name, r.dim, r.c, pct(r.accuracy)));
        for v in &r.per_class {
            out.push(',');
            if let Some(v) = v {
                out.push_str(&pct(*v));
            }
        }
        out.push('\n');
    }
    out
}

/// A parsed `results.csv` row; accuracies are in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub name: String,
    pub dim: usize,
    pub c: f64,
    pub accuracy: f64,
    pub per_class: Vec<Option<f64>>,
}

pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>> {
    let bad = |m: String| HarnessError::Data(format!("results.csv: {m}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    if !header.starts_with("feature_set,dim,c,accuracy") {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 4 {
            return Err(bad(format!("short row {line:?}")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
        rows.push(ResultRow {
            name: f[0].to_string(),
            dim: f[1].parse().map_err(|_| bad(format!("bad dim {:?}", f[1])))?,
            c: num(f[2])?,
            accuracy: num(f[3])?,
            per_class: f[4..]
                .iter()
                .map(|s| if s.is_empty() { Ok(None) } else { num(s).map(Some) })
                .collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

pub fn train_log_csv(log: &[TrainLogEntry]) -> String {
    let heads = log.first().map_or(0, |e| e.aux_losses.len());
    let mut out = String::from("iteration,main_loss");
    for a in 0..heads {
        out.push_str(&format!(",aux_loss_{a}"));
    }
    out.push_str(",learning_rate\n");
    for e in log {
        out.push_str(&format!("{},{}", e.iteration, e.main_loss));
        for a in &e.aux_losses {
            out.push_str(&format!(",{a}"));
        }
        out.push_str(&format!(",{}\n", e.learning_rate));
    }
    out
}

pub fn parse_train_log_csv(text: &str) -> Result<Vec<TrainLogEntry>> {
    let bad = |m: String| HarnessError::Data(format!("train log: {m}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let cols = header.split(',').count();
    if cols < 3 {
        return Err(bad("header too short".into()));
    }
    let mut out = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols {
            return Err(bad(format!("row {line:?} has {} fields, expected {cols}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
        out.push(TrainLogEntry {
            iteration: f[0].parse().map_err(|_| bad(format!("bad iteration {:?}", f[0])))?,
            main_loss: num(f[1])?,
            aux_losses: f[2..cols - 1].iter().map(|s| num(s)).collect::<Result<_>>()?,
            learning_rate: num(f[cols - 1])?,
        });
    }
    Ok(out)
}

/// Everything needed to reproduce and audit a CLI run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub threads: usize,
    /// SHA-256 of every artifact, keyed by path relative to the output directory.
    pub artifacts: BTreeMap<String, String>,
    pub timings: Timings,
    pub results: Vec<FeatureResult>,
}

impl RunRecord {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            config: cfg.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            seeds: cfg.seeds().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            threads: rayon::current_num_threads(),
            artifacts: BTreeMap::new(),
            timings: Timings::default(),
            results: Vec::new(),
        }
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| HarnessError::Data(e.to_string()))?;
        fs::write(out_dir.join("run.json"), json)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a file, or of a directory as the sorted sequence of
/// `(name, contents)` of the files directly inside it.
pub fn hash_artifact(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut names: Vec<PathBuf> = fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        names.sort();
        let mut h = Sha256::new();
        for p in names.iter().filter(|p| p.is_file()) {
            h.update(p.file_name().unwrap_or_default().as_encoded_bytes());
            h.update([0u8]);
            h.update(fs::read(p)?);
        }
        Ok(hex::encode(h.finalize()))
    } else {
        Ok(sha256_hex(&fs::read(path)?))
    }
}

/// Tracks files written into an output directory so they can be hashed.
pub struct ArtifactWriter {
    pub dir: PathBuf,
    written: Vec<String>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<()> {
        fs::write(self.dir.join(name), text)?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Records a file written by other means.
    pub fn text_written(&mut self, name: &str) {
        self.written.push(name.to_string());
    }

    pub fn models(&mut self, name: &str, records: &[Record]) -> Result<()> {
        save_fvm(self.dir.join(name), records)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn vectors(&mut self, name: &str, rows: &[Vec<f64>], labels: &[usize]) -> Result<()> {
        let entries: Vec<VectorEntry> = rows
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (v, &label))| VectorEntry {
                name: format!("{i:05}"),
                values: v.clone(),
                label,
            })
            .collect();
        save_vector_batch(self.dir.join(name), &entries)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn hashes(&self) -> Result<BTreeMap<String, String>> {
        self.written
            .iter()
            .map(|n| Ok((n.clone(), hash_artifact(&self.dir.join(n))?)))
            .collect()
    }
}

/// Feature sets persisted as FVT1 vectors. Direct encodings are large and
/// cheap to recompute, so they are left out.
pub const SAVED_VECTORS: [&str; 4] = ["fc", "fcv", "bow", "fused"];

pub fn write_features(w: &mut ArtifactWriter, split: &str, table: &FeatureTable) -> Result<()> {
    for name in SAVED_VECTORS {
        let rows = table.get(name).expect("known feature set");
        w.vectors(&format!("vectors/{name}/{split}"), rows, &table.labels)?;
    }
    Ok(())
}

/// Writes every artifact of a pipeline run plus `run.json`.
pub fn write_outputs(out_dir: &Path, command: &str, cfg: &RunConfig, out: &PipelineOutput) -> Result<RunRecord> {
    let mut w = ArtifactWriter::new(out_dir)?;
    w.text("config.txt", &cfg.to_text())?;
    w.models("net.fvm", &[Record::Net(out.net.clone())])?;
    w.text("train_log.csv", &train_log_csv(&out.train_log))?;
    w.models("pca.fvm", &[Record::Pca(out.dicts.pca.clone())])?;
    w.models("gmm.fvm", &[Record::Gmm(out.dicts.gmm.clone())])?;
    crate::stages::save_codebook(&mut w, &out.dicts.codebook)?;
    write_features(&mut w, "train", &out.train_features)?;
    write_features(&mut w, "test", &out.test_features)?;
    for (name, clf) in &out.classifiers {
        if let Classifier::Svm(m) = clf {
            w.models(&format!("svm_{name}.fvm"), &[Record::Svm(m.clone())])?;
        }
    }
    w.text("results.csv", &results_csv(&out.results))?;
    let json = serde_json::to_string_pretty(&out.results).map_err(|e| HarnessError::Data(e.to_string()))?;
    w.text("results.json", &json)?;

    let mut record = RunRecord::new(command, cfg);
    record.artifacts = w.hashes()?;
    record.timings = out.timings.clone();
    record.results = out.results.clone();
    record.write(out_dir)?;
    Ok(record)
}
