use std::path::Path;
use std::process::{Command, Output};

use lsdhm_harness::report::{parse_results_csv, RunRecord};

const TINY: &[&str] = &[
    "data.classes=4",
    "data.pairs=1",
    "data.per_class=10",
    "net.fc_width=8",
    "net.head_channels=4",
    "train.epochs=1",
    "train.batch=4",
    "pca.dim=4",
    "gmm.k=2",
    "gmm.max_iters=10",
    "bow.size=8",
    "bow.iters=3",
    "svm.epochs=5",
    "svm.c_grid=1",
    "exp.occlusion_images=4",
];

fn lsdhm(cmd: &str, out: &Path, extra: &[&str]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lsdhm"));
    c.arg(cmd).arg("--out").arg(out).arg("--threads").arg("1");
    for s in TINY.iter().chain(extra) {
        c.arg("--set").arg(s);
    }
    c.output().unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn staged_commands_chain_through_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&lsdhm("gen-data", out, &[]));
    assert!(out.join("train.tsv").exists() && out.join("train_00000.ppm").exists());
    let data_dir = format!("data.dir={}", out.display());
    for cmd in ["train-net", "fit-pca", "fit-gmm", "encode", "train-svm"] {
        ok(&lsdhm(cmd, out, &[&data_dir]));
        let record = RunRecord::read(&out.join("run.json")).unwrap();
        assert_eq!(record.command, cmd);
        assert_eq!(record.threads, 1);
    }
    let rows = parse_results_csv(&std::fs::read_to_string(out.join("results.csv")).unwrap()).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["fc", "fcv", "bow", "fused"]);
    for f in ["net.fvm", "pca.fvm", "gmm.fvm", "codebook.fvt", "svm_fused.fvm", "vectors/fcv/train/manifest.tsv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    ok(&lsdhm("exp-stats", out, &[&data_dir]));
    assert!(out.join("stats.csv").exists());
}

#[test]
fn run_all_and_experiments() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = lsdhm("run-all", out, &[]);
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stdout).contains("fused"));
    let record = RunRecord::read(&out.join("run.json")).unwrap();
    assert_eq!(record.results.len(), 5);
    assert!(record.timings.0.iter().any(|(s, _)| s == "train-net"));
    ok(&lsdhm("exp-occlude", out, &[]));
    assert!(out.join("occlusion.csv").exists());
    ok(&lsdhm("exp-pairs", out, &[]));
    assert_eq!(std::fs::read_to_string(out.join("pairs.csv")).unwrap().lines().count(), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(lsdhm("run-all", out, &["gmm.q=3"]).status.code(), Some(1));
    assert_eq!(lsdhm("run-all", out, &["pca.dim=0"]).status.code(), Some(1));
    let cfg = Command::new(env!("CARGO_BIN_EXE_lsdhm"))
        .args(["gen-data", "--config", "/nonexistent.cfg"])
        .output()
        .unwrap();
    assert_eq!(cfg.status.code(), Some(1));
    assert_eq!(lsdhm("run-all", out, &["data.dir=/nonexistent"]).status.code(), Some(2));
    assert_eq!(lsdhm("fit-pca", &out.join("empty"), &[]).status.code(), Some(2));
    let blowup = lsdhm("train-net", out, &["train.lr=1e30"]);
    assert_eq!(blowup.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&blowup.stderr));
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(&cfg_path, "# tiny\ndata.classes = 3\ndata.per_class = 5\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lsdhm"))
        .arg("gen-data")
        .arg("--config")
        .arg(&cfg_path)
        .args(["--set", "data.pairs=1", "--out"])
        .arg(dir.path().join("d"))
        .output()
        .unwrap();
    ok(&o);
    let record = RunRecord::read(&dir.path().join("d/run.json")).unwrap();
    assert_eq!(record.config["data.classes"], "3");
    assert_eq!(record.config["data.pairs"], "1");
    assert_eq!(std::fs::read_to_string(dir.path().join("d/test.tsv")).unwrap().lines().count(), 3);
}
