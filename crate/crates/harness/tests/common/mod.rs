#![allow(dead_code)]

use lsdhm_harness::RunConfig;

/// A run small enough for unit-style tests: a handful of images and
/// one training epoch.
pub fn tiny_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.apply_overrides(&[
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
    ])
    .unwrap();
    cfg
}
