//! Run configuration: namespaced `key=value` text files.

use std::fs;
use std::path::Path;

use crate::error::{HarnessError, Result};

pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Option<Self>;
    fn render(&self) -> String;
}

macro_rules! simple_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Option<Self> {
                s.parse().ok()
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

simple_value!(usize, u64, f64, bool, String);

impl ConfigValue for Vec<f64> {
    fn parse_value(s: &str) -> Option<Self> {
        s.split(',').map(|p| p.trim().parse().ok()).collect()
    }
    fn render(&self) -> String {
        self.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

macro_rules! run_config {
    ($($field:ident: $ty:ty = $default:expr => $key:literal;)*) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $(pub $field: $ty,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $($field: $default,)* }
            }
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            /// Sets one key from its text form. Unknown keys are rejected.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $($key => {
                        self.$field = <$ty as ConfigValue>::parse_value(value).ok_or_else(|| {
                            HarnessError::Config(format!("invalid value {value:?} for {key}"))
                        })?;
                    })*
                    _ => return Err(HarnessError::Config(format!("unknown config key {key:?}"))),
                }
                Ok(())
            }

            /// Every key with its current value, in declaration order.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, self.$field.render()),)*]
            }
        }
    };
}

run_config! {
    data_classes: usize = 10 => "data.classes";
    data_pairs: usize = 3 => "data.pairs";
    data_per_class: usize = 200 => "data.per_class";
    data_noise: f64 = 0.08 => "data.noise";
    data_seed: u64 = 1 => "data.seed";
    data_dir: String = String::new() => "data.dir";
    data_train_manifest: String = "train.tsv".into() => "data.train_manifest";
    data_test_manifest: String = "test.tsv".into() => "data.test_manifest";

    net_fc_width: usize = 64 => "net.fc_width";
    net_lcs: bool = true => "net.lcs";
    net_head_layer: usize = 2 => "net.head_layer";
    net_head_channels: usize = 16 => "net.head_channels";
    net_seed: u64 = 1 => "net.seed";

    train_lambda: f64 = 0.3 => "train.lambda";
    train_lr: f64 = 0.003 => "train.lr";
    train_lr_decay: f64 = 0.9 => "train.lr_decay";
    train_momentum: f64 = 0.9 => "train.momentum";
    train_weight_decay: f64 = 5e-4 => "train.weight_decay";
    train_batch: usize = 16 => "train.batch";
    train_epochs: usize = 8 => "train.epochs";
    train_seed: u64 = 1 => "train.seed";

    encode_layer: usize = 2 => "encode.layer";
    encode_alpha: f64 = 0.5 => "encode.alpha";

    pca_dim: usize = 16 => "pca.dim";

    gmm_k: usize = 16 => "gmm.k";
    gmm_max_iters: usize = 100 => "gmm.max_iters";
    gmm_tol: f64 = 1e-6 => "gmm.tol";
    gmm_weight_floor: f64 = 1e-6 => "gmm.weight_floor";
    gmm_variance_floor: f64 = 1e-4 => "gmm.variance_floor";
    gmm_sample_cap: usize = 200_000 => "gmm.sample_cap";
    gmm_seed: u64 = 1 => "gmm.seed";

    bow_size: usize = 256 => "bow.size";
    bow_iters: usize = 10 => "bow.iters";
    bow_seed: u64 = 1 => "bow.seed";

    svm_c_grid: Vec<f64> = vec![0.1, 1.0, 10.0] => "svm.c_grid";
    svm_epochs: usize = 30 => "svm.epochs";
    svm_lr: f64 = 0.5 => "svm.lr";
    svm_seed: u64 = 1 => "svm.seed";

    exp_top_fraction: f64 = 0.1 => "exp.top_fraction";
    exp_occlusion_images: usize = 20 => "exp.occlusion_images";
    exp_occlusion_seed: u64 = 1 => "exp.occlusion_seed";

    run_out: String = "out".into() => "run.out";
}

impl RunConfig {
    /// Parses `key=value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected key=value", i + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| HarnessError::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies `key=value` overrides given on the command line.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("override {:?} is not key=value", o.as_ref())))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn seeds(&self) -> Vec<(&'static str, u64)> {
        self.entries()
            .into_iter()
            .filter(|(k, _)| k.ends_with("seed"))
            .map(|(k, v)| (k, v.parse().expect("seed keys hold integers")))
            .collect()
    }

    /// Sets every stage seed to `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        for key in Self::KEYS.iter().filter(|k| k.ends_with("seed")) {
            self.set(key, &seed.to_string()).expect("seed keys accept integers");
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.data_classes == 0 || self.data_per_class < 2 {
            return fail("data.classes must be >= 1 and data.per_class >= 2");
        }
        if !(self.data_noise >= 0.0) {
            return fail("data.noise must be >= 0");
        }
        if self.net_fc_width == 0 || self.net_head_channels == 0 {
            return fail("net.fc_width and net.head_channels must be positive");
        }
        if !(self.train_lambda >= 0.0) || !(self.train_lr > 0.0) {
            return fail("train.lambda must be >= 0 and train.lr > 0");
        }
        if self.train_batch == 0 || self.train_epochs == 0 {
            return fail("train.batch and train.epochs must be positive");
        }
        if self.pca_dim == 0 || self.gmm_k == 0 || self.bow_size == 0 {
            return fail("pca.dim, gmm.k and bow.size must be positive");
        }
        if self.gmm_sample_cap < self.gmm_k {
            return fail("gmm.sample_cap must be at least gmm.k");
        }
        if self.svm_c_grid.is_empty() || self.svm_c_grid.iter().any(|&c| !(c > 0.0)) {
            return fail("svm.c_grid must list positive values");
        }
        if !(self.exp_top_fraction > 0.0 && self.exp_top_fraction <= 1.0) {
            return fail("exp.top_fraction must be in (0, 1]");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_with_comments_and_overrides() {
        let cfg = RunConfig::parse("# desk run\ngmm.k = 8   # small\n\npca.dim=4\nsvm.c_grid=0.5, 2\n").unwrap();
        assert_eq!(cfg.gmm_k, 8);
        assert_eq!(cfg.pca_dim, 4);
        assert_eq!(cfg.svm_c_grid, vec![0.5, 2.0]);
        let mut cfg = cfg;
        cfg.apply_overrides(&["gmm.k=4"]).unwrap();
        assert_eq!(cfg.gmm_k, 4);
    }

    #[test]
    fn unknown_and_malformed_keys_fail() {
        assert!(RunConfig::parse("gmm.kk=3").is_err());
        assert!(RunConfig::parse("gmm.k=three").is_err());
        assert!(RunConfig::parse("gmm.k").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default().with_seed(7);
        cfg.data_noise = 0.123456789;
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert!(cfg.seeds().iter().all(|(_, s)| *s == 7));
    }
}
