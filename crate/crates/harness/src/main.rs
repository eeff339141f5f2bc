use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lsdhm_harness::{stages, HarnessError, Result, RunConfig};

#[derive(Parser)]
#[command(name = "lsdhm", version, about = "LS-DHM desk-scale pipeline and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key=value config file (`#` comments, namespaced keys such as gmm.k)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config overrides, e.g. `--set gmm.k=8`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides run.out)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 1 gives bit-reproducible runs (0 = all cores)
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic micro-scene dataset as PPM images
    GenData(Common),
    /// Train the CNN (with an LCS head when net.lcs=true)
    TrainNet(Common),
    /// Fit PCA on conv descriptors of the saved net
    FitPca(Common),
    /// Fit the GMM and BoW codebook on projected descriptors
    FitGmm(Common),
    /// Encode FC, FCV, BoW and fused vectors with the saved models
    Encode(Common),
    /// Train and evaluate linear SVMs on the saved vectors
    TrainSvm(Common),
    /// Run every stage and write all artifacts
    RunAll(Common),
    /// Ambiguous-pair error table
    ExpPairs(Common),
    /// Occlusion sensitivity of conv maps
    ExpOcclude(Common),
    /// Class distribution of top-activation images
    ExpStats(Common),
}

impl Common {
    fn load(&self) -> Result<(RunConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply_overrides(&self.overrides)?;
        if let Some(out) = &self.out {
            cfg.run_out = out.to_string_lossy().into_owned();
        }
        cfg.validate()?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build_global()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
        let out = PathBuf::from(&cfg.run_out);
        stages::prepare_out(&out)?;
        Ok((cfg, out))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(c) => {
            let (cfg, out) = c.load()?;
            stages::gen_data(&cfg, &out)?;
            println!("dataset written to {}", out.display());
        }
        Command::TrainNet(c) => {
            let (cfg, out) = c.load()?;
            stages::train_net_stage(&cfg, &out)?;
        }
        Command::FitPca(c) => {
            let (cfg, out) = c.load()?;
            stages::fit_pca_cmd(&cfg, &out)?;
        }
        Command::FitGmm(c) => {
            let (cfg, out) = c.load()?;
            stages::fit_gmm_cmd(&cfg, &out)?;
        }
        Command::Encode(c) => {
            let (cfg, out) = c.load()?;
            stages::encode_cmd(&cfg, &out)?;
        }
        Command::TrainSvm(c) => {
            let (cfg, out) = c.load()?;
            print_results(&stages::train_svm_cmd(&cfg, &out)?.results);
        }
        Command::RunAll(c) => {
            let (cfg, out) = c.load()?;
            print_results(&stages::run_all(&cfg, &out)?.results);
        }
        Command::ExpPairs(c) => {
            let (cfg, out) = c.load()?;
            let (_, rows) = stages::exp_pairs(&cfg, &out)?;
            println!("pair      fc    conv    both");
            for r in rows {
                println!("{:>2}-{:<2} {:7.2} {:7.2} {:7.2}", r.a, r.b, r.fc, r.conv, r.both);
            }
        }
        Command::ExpOcclude(c) => {
            let (cfg, out) = c.load()?;
            let (_, rows) = stages::exp_occlude(&cfg, &out)?;
            let wins = rows.iter().filter(|r| r.glyph_wins()).count();
            println!("glyph occlusion beats background on {wins}/{} images", rows.len());
        }
        Command::ExpStats(c) => {
            let (cfg, out) = c.load()?;
            stages::exp_stats(&cfg, &out)?;
            println!("activation statistics written to {}", out.join("stats.csv").display());
        }
    }
    Ok(())
}

fn print_results(results: &[lsdhm_harness::pipeline::FeatureResult]) {
    for r in results {
        println!("{:8} dim {:6}  C {:<5} accuracy {:6.2}%", r.name, r.dim, r.c, 100.0 * r.accuracy);
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
