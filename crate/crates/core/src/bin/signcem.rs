//! Command-line sweep driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use signcem::experiments::{exit_code, run, ExperimentConfig, Model};

/// Runs CEM-GMsFEM sweeps for sign-changing diffusion coefficients.
///
/// Flags override the matching fields of the JSON config.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the published parameters of a model.
    #[arg(long, value_parser = |s: &str| s.parse::<Model>().map_err(|e| e.to_string()))]
    preset: Option<Model>,
    /// Coefficient family: flat, square, cross or random.
    #[arg(long, value_parser = |s: &str| s.parse::<Model>().map_err(|e| e.to_string()))]
    model: Option<Model>,
    /// Fine cells per side.
    #[arg(long)]
    fine_n: Option<usize>,
    /// Comma-separated coarse mesh sizes.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    coarse_n: Option<Vec<usize>>,
    /// Comma-separated oversampling layer counts.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    layers: Option<Vec<usize>>,
    /// Comma-separated numbers of eigenfunctions per element.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    eigs: Option<Vec<usize>>,
    /// Magnitude of the positive coefficient.
    #[arg(long)]
    sigma_plus: Option<f64>,
    /// Magnitude of the negative coefficient.
    #[arg(long)]
    sigma_minus: Option<f64>,
    /// Interface height of the flat model.
    #[arg(long)]
    gamma: Option<f64>,
    /// Seed of the random inclusion layout.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Neither read nor write offline caches.
    #[arg(long)]
    no_cache: bool,
    /// Also solve the plain coarse Q1 baseline.
    #[arg(long)]
    baseline: bool,
    /// Write VTK and CSV field dumps.
    #[arg(long)]
    dump_fields: bool,
}

fn config(cli: Cli) -> signcem::Result<ExperimentConfig> {
    let mut c = match (&cli.config, cli.preset) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(m)) => ExperimentConfig::preset(m),
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(v) = cli.model {
        c.model = v;
    }
    if let Some(v) = cli.fine_n {
        c.fine_n = v;
    }
    if let Some(v) = cli.coarse_n {
        c.coarse_n = v;
    }
    if let Some(v) = cli.layers {
        c.layers = v;
    }
    if let Some(v) = cli.eigs {
        c.l_star = v;
    }
    if let Some(v) = cli.sigma_plus {
        c.sigma_plus = v;
    }
    if let Some(v) = cli.sigma_minus {
        c.sigma_minus = v;
    }
    if let Some(v) = cli.gamma {
        c.gamma = v;
    }
    if let Some(v) = cli.seed {
        c.seed = v;
    }
    if let Some(v) = cli.out {
        c.out = v;
    }
    if let Some(v) = cli.threads {
        c.threads = v;
    }
    c.cache &= !cli.no_cache;
    c.baseline |= cli.baseline;
    c.dump_fields |= cli.dump_fields;
    Ok(c)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = config(cli).and_then(|c| run(&c));
    match &result {
        Ok(s) => log::info!("{} sweep points, {} failed", s.points(), s.failures()),
        Err(e) => log::error!("{e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
