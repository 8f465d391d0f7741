use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use relaynet_cli::{emit_csv, run_experiment, ExperimentConfig, RunOptions};

/// Estimate outage curves of relay strategies over a rate grid.
#[derive(Debug, Parser)]
#[command(name = "relaynet", version)]
struct Args {
    /// JSON experiment config; defaults apply to missing fields.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, env = "RELAYNET_THREADS")]
    threads: Option<usize>,
    /// Skip compression optimization; compression noise equals receiver noise.
    #[arg(long)]
    fast: bool,
    /// Time each strategy separately and fill `wall_time_ms`.
    #[arg(long)]
    timings: bool,
    /// Override the config output path.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Print the resolved config as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let mut config = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::parse(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.fast {
        config.compression_grid = vec![1.0];
    }
    if let Some(out) = &args.output {
        config.output_path = out.to_string_lossy().into_owned();
    }
    config.validate()?;
    if args.print_config {
        print!("{}", config.to_json());
        return Ok(());
    }
    if let Some(t) = args.threads {
        anyhow::ensure!(t >= 1, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring thread pool")?;
    }
    let rows = run_experiment(&config, RunOptions { timings: args.timings })?;
    let path = PathBuf::from(&config.output_path);
    emit_csv(&rows, &path).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}
