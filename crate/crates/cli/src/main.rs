use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use gridshap_cli::commands::{self, StageContext};
use gridshap_cli::config::PipelineConfig;

#[derive(Parser)]
#[command(
    name = "gridshap",
    version,
    about = "Grid-frequency stability pipeline: indicators, datasets, boosted trees, exact attributions, reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Run directory; artifacts and the manifest accumulate here.
    #[arg(long)]
    out: PathBuf,
    /// Override the configured global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute hourly stability indicators from raw frequency traces.
    Indicators(Common),
    /// Assemble stability and flow datasets from market data and indicators.
    BuildDatasets(Common),
    /// Grid-search, fit, and evaluate one model per target and per link.
    Train(Common),
    /// Compute exact attributions plus importance and dependency tables.
    Explain(Common),
    /// Consolidate metrics, rankings, correlations, and ramp speeds.
    Report(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Indicators(c) => ("indicators", c),
            Command::BuildDatasets(c) => ("build-datasets", c),
            Command::Train(c) => ("train", c),
            Command::Explain(c) => ("explain", c),
            Command::Report(c) => ("report", c),
        }
    }
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .init();
    let cli = Cli::parse();
    let (stage, common) = cli.command.parts();
    if let Some(jobs) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring worker threads")?;
    }
    let (config, raw) = PipelineConfig::load(&common.config)?;
    let seed = common.seed.unwrap_or(config.global_seed);
    let ctx = StageContext::begin(stage, &common.out, &raw, seed)?;
    match &cli.command {
        Command::Indicators(_) => commands::indicators::run(&config, ctx),
        Command::BuildDatasets(_) => commands::build_datasets::run(&config, ctx),
        Command::Train(_) => commands::train::run(&config, ctx),
        Command::Explain(_) => commands::explain::run(&config, ctx),
        Command::Report(_) => commands::report::run(&config, ctx),
    }
}
