use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use staysynth::pipeline::{load_config, run, Command, PipelineConfig, PlotSource};

#[derive(Parser)]
#[command(name = "staysynth", version, about = "Synthesize and audit hourly stay trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// JSON pipeline configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Input LBS CSV (defaults to simulated records in the output directory).
    #[arg(long, global = true)]
    records: Option<PathBuf>,
    #[arg(long, global = true)]
    area_map: Option<PathBuf>,
    #[arg(long, global = true)]
    agents: Option<usize>,
    #[arg(long, global = true)]
    world_seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    train_seed: Option<u64>,
    #[arg(long, global = true)]
    sample_size: Option<usize>,
    /// Sampling temperature; 0 means greedy.
    #[arg(long, global = true)]
    temperature: Option<f64>,
    #[arg(long, global = true)]
    gen_seed: Option<u64>,
    /// Trajectory indices for export-plots.
    #[arg(long, global = true, value_delimiter = ',')]
    indices: Option<Vec<usize>>,
    /// Export plots of synthetic rather than real trajectories.
    #[arg(long, global = true)]
    synthetic: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Generate a ground-truth world and its LBS records.
    Simulate,
    /// Parse LBS records and apply the panel filters.
    Ingest,
    /// Build labelled stay trajectories and the token vocabulary.
    Build,
    Train,
    /// Draw the real sample and generate two synthetic samples for its labels.
    Generate,
    EvalUtility,
    EvalPrivacy,
    ExportPlots,
    /// Run every stage in order.
    Pipeline,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::Ingest => Command::Ingest,
            Cmd::Build => Command::Build,
            Cmd::Train => Command::Train,
            Cmd::Generate => Command::Generate,
            Cmd::EvalUtility => Command::EvalUtility,
            Cmd::EvalPrivacy => Command::EvalPrivacy,
            Cmd::ExportPlots => Command::ExportPlots,
            Cmd::Pipeline => Command::Pipeline,
        }
    }
}

fn apply_overrides(cli: &Cli, cfg: &mut PipelineConfig) {
    if let Some(v) = &cli.out_dir {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = &cli.records {
        cfg.records = Some(v.clone());
    }
    if let Some(v) = &cli.area_map {
        cfg.area_map = Some(v.clone());
    }
    if let Some(v) = cli.agents {
        cfg.world.n_agents = v;
    }
    if let Some(v) = cli.world_seed {
        cfg.world.seed = v;
    }
    if let Some(v) = cli.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = cli.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = cli.learning_rate {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = cli.train_seed {
        cfg.train.seed = v;
    }
    if let Some(v) = cli.sample_size {
        cfg.generation.sample_size = v;
    }
    if let Some(v) = cli.temperature {
        cfg.generation.temperature = v;
    }
    if let Some(v) = cli.gen_seed {
        cfg.generation.seed = v;
    }
    if let Some(v) = &cli.indices {
        cfg.plots.indices = v.clone();
    }
    if cli.synthetic {
        cfg.plots.source = PlotSource::Synthetic;
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = load_config(cli.config.as_deref()).and_then(|mut cfg| {
        apply_overrides(&cli, &mut cfg);
        run(cli.command.into(), &cfg)
    });
    match result {
        Ok(manifests) => {
            for m in manifests {
                log::info!("{}: wrote {} artifacts", m.command, m.outputs.len());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: kind={} msg={:?}", e.kind(), e.to_string());
            ExitCode::from(1)
        }
    }
}
