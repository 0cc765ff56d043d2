use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nodesep::pipeline::{self, PipelineConfig};

#[derive(Parser)]
#[command(
    name = "nodesep",
    about = "DBN training, top-layer node attribution and selective reconstruction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat key=value config file; CLI flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Hidden layer sizes, comma separated (e.g. 128,64,32).
    #[arg(long, global = true)]
    layers: Option<String>,

    #[arg(long, global = true)]
    epochs: Option<usize>,

    /// Learning rate.
    #[arg(long, global = true)]
    lr: Option<f64>,

    /// Minibatch size.
    #[arg(long, global = true)]
    batch: Option<usize>,

    #[arg(long = "var-threshold", global = true)]
    var_threshold: Option<f64>,

    #[arg(long = "ra-threshold", global = true)]
    ra_threshold: Option<f64>,

    /// Select the top fraction of nodes by score instead of the fixed
    /// thresholds (e.g. 0.25).
    #[arg(long, global = true)]
    quantile: Option<f64>,

    #[arg(long = "out-dir", global = true)]
    out_dir: Option<PathBuf>,

    /// MNIST IDX image file; without it digits are synthesized.
    #[arg(long = "mnist-images", global = true)]
    mnist_images: Option<PathBuf>,

    #[arg(long = "mnist-labels", global = true)]
    mnist_labels: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the face/digit/mixed dataset files.
    Synth,
    /// Greedy layer-wise DBN training on the synthesized dataset.
    Train,
    /// Score and select top-layer nodes with both methods.
    Analyze,
    /// Reconstruct mixed images with and without digit nodes inactivated.
    Reconstruct,
    /// Aggregate stage outputs; exits nonzero if any run check fails.
    Report,
    /// All stages in sequence.
    All,
}

fn build_config(cli: &Cli) -> nodesep::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(layers) = &cli.layers {
        cfg.apply_kv("layers", layers)?;
    }
    if let Some(epochs) = cli.epochs {
        cfg.epochs = epochs;
    }
    if let Some(lr) = cli.lr {
        cfg.learning_rate = lr;
    }
    if let Some(batch) = cli.batch {
        cfg.batch_size = batch;
    }
    if let Some(t) = cli.var_threshold {
        cfg.var_threshold = t;
    }
    if let Some(t) = cli.ra_threshold {
        cfg.ra_threshold = t;
    }
    if let Some(q) = cli.quantile {
        cfg.quantile = Some(q);
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(p) = &cli.mnist_images {
        cfg.mnist_images = Some(p.clone());
    }
    if let Some(p) = &cli.mnist_labels {
        cfg.mnist_labels = Some(p.clone());
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> nodesep::Result<bool> {
    let cfg = build_config(cli)?;
    match cli.command {
        Command::Synth => pipeline::cmd_synth(&cfg).map(|()| true),
        Command::Train => pipeline::cmd_train(&cfg).map(|()| true),
        Command::Analyze => pipeline::cmd_analyze(&cfg).map(|()| true),
        Command::Reconstruct => pipeline::cmd_reconstruct(&cfg).map(|()| true),
        Command::Report => pipeline::cmd_report(&cfg).map(|r| r.all_checks_passed),
        Command::All => pipeline::cmd_all(&cfg).map(|r| r.all_checks_passed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
