mod commands;
mod config;
mod manifest;
mod staging;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use urban_lrp::dsp::FeatureKind;

use commands::Target;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "urban-lrp", version, about = "Urban sound CNN with layer-wise relevance propagation")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Spectrogram kind: mel or cqt.
    #[arg(long, global = true)]
    features: Option<FeatureKind>,
    /// Relevance rule: flat, wsquare, or a `+`-joined per-layer list.
    #[arg(long, global = true)]
    rule: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract feature images for every clip in the metadata file.
    Features,
    /// Train on the train split with early stopping on the validation split.
    Train,
    /// Confusion matrix and per-class metrics on the test split.
    Eval,
    /// Relevance map for one clip (--sample) or a class average (--class).
    Explain {
        /// Clip id (file stem).
        #[arg(long)]
        sample: Option<String>,
        /// Class name or id: the target class for --sample, otherwise the
        /// class to average over.
        #[arg(long)]
        class: Option<String>,
        /// Overlay opacity in [0, 1].
        #[arg(long)]
        alpha: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(k) = cli.features {
        cfg.features = k;
    }
    if let Some(r) = cli.rule {
        cfg.rule = r;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    if let Command::Explain { alpha: Some(a), .. } = &cli.command {
        cfg.alpha = *a;
    }
    cfg.validate()?;
    let written = match cli.command {
        Command::Features => commands::features(&cfg)?,
        Command::Train => commands::train_model(&cfg)?,
        Command::Eval => commands::eval(&cfg)?,
        Command::Explain { sample, class, .. } => {
            let target = match (sample, class.clone()) {
                (Some(id), _) => Target::Sample(id),
                (None, Some(c)) => Target::ClassAverage(c),
                (None, None) => bail!("explain needs --sample or --class"),
            };
            let class_override = match &target {
                Target::Sample(_) => class.as_deref(),
                Target::ClassAverage(_) => None,
            };
            commands::explain(&cfg, target, class_override)?
        }
    };
    println!("{}", written.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
