use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use radpipe::cli::{cmd_eval, cmd_extract, cmd_train, RunConfig};

/// Radiomic feature extraction, fusion-head training, and evaluation for
/// 4-class brain-MRI datasets laid out as `<root>/{Training,Testing}/<class>/*.pgm`.
#[derive(Parser)]
#[command(name = "radpipe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// JSON run configuration; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset root containing Training/ and Testing/.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed for splits, augmentation, and training.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Extract radiomic feature files for all splits.
    Extract {
        #[command(flatten)]
        shared: Shared,
    },
    /// Train the classification head on extracted features.
    Train {
        #[command(flatten)]
        shared: Shared,
        /// Deep-feature file row-aligned with train_features.rfv.
        #[arg(long = "deep-features")]
        deep_features: Option<PathBuf>,
        /// Deep-feature file row-aligned with val_features.rfv.
        #[arg(long = "deep-val-features")]
        deep_val_features: Option<PathBuf>,
    },
    /// Evaluate the trained head on the test split.
    Eval {
        #[command(flatten)]
        shared: Shared,
        /// Deep-feature file row-aligned with test_features.rfv.
        #[arg(long = "deep-features")]
        deep_features: Option<PathBuf>,
        /// Also evaluate with test-time augmentation.
        #[arg(long)]
        tta: bool,
        /// Number of TTA views (view 0 is the unaugmented image).
        #[arg(long)]
        views: Option<usize>,
    },
}

fn build_config(shared: &Shared) -> radpipe::Result<RunConfig> {
    let mut cfg = match &shared.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(data) = &shared.data {
        cfg.data_root = data.clone();
    }
    if let Some(out) = &shared.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = shared.seed {
        cfg.seed = seed;
    }
    Ok(cfg.resolve())
}

fn run() -> radpipe::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Extract { shared } => {
            let cfg = build_config(&shared)?;
            cmd_extract(&cfg)
        }
        Command::Train { shared, deep_features, deep_val_features } => {
            let mut cfg = build_config(&shared)?;
            if deep_features.is_some() {
                cfg.deep_train_features = deep_features;
            }
            if deep_val_features.is_some() {
                cfg.deep_val_features = deep_val_features;
            }
            cmd_train(&cfg)
        }
        Command::Eval { shared, deep_features, tta, views } => {
            let mut cfg = build_config(&shared)?;
            if deep_features.is_some() {
                cfg.deep_test_features = deep_features;
            }
            if tta {
                cfg.tta = true;
            }
            if let Some(views) = views {
                cfg.tta_views = views;
            }
            cmd_eval(&cfg)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error code={} message={}", err.code(), err);
            ExitCode::FAILURE
        }
    }
}
