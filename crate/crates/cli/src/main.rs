//! `cfpc` — generate, train, evaluate, and benchmark uplink power control
//! for cell-free massive MIMO from one reproducible configuration.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for numerical
//! failures (e.g. diverged training), 4 for I/O failures.

mod cmds;
mod runcfg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cfpc_core::error::Error;
use cfpc_core::neural::LossKind;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_IO: u8 = 4;

/// Map an error to its documented exit code.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Dimension(_) | Error::Toml(_) => EXIT_CONFIG,
        Error::Numerical(_) => EXIT_NUMERICAL,
        Error::Io(_) | Error::Json(_) => EXIT_IO,
    }
}

#[derive(Parser)]
#[command(
    name = "cfpc",
    version,
    about = "Uplink power control for cell-free massive MIMO: scenario generation, \
             solver baselines, and an unsupervised neural controller"
)]
struct Cli {
    /// TOML run configuration (defaults apply when omitted).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed; every stage seed is derived from it by a tagged hash.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads for dataset construction and evaluation.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Output root; overrides the config file and the CFPC_OUT_ROOT
    /// environment variable.
    #[arg(long, global = true, value_name = "DIR")]
    out_root: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset of random network realizations and cache it to disk.
    Generate {
        /// Number of realizations (default from config, else 10000).
        #[arg(long)]
        samples: Option<usize>,
        /// Output file (default <out-root>/dataset.json).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Train the power-control MLP with one of the unsupervised losses.
    Train {
        /// Training loss; picks the per-loss default learning rate.
        #[arg(long, value_enum)]
        loss: Option<LossArg>,
        /// Dataset cache produced by `generate`; built in memory if omitted.
        #[arg(long, value_name = "FILE")]
        dataset: Option<PathBuf>,
        /// In-memory training-set size when --dataset is omitted.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Initial learning rate (default depends on --loss).
        #[arg(long)]
        lr0: Option<f64>,
        /// Epoch (1-based) at which the learning rate drops.
        #[arg(long)]
        lr_drop_epoch: Option<usize>,
        /// Output directory (default <out-root>/train-<loss>).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Compare a trained model against its solver and equal power.
    Eval {
        /// Checkpoint written by `train`.
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Fresh test realizations (default from config, else 500).
        #[arg(long)]
        test_samples: Option<usize>,
        /// Output directory (default <out-root>/eval-<loss>).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Time solver and model inference per sample.
    Bench {
        /// Checkpoint written by `train`.
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Test realizations including one warm-up (default 201).
        #[arg(long)]
        samples: Option<usize>,
        /// Output directory (default <out-root>/bench-<loss>).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

/// Loss names as spelled on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Maxmin,
    MaxminPrior,
    Sumrate,
    Product,
}

impl LossArg {
    pub fn kind(self) -> LossKind {
        match self {
            LossArg::Maxmin => LossKind::MaxMin,
            LossArg::MaxminPrior => LossKind::MaxMinPrior,
            LossArg::Sumrate => LossKind::SumRate,
            LossArg::Product => LossKind::Product,
        }
    }

    /// The command-line spelling (also accepted in the config file).
    pub fn cli_name(self) -> &'static str {
        match self {
            LossArg::Maxmin => "maxmin",
            LossArg::MaxminPrior => "maxmin-prior",
            LossArg::Sumrate => "sumrate",
            LossArg::Product => "product",
        }
    }

    pub fn from_cli_name(name: &str) -> Option<Self> {
        match name {
            "maxmin" => Some(LossArg::Maxmin),
            "maxmin-prior" => Some(LossArg::MaxminPrior),
            "sumrate" => Some(LossArg::Sumrate),
            "product" => Some(LossArg::Product),
            _ => None,
        }
    }

    pub fn from_kind(kind: LossKind) -> Self {
        match kind {
            LossKind::MaxMin => LossArg::Maxmin,
            LossKind::MaxMinPrior => LossArg::MaxminPrior,
            LossKind::SumRate => LossArg::Sumrate,
            LossKind::Product => LossArg::Product,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: failed to configure {threads} threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }

    let ctx = match runcfg::Context::resolve(cli.config.as_deref(), cli.seed, cli.out_root.clone())
    {
        Ok(ctx) => ctx,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };

    let result = match &cli.command {
        Command::Generate { samples, out } => cmds::cmd_generate(&ctx, *samples, out.as_deref()),
        Command::Train {
            loss,
            dataset,
            samples,
            epochs,
            batch_size,
            lr0,
            lr_drop_epoch,
            out,
        } => cmds::cmd_train(
            &ctx,
            cmds::TrainArgs {
                loss: *loss,
                dataset: dataset.clone(),
                samples: *samples,
                epochs: *epochs,
                batch_size: *batch_size,
                lr0: *lr0,
                lr_drop_epoch: *lr_drop_epoch,
                out: out.clone(),
            },
        ),
        Command::Eval {
            checkpoint,
            test_samples,
            out,
        } => cmds::cmd_eval(&ctx, checkpoint, *test_samples, out.as_deref()),
        Command::Bench {
            checkpoint,
            samples,
            out,
        } => cmds::cmd_bench(&ctx, checkpoint, *samples, out.as_deref()),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
