//! Run configuration: the TOML file, flag/env merging, and derived seeds.
//!
//! Precedence, most specific wins: command-line flags, then the
//! `CFPC_OUT_ROOT` environment variable (output root only), then the config
//! file, then built-in defaults.  One master seed expands into per-stage
//! seeds via `derive_seed(master, stage_tag)` with the tags `"dataset"`,
//! `"train"`, `"test"`, and `"bench"`, so each stage is independently
//! reproducible.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cfpc_core::config::{SystemConfig, SystemParams};
use cfpc_core::error::{Error, Result};
use cfpc_core::pipeline::TrainConfig;
use cfpc_core::rng::derive_seed;
use cfpc_core::solvers::PgConfig;

use crate::LossArg;

/// Default master seed when neither `--seed` nor the config file sets one.
pub const DEFAULT_MASTER_SEED: u64 = 1;
/// Environment variable overriding the configured output root.
pub const OUT_ROOT_ENV: &str = "CFPC_OUT_ROOT";
/// Default output root relative to the working directory.
pub const DEFAULT_OUT_ROOT: &str = "runs";
/// Default dataset size (both `generate` and in-memory training sets).
pub const DEFAULT_SAMPLES: usize = 10_000;
/// Default fresh-test-set size for `eval`.
pub const DEFAULT_TEST_SAMPLES: usize = 500;
/// Default `bench` set size: one warm-up plus a 200-sample batch.
pub const DEFAULT_BENCH_SAMPLES: usize = 201;
/// Default max-min bisection tolerance for baselines.
pub const DEFAULT_MAXMIN_TOL: f64 = 1e-6;

/// On-disk run configuration; every table and field optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    pub master_seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub system: SystemConfig,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// In-memory training-set size when no dataset file is given.
    pub samples: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr0: Option<f64>,
    pub lr_drop_epoch: Option<usize>,
    pub lr_drop_factor: Option<f64>,
    pub momentum: Option<f64>,
    pub hidden: Option<(usize, usize)>,
    /// Present each training sample under a fresh seeded user permutation
    /// (teaches the exchangeability of the task; the dataset and inference
    /// are untouched).
    pub augment_permutations: Option<bool>,
    /// Canonicalize user order (sort by B descending) inside the model;
    /// exact permutation equivariance, recorded in the checkpoint.
    pub sort_inputs: Option<bool>,
    /// Loss name in command-line spelling: maxmin | maxmin-prior |
    /// sumrate | product.
    pub loss: Option<String>,
    /// Numerator of the max-min loss's `sigmoid(c / SINR_k)` term
    /// (default 0.3; ignored by the other losses).
    pub sigmoid_coeff: Option<f64>,
    /// Training seed; defaults to the derived `"train"` stage seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub test_samples: Option<usize>,
    pub maxmin_tol: Option<f64>,
    pub pg: Option<PgConfig>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub samples: Option<usize>,
    pub maxmin_tol: Option<f64>,
    pub pg: Option<PgConfig>,
}

/// Fully resolved run context shared by all commands.
pub struct Context {
    pub master_seed: u64,
    pub out_root: PathBuf,
    pub params: SystemParams,
    pub file: RunConfigFile,
}

impl Context {
    pub fn resolve(
        config_path: Option<&Path>,
        seed_flag: Option<u64>,
        out_root_flag: Option<PathBuf>,
    ) -> Result<Self> {
        let file: RunConfigFile = match config_path {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::Io(std::io::Error::new(
                        e.kind(),
                        format!("config {}: {e}", path.display()),
                    ))
                })?;
                toml::from_str(&text)?
            }
            None => RunConfigFile::default(),
        };
        let master_seed = seed_flag
            .or(file.master_seed)
            .unwrap_or(DEFAULT_MASTER_SEED);
        let out_root = out_root_flag
            .or_else(|| std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from))
            .or_else(|| file.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT));
        let params = file.system.clone().into_params()?;
        Ok(Self {
            master_seed,
            out_root,
            params,
            file,
        })
    }

    /// Stage seed derived from the master seed by the documented hash.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.master_seed, stage)
    }

    /// All stage seeds, for the manifest.
    pub fn stage_seeds(&self) -> BTreeMap<String, u64> {
        ["dataset", "train", "test", "bench"]
            .into_iter()
            .map(|s| (s.to_string(), self.stage_seed(s)))
            .collect()
    }

    /// The training configuration for `loss`, merging built-in defaults,
    /// the `[train]` table, and command-line overrides (already folded into
    /// `args` by the caller).
    pub fn train_config(&self, loss: LossArg, args: &TrainOverrides) -> Result<TrainConfig> {
        let section = &self.file.train;
        let mut cfg = TrainConfig::for_loss(loss.kind(), self.params.num_ues);
        cfg.seed = self.stage_seed("train");
        if let Some(v) = section.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = section.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = section.lr0 {
            cfg.lr0 = v;
        }
        if let Some(v) = section.lr_drop_epoch {
            cfg.lr_drop_epoch = v;
        }
        if let Some(v) = section.lr_drop_factor {
            cfg.lr_drop_factor = v;
        }
        if let Some(v) = section.momentum {
            cfg.momentum = v;
        }
        if let Some(v) = section.hidden {
            cfg.hidden = v;
        }
        if let Some(v) = section.augment_permutations {
            cfg.augment_permutations = v;
        }
        if let Some(v) = section.sort_inputs {
            cfg.sort_inputs = v;
        }
        if let Some(v) = section.sigmoid_coeff {
            cfg.loss.sigmoid_coeff = v;
        }
        if let Some(v) = section.seed {
            cfg.seed = v;
        }
        if let Some(v) = args.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = args.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = args.lr0 {
            cfg.lr0 = v;
        }
        if let Some(v) = args.lr_drop_epoch {
            cfg.lr_drop_epoch = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loss selection: flag first, then the `[train].loss` entry, then the
    /// max-min default.
    pub fn resolve_loss(&self, flag: Option<LossArg>) -> Result<LossArg> {
        if let Some(l) = flag {
            return Ok(l);
        }
        match self.file.train.loss.as_deref() {
            Some(name) => LossArg::from_cli_name(name).ok_or_else(|| {
                Error::config(format!(
                    "unknown loss '{name}' in config; expected maxmin | maxmin-prior | \
                     sumrate | product"
                ))
            }),
            None => Ok(LossArg::Maxmin),
        }
    }
}

/// Command-line training overrides (beat the config file).
#[derive(Debug, Default, Clone, Copy)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr0: Option<f64>,
    pub lr_drop_epoch: Option<usize>,
}
