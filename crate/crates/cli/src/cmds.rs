//! The four subcommands.  Every command ends by writing a `manifest.json`
//! naming its inputs, outputs (with SHA-256 digests), resolved settings,
//! and every derived seed — enough to re-run it bit-identically.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use cfpc_core::error::{Error, Result};
use cfpc_core::neural::LossKind;
use cfpc_core::pipeline::{
    build_dataset, load_checkpoint, save_checkpoint, train_with, Dataset, LearningCurve,
    TrainConfig,
};
use cfpc_core::report::{
    bench_timing, compare_methods, export_comparison, write_cdf_csv, write_summary_csv,
    write_timing_csv, ComparisonReport, ExportFormat, Method,
};
use cfpc_core::solvers::{PgConfig, WeightedObjective};

use crate::runcfg::{
    Context, TrainOverrides, DEFAULT_BENCH_SAMPLES, DEFAULT_MAXMIN_TOL, DEFAULT_SAMPLES,
    DEFAULT_TEST_SAMPLES,
};
use crate::LossArg;

/// SHA-256 of a file, as a lowercase hex string.
pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn ensure_exists(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{what} not found: {}", path.display()),
        )))
    }
}

/// Write `manifest.json` next to a command's artifacts.
fn write_manifest(
    dir: &Path,
    ctx: &Context,
    command: &str,
    resolved: serde_json::Value,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
) -> Result<PathBuf> {
    let manifest = serde_json::json!({
        "command": command,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "master_seed": ctx.master_seed,
        "stage_seeds": ctx.stage_seeds(),
        "out_root": ctx.out_root,
        "system": ctx.params,
        "run_config": ctx.file,
        "resolved": resolved,
        "inputs": inputs,
        "outputs": outputs,
    });
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}

fn digest_outputs(paths: &[&Path]) -> Result<BTreeMap<String, String>> {
    let mut outputs = BTreeMap::new();
    for path in paths {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        outputs.insert(name, format!("sha256:{}", sha256_hex(path)?));
    }
    Ok(outputs)
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

pub fn cmd_generate(ctx: &Context, samples: Option<usize>, out: Option<&Path>) -> Result<()> {
    let n = samples
        .or(ctx.file.train.samples)
        .unwrap_or(DEFAULT_SAMPLES);
    let seed = ctx.stage_seed("dataset");
    let dataset = build_dataset(&ctx.params, n, seed)?;

    let path = match out {
        Some(p) => p.to_path_buf(),
        None => ctx.out_root.join("dataset.json"),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    dataset.save_cache(&path)?;
    let digest = sha256_hex(&path)?;

    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    write_manifest(
        &dir,
        ctx,
        "generate",
        serde_json::json!({
            "samples": n,
            "dataset_seed": seed,
            "dataset_file": path,
        }),
        BTreeMap::new(),
        BTreeMap::from([(
            path.file_name().unwrap().to_string_lossy().into_owned(),
            format!("sha256:{digest}"),
        )]),
    )?;

    println!(
        "wrote {} ({} samples, K={}, L={}) sha256:{digest}",
        path.display(),
        n,
        ctx.params.num_ues,
        ctx.params.num_aps
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub struct TrainArgs {
    pub loss: Option<LossArg>,
    pub dataset: Option<PathBuf>,
    pub samples: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr0: Option<f64>,
    pub lr_drop_epoch: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Load the named dataset cache or build one in memory from the config.
fn obtain_dataset(ctx: &Context, args: &TrainArgs) -> Result<(Dataset, serde_json::Value)> {
    match &args.dataset {
        Some(path) => {
            ensure_exists(path, "dataset")?;
            let ds = Dataset::load_cache(path)?;
            if ds.params != ctx.params {
                return Err(Error::config(format!(
                    "dataset parameters disagree with the run configuration \
                     (dataset: K={}, L={}; config: K={}, L={}); regenerate the dataset \
                     with this config",
                    ds.params.num_ues, ds.params.num_aps, ctx.params.num_ues, ctx.params.num_aps
                )));
            }
            let origin = serde_json::json!({
                "kind": "cache",
                "path": path,
                "sha256": sha256_hex(path)?,
            });
            Ok((ds, origin))
        }
        None => {
            let n = args
                .samples
                .or(ctx.file.train.samples)
                .unwrap_or(DEFAULT_SAMPLES);
            let seed = ctx.stage_seed("dataset");
            let ds = build_dataset(&ctx.params, n, seed)?;
            let origin = serde_json::json!({
                "kind": "in_memory",
                "samples": n,
                "dataset_seed": seed,
            });
            Ok((ds, origin))
        }
    }
}

pub fn cmd_train(ctx: &Context, args: TrainArgs) -> Result<()> {
    let loss = ctx.resolve_loss(args.loss)?;
    let cfg: TrainConfig = ctx.train_config(
        loss,
        &TrainOverrides {
            epochs: args.epochs,
            batch_size: args.batch_size,
            lr0: args.lr0,
            lr_drop_epoch: args.lr_drop_epoch,
        },
    )?;
    let (dataset, dataset_origin) = obtain_dataset(ctx, &args)?;

    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| ctx.out_root.join(format!("train-{}", loss.cli_name())));
    ensure_dir(&out_dir)?;
    let curve_path = out_dir.join("curve.csv");
    let ckpt_path = out_dir.join("checkpoint.json");

    let mut partial = LearningCurve::default();
    let outcome = train_with(&dataset, &cfg, |rec| partial.records.push(*rec));

    match outcome {
        Ok((model, curve)) => {
            curve.save_csv(&curve_path)?;
            save_checkpoint(&ckpt_path, &model, &cfg.loss, cfg.seed)?;
            let outputs = digest_outputs(&[&curve_path, &ckpt_path])?;
            write_manifest(
                &out_dir,
                ctx,
                "train",
                serde_json::json!({
                    "loss": loss.cli_name(),
                    "train_config": cfg,
                    "dataset": dataset_origin,
                    "status": "completed",
                }),
                BTreeMap::new(),
                outputs,
            )?;
            let last = curve.records.last().expect("at least one epoch");
            println!(
                "trained {} for {} epochs (final mean loss {:.6}); wrote {} and {}",
                loss.cli_name(),
                cfg.epochs,
                last.mean_loss,
                ckpt_path.display(),
                curve_path.display()
            );
            Ok(())
        }
        Err(e) => {
            // Divergence mid-run: persist the partial curve and a manifest
            // recording the failure, then exit nonzero.
            partial.save_csv(&curve_path).ok();
            let outputs = digest_outputs(&[&curve_path]).unwrap_or_default();
            write_manifest(
                &out_dir,
                ctx,
                "train",
                serde_json::json!({
                    "loss": loss.cli_name(),
                    "train_config": cfg,
                    "dataset": dataset_origin,
                    "status": "diverged",
                    "error": e.to_string(),
                }),
                BTreeMap::new(),
                outputs,
            )
            .ok();
            eprintln!(
                "training diverged after {} completed epochs; partial curve at {}",
                partial.len(),
                curve_path.display()
            );
            Err(e)
        }
    }
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

/// The solver baseline matched to the loss a checkpoint was trained with.
fn solver_for(kind: LossKind, maxmin_tol: f64, pg: &PgConfig) -> Method {
    match kind {
        LossKind::MaxMin | LossKind::MaxMinPrior => Method::MaxMinSolver { tol: maxmin_tol },
        LossKind::SumRate => Method::WeightedSolver {
            objective: WeightedObjective::SumRate,
            config: pg.clone(),
        },
        LossKind::Product => Method::WeightedSolver {
            objective: WeightedObjective::Product,
            config: pg.clone(),
        },
    }
}

fn print_summary_table(report: &ComparisonReport) {
    println!(
        "{:<22} {:>14} {:>14} {:>18} {:>16}",
        "method", "median_min_se", "median_sum_se", "median_geomean_se", "p5_per_user_se"
    );
    for r in &report.results {
        println!(
            "{:<22} {:>14.6} {:>14.6} {:>18.6} {:>16.6}",
            r.name,
            r.summary.median_min_se,
            r.summary.median_sum_se,
            r.summary.median_geomean_se,
            r.summary.p5_per_user_se
        );
    }
    if !report.failures.is_empty() {
        println!(
            "note: {} sample(s) excluded after per-method failures",
            report.metadata.num_samples - report.metadata.num_retained
        );
    }
}

pub fn cmd_eval(
    ctx: &Context,
    checkpoint: &Path,
    test_samples: Option<usize>,
    out: Option<&Path>,
) -> Result<()> {
    ensure_exists(checkpoint, "checkpoint")?;
    let (model, loss_spec, _train_seed) = load_checkpoint(checkpoint)?;
    if model.dims.0 != ctx.params.num_ues {
        return Err(Error::config(format!(
            "checkpoint is for K={} users but the configuration says K={}",
            model.dims.0, ctx.params.num_ues
        )));
    }
    let loss = LossArg::from_kind(loss_spec.kind);
    let n = test_samples
        .or(ctx.file.eval.test_samples)
        .unwrap_or(DEFAULT_TEST_SAMPLES);
    let test_seed = ctx.stage_seed("test");
    let test = build_dataset(&ctx.params, n, test_seed)?;

    let maxmin_tol = ctx.file.eval.maxmin_tol.unwrap_or(DEFAULT_MAXMIN_TOL);
    let pg = ctx.file.eval.pg.clone().unwrap_or_default();
    let methods = vec![
        Method::EqualPower,
        solver_for(loss_spec.kind, maxmin_tol, &pg),
        Method::Dl {
            label: format!("dl_{}", loss_spec.kind.name()),
            model,
        },
    ];
    let report = compare_methods(&test, &methods, ctx.params.tau_p, ctx.params.tau_c)?;

    let out_dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.out_root.join(format!("eval-{}", loss.cli_name())));
    ensure_dir(&out_dir)?;
    let report_path = out_dir.join("report.json");
    let cdf_path = out_dir.join("cdf.csv");
    let summary_path = out_dir.join("summary.csv");
    export_comparison(&report, ExportFormat::Json, &report_path)?;
    write_cdf_csv(&report, &cdf_path)?;
    write_summary_csv(&report, &summary_path)?;

    let outputs = digest_outputs(&[&report_path, &cdf_path, &summary_path])?;
    write_manifest(
        &out_dir,
        ctx,
        "eval",
        serde_json::json!({
            "loss": loss.cli_name(),
            "checkpoint": checkpoint,
            "checkpoint_sha256": sha256_hex(checkpoint)?,
            "test_samples": n,
            "test_seed": test_seed,
            "maxmin_tol": maxmin_tol,
            "pg": pg,
            "methods": report.metadata.methods,
        }),
        BTreeMap::from([(
            "checkpoint".to_string(),
            checkpoint.display().to_string(),
        )]),
        outputs,
    )?;

    print_summary_table(&report);
    println!("wrote {}", out_dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

pub fn cmd_bench(
    ctx: &Context,
    checkpoint: &Path,
    samples: Option<usize>,
    out: Option<&Path>,
) -> Result<()> {
    ensure_exists(checkpoint, "checkpoint")?;
    let (model, loss_spec, _) = load_checkpoint(checkpoint)?;
    if model.dims.0 != ctx.params.num_ues {
        return Err(Error::config(format!(
            "checkpoint is for K={} users but the configuration says K={}",
            model.dims.0, ctx.params.num_ues
        )));
    }
    let loss = LossArg::from_kind(loss_spec.kind);
    let n = samples
        .or(ctx.file.bench.samples)
        .unwrap_or(DEFAULT_BENCH_SAMPLES);
    let bench_seed = ctx.stage_seed("bench");
    let test = build_dataset(&ctx.params, n, bench_seed)?;

    let maxmin_tol = ctx.file.bench.maxmin_tol.unwrap_or(DEFAULT_MAXMIN_TOL);
    let pg = ctx.file.bench.pg.clone().unwrap_or_default();
    let solver = solver_for(loss_spec.kind, maxmin_tol, &pg);
    let solver_name = solver.name();
    let dl_label = format!("dl_{}", loss_spec.kind.name());
    let methods = vec![
        Method::EqualPower,
        solver,
        Method::Dl {
            label: dl_label.clone(),
            model,
        },
    ];
    let report = bench_timing(&test, &methods)?;

    let out_dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.out_root.join(format!("bench-{}", loss.cli_name())));
    ensure_dir(&out_dir)?;
    let csv_path = out_dir.join("timing.csv");
    let json_path = out_dir.join("timing.json");
    write_timing_csv(&report, &csv_path)?;
    {
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        std::fs::write(&json_path, text)?;
    }

    let outputs = digest_outputs(&[&csv_path, &json_path])?;
    write_manifest(
        &out_dir,
        ctx,
        "bench",
        serde_json::json!({
            "loss": loss.cli_name(),
            "checkpoint": checkpoint,
            "checkpoint_sha256": sha256_hex(checkpoint)?,
            "samples": n,
            "bench_seed": bench_seed,
            "maxmin_tol": maxmin_tol,
            "pg": pg,
            "hardware": report.hardware,
        }),
        BTreeMap::from([(
            "checkpoint".to_string(),
            checkpoint.display().to_string(),
        )]),
        outputs,
    )?;

    for entry in &report.entries {
        println!(
            "{:<22} {:>12.6e} s/sample  ({} samples, batch {})",
            entry.method, entry.sec_per_sample, entry.samples_timed, entry.batch_size
        );
    }
    if let (Some(solver_t), Some(dl_t)) = (report.entry(&solver_name), report.entry(&dl_label)) {
        if dl_t.sec_per_sample > 0.0 {
            println!(
                "speedup {} vs {}: {:.1}x",
                dl_label,
                solver_name,
                solver_t.sec_per_sample / dl_t.sec_per_sample
            );
        }
    }
    println!("wrote {}", out_dir.display());
    Ok(())
}
