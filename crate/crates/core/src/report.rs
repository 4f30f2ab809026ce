//! Evaluation artifacts: per-method SE comparisons, empirical CDFs, and the
//! timing table, exported as machine-readable CSV/JSON.
//!
//! The statistics conventions are fixed here once and used everywhere:
//! percentiles are order statistics (`sorted[ceil(p/100 * n) - 1]`), the
//! median is the 50th percentile, the per-sample geometric mean is
//! `exp(mean(ln SE_k))`, and the "95%-likely" figure is the 5th percentile
//! of the per-user SE values pooled across samples.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{se, sinr, PowerAllocation};
use crate::neural::MlpModel;
use crate::pipeline::{infer, Dataset, Sample};
use crate::solvers::{solve_maxmin, solve_weighted, PgConfig, WeightedObjective};

// ---------------------------------------------------------------------------
// Order statistics and CDFs
// ---------------------------------------------------------------------------

/// Empirical CDF as step points `(x, F(x))` over the distinct sorted values,
/// `F(x)` the fraction of inputs `<= x`; the last point always has `F = 1`.
pub fn empirical_cdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::config("empirical_cdf of an empty sample"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("empirical_cdf input contains a non-finite value"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len() as f64;
    let mut points = Vec::new();
    for (i, &x) in sorted.iter().enumerate() {
        // Last occurrence of each distinct value carries its step height.
        if i + 1 == sorted.len() || sorted[i + 1] > x {
            points.push((x, (i + 1) as f64 / n));
        }
    }
    Ok(points)
}

/// Order-statistic percentile: `sorted[ceil(p/100 * n) - 1]` with the index
/// clamped into range, so `percentile(v, 5)` of `[1..=100]` is `5` and
/// `percentile(v, 100)` is the maximum.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::config("percentile of an empty sample"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::config(format!("percentile level {p} outside [0, 100]")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("percentile input contains a non-finite value"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len();
    let rank = (p / 100.0 * n as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

/// Median as the 50th-percentile order statistic (lower median for even
/// sample sizes, consistent with [`percentile`]).
pub fn median(values: &[f64]) -> Result<f64> {
    percentile(values, 50.0)
}

// ---------------------------------------------------------------------------
// Methods under comparison
// ---------------------------------------------------------------------------

/// A power-control policy under evaluation: a fixed baseline, one of the
/// solvers, or a trained network.
#[derive(Debug, Clone)]
pub enum Method {
    /// Full power for everyone (`eta = 1`).
    EqualPower,
    /// Bisection + interference-function fixed point, per sample.
    MaxMinSolver { tol: f64 },
    /// Projected gradient ascent on a weighted objective, per sample.
    WeightedSolver {
        objective: WeightedObjective,
        config: PgConfig,
    },
    /// Trained MLP ("deep learning") inference.
    Dl { label: String, model: MlpModel },
}

impl Method {
    /// Stable identifier used in CSV/JSON artifacts.
    pub fn name(&self) -> String {
        match self {
            Method::EqualPower => "equal_power".to_string(),
            Method::MaxMinSolver { .. } => "maxmin_bisection".to_string(),
            Method::WeightedSolver { objective, .. } => match objective {
                WeightedObjective::SumRate => "pg_sum_rate".to_string(),
                WeightedObjective::Product => "pg_product".to_string(),
            },
            Method::Dl { label, .. } => label.clone(),
        }
    }

    /// Configuration metadata embedded in reports; model weights are
    /// deliberately not repeated here (they live in the checkpoint).
    pub fn describe(&self) -> serde_json::Value {
        match self {
            Method::EqualPower => serde_json::json!({ "kind": "equal_power" }),
            Method::MaxMinSolver { tol } => serde_json::json!({
                "kind": "maxmin_bisection",
                "tol": tol,
            }),
            Method::WeightedSolver { objective, config } => serde_json::json!({
                "kind": "projected_gradient",
                "objective": objective,
                "config": config,
            }),
            Method::Dl { label, model } => serde_json::json!({
                "kind": "dl_inference",
                "label": label,
                "dims": model.dims,
            }),
        }
    }

    /// The policy itself: a power allocation for one sample.
    pub fn allocate(&self, sample: &Sample) -> Result<PowerAllocation> {
        match self {
            Method::EqualPower => PowerAllocation::uniform(sample.coeffs.num_ues(), 1.0),
            Method::MaxMinSolver { tol } => Ok(solve_maxmin(&sample.coeffs, *tol)?.eta),
            Method::WeightedSolver { objective, config } => {
                Ok(solve_weighted(&sample.coeffs, *objective, config)?.eta)
            }
            Method::Dl { model, .. } => infer(model, &sample.b),
        }
    }
}

// ---------------------------------------------------------------------------
// Comparison report
// ---------------------------------------------------------------------------

/// Summary statistics of one method over the retained samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    /// Median over samples of the per-sample minimum SE.
    pub median_min_se: f64,
    /// Median over samples of the per-sample sum SE.
    pub median_sum_se: f64,
    /// Median over samples of the per-sample geometric-mean SE.
    pub median_geomean_se: f64,
    /// 5th percentile of per-user SE pooled across samples ("95%-likely").
    pub p5_per_user_se: f64,
}

/// Raw and summarized results of one method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodResult {
    pub name: String,
    pub config: serde_json::Value,
    /// Per-sample spectral efficiencies, `retained samples x K` (bit/s/Hz).
    pub se: Vec<Vec<f64>>,
    pub summary: MethodSummary,
}

/// A per-sample failure and the method that caused it; the sample is
/// excluded from every method's summary (paired comparison).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleFailure {
    pub sample_index: usize,
    pub method: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub num_ues: usize,
    pub num_aps: usize,
    pub tau_p: usize,
    pub tau_c: usize,
    pub dataset_seed: u64,
    pub num_samples: usize,
    pub num_retained: usize,
    pub methods: Vec<serde_json::Value>,
}

/// Paired per-method SE matrices plus summaries, over one test dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub metadata: ReportMetadata,
    pub results: Vec<MethodResult>,
    pub failures: Vec<SampleFailure>,
}

/// Recompute a summary from an SE matrix; reports store summaries, and this
/// is the invariant check that they match the raw data.
pub fn summarize(se_matrix: &[Vec<f64>]) -> Result<MethodSummary> {
    if se_matrix.is_empty() {
        return Err(Error::config("cannot summarize an empty SE matrix"));
    }
    let mins: Vec<f64> = se_matrix
        .iter()
        .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let sums: Vec<f64> = se_matrix.iter().map(|row| row.iter().sum()).collect();
    let geomeans: Vec<f64> = se_matrix
        .iter()
        .map(|row| (row.iter().map(|v| v.ln()).sum::<f64>() / row.len() as f64).exp())
        .collect();
    let pooled: Vec<f64> = se_matrix.iter().flatten().copied().collect();
    Ok(MethodSummary {
        median_min_se: median(&mins)?,
        median_sum_se: median(&sums)?,
        median_geomean_se: median(&geomeans)?,
        p5_per_user_se: percentile(&pooled, 5.0)?,
    })
}

impl ComparisonReport {
    /// Pooled per-user SE values of the named method (CDF input).
    pub fn pooled_se(&self, method: &str) -> Option<Vec<f64>> {
        self.results
            .iter()
            .find(|r| r.name == method)
            .map(|r| r.se.iter().flatten().copied().collect())
    }

    pub fn result(&self, method: &str) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.name == method)
    }
}

/// Evaluate each method on every sample of `test` and summarize.
///
/// Evaluation is parallel across samples.  A method failing on a sample
/// records a [`SampleFailure`] and removes that sample from all methods, so
/// the remaining matrices stay paired row for row.
pub fn compare_methods(
    test: &Dataset,
    methods: &[Method],
    tau_p: usize,
    tau_c: usize,
) -> Result<ComparisonReport> {
    if methods.is_empty() {
        return Err(Error::config("compare_methods needs at least one method"));
    }
    if test.samples.is_empty() {
        return Err(Error::config("compare_methods needs a non-empty test set"));
    }
    let mut names = Vec::new();
    for m in methods {
        let name = m.name();
        if names.contains(&name) {
            return Err(Error::config(format!("duplicate method name '{name}'")));
        }
        names.push(name);
    }

    // rows[i] = per-method Result<SE row> for sample i.
    let rows: Vec<Vec<std::result::Result<Vec<f64>, String>>> = test
        .samples
        .par_iter()
        .map(|sample| {
            methods
                .iter()
                .map(|m| {
                    let eta = m.allocate(sample).map_err(|e| e.to_string())?;
                    let sinr_values = sinr(&sample.coeffs, &eta);
                    se(&sinr_values, tau_p, tau_c).map_err(|e| e.to_string())
                })
                .collect()
        })
        .collect();

    let mut matrices: Vec<Vec<Vec<f64>>> = vec![Vec::new(); methods.len()];
    let mut failures = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        let mut kept: Vec<Vec<f64>> = Vec::with_capacity(methods.len());
        let mut failed = false;
        for (m, entry) in row.into_iter().enumerate() {
            match entry {
                Ok(se_row) => kept.push(se_row),
                Err(message) => {
                    failures.push(SampleFailure {
                        sample_index: i,
                        method: names[m].clone(),
                        message,
                    });
                    failed = true;
                }
            }
        }
        if !failed {
            for (m, se_row) in kept.into_iter().enumerate() {
                matrices[m].push(se_row);
            }
        }
    }

    let num_retained = matrices[0].len();
    if num_retained == 0 {
        return Err(Error::numerical(
            "every test sample failed under some method; nothing to compare",
        ));
    }

    let results = methods
        .iter()
        .zip(matrices)
        .map(|(m, se_matrix)| {
            let summary = summarize(&se_matrix)?;
            Ok(MethodResult {
                name: m.name(),
                config: m.describe(),
                se: se_matrix,
                summary,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ComparisonReport {
        metadata: ReportMetadata {
            num_ues: test.num_ues(),
            num_aps: test.params.num_aps,
            tau_p,
            tau_c,
            dataset_seed: test.seed,
            num_samples: test.num_samples(),
            num_retained,
            methods: methods.iter().map(Method::describe).collect(),
        },
        results,
        failures,
    })
}

// ---------------------------------------------------------------------------
// Timing
// ---------------------------------------------------------------------------

/// Samples in the DL timing batch (the solver methods are always timed one
/// sample at a time).
pub const DL_TIMING_BATCH: usize = 200;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingEntry {
    pub method: String,
    /// Mean wall time per sample, seconds.
    pub sec_per_sample: f64,
    /// Samples that contributed to the mean (warm-up excluded).
    pub samples_timed: usize,
    /// Samples processed per timed call: 1 for solvers, the batch size for
    /// DL inference.
    pub batch_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingReport {
    pub entries: Vec<TimingEntry>,
    pub hardware: String,
}

impl TimingReport {
    pub fn entry(&self, method: &str) -> Option<&TimingEntry> {
        self.entries.iter().find(|e| e.method == method)
    }
}

/// Wall-time per sample for each method, single-threaded for comparability.
///
/// Every method is warmed up on the first sample (excluded from the mean).
/// Solver methods are then timed over single-sample calls on the whole test
/// set; DL methods are timed over one batch of up to [`DL_TIMING_BATCH`]
/// samples and the batch time is divided by the batch size.
pub fn bench_timing(test: &Dataset, methods: &[Method]) -> Result<TimingReport> {
    if methods.is_empty() {
        return Err(Error::config("bench_timing needs at least one method"));
    }
    if test.samples.len() < 2 {
        return Err(Error::config(
            "bench_timing needs at least two samples (one is spent on warm-up)",
        ));
    }
    let mut entries = Vec::with_capacity(methods.len());
    for method in methods {
        method.allocate(&test.samples[0])?; // warm-up, excluded
        let timed: &[Sample] = &test.samples[1..];
        let entry = match method {
            Method::Dl { .. } => {
                let batch = &timed[..timed.len().min(DL_TIMING_BATCH)];
                let start = Instant::now();
                for sample in batch {
                    method.allocate(sample)?;
                }
                let elapsed = start.elapsed().as_secs_f64();
                TimingEntry {
                    method: method.name(),
                    sec_per_sample: elapsed / batch.len() as f64,
                    samples_timed: batch.len(),
                    batch_size: batch.len(),
                }
            }
            _ => {
                let mut total = 0.0;
                for sample in timed {
                    let start = Instant::now();
                    method.allocate(sample)?;
                    total += start.elapsed().as_secs_f64();
                }
                TimingEntry {
                    method: method.name(),
                    sec_per_sample: total / timed.len() as f64,
                    samples_timed: timed.len(),
                    batch_size: 1,
                }
            }
        };
        entries.push(entry);
    }
    Ok(TimingReport {
        entries,
        hardware: hardware_note(),
    })
}

/// One-line description of the machine the timings came from.
pub fn hardware_note() -> String {
    format!(
        "{}-{}, {} logical cpus, single-threaded timing",
        std::env::consts::ARCH,
        std::env::consts::OS,
        std::thread::available_parallelism().map_or(0, |n| n.get())
    )
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Json,
}

/// Write the pooled per-user SE CDF of every method with the
/// `method,x_se,F` schema.
pub fn write_cdf_csv(report: &ComparisonReport, path: impl AsRef<Path>) -> Result<()> {
    if report.results.is_empty() {
        return Err(Error::config("refusing to export an empty report"));
    }
    let mut out = String::from("method,x_se,F\n");
    for result in &report.results {
        let pooled: Vec<f64> = result.se.iter().flatten().copied().collect();
        for (x, f) in empirical_cdf(&pooled)? {
            out.push_str(&format!("{},{},{}\n", result.name, x, f));
        }
    }
    let mut writer = BufWriter::new(File::create(path.as_ref())?);
    writer.write_all(out.as_bytes())?;
    Ok(())
}

/// Write the per-method summary table:
/// `method,median_min_se,median_sum_se,median_geomean_se,p5_per_user_se`.
pub fn write_summary_csv(report: &ComparisonReport, path: impl AsRef<Path>) -> Result<()> {
    if report.results.is_empty() {
        return Err(Error::config("refusing to export an empty report"));
    }
    let mut out =
        String::from("method,median_min_se,median_sum_se,median_geomean_se,p5_per_user_se\n");
    for r in &report.results {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.name,
            r.summary.median_min_se,
            r.summary.median_sum_se,
            r.summary.median_geomean_se,
            r.summary.p5_per_user_se
        ));
    }
    let mut writer = BufWriter::new(File::create(path.as_ref())?);
    writer.write_all(out.as_bytes())?;
    Ok(())
}

/// Write the timing table with the `method,sec_per_sample` schema.
pub fn write_timing_csv(report: &TimingReport, path: impl AsRef<Path>) -> Result<()> {
    if report.entries.is_empty() {
        return Err(Error::config("refusing to export an empty timing report"));
    }
    let mut out = String::from("method,sec_per_sample\n");
    for e in &report.entries {
        out.push_str(&format!("{},{}\n", e.method, e.sec_per_sample));
    }
    let mut writer = BufWriter::new(File::create(path.as_ref())?);
    writer.write_all(out.as_bytes())?;
    Ok(())
}

/// Export a comparison report: `Json` writes the full report (metadata,
/// matrices, summaries) to the path; `Csv` writes the pooled CDF artifact.
pub fn export_comparison(
    report: &ComparisonReport,
    format: ExportFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    if report.results.is_empty() || report.results.iter().any(|r| r.se.is_empty()) {
        return Err(Error::config("refusing to export an empty report"));
    }
    match format {
        ExportFormat::Csv => write_cdf_csv(report, path),
        ExportFormat::Json => {
            let writer = BufWriter::new(File::create(path.as_ref())?);
            serde_json::to_writer(writer, report)?;
            Ok(())
        }
    }
}

/// Re-parse a JSON comparison report.
pub fn load_comparison(path: impl AsRef<Path>) -> Result<ComparisonReport> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    Ok(serde_json::from_reader(reader)?)
}
