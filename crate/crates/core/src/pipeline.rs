//! Dataset construction, the training loop, and inference.
//!
//! A [`Dataset`] is a bag of independent network realizations: each
//! [`Sample`] keeps the per-user aggregated large-scale fading vector `B`
//! (the network input), the closed-form SINR coefficients (everything the
//! losses and solvers need), and the seed of the scenario it came from so
//! the whole sample can be regenerated and cross-checked.  [`train`] runs
//! plain minibatch SGD with the step learning-rate schedule and returns the
//! trained model together with its [`LearningCurve`].
//!
//! Determinism contract: `build_dataset` and `train` are bit-reproducible
//! for a fixed `(params, seed)` / `(dataset, config)` pair.  Per-sample
//! gradient terms inside a batch may be computed concurrently, but they are
//! reduced in a fixed chunk order ([`GRAD_CHUNK`] samples per chunk), and
//! per-sample losses are summed in dataset order, so thread count never
//! changes a single bit of the result.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SystemParams;
use crate::error::{Error, Result};
use crate::metrics::{aggregate_lsf, sinr, sinr_coefficients, PowerAllocation, SinrCoefficients};
use crate::neural::{
    init_mlp, loss_grad_wrt_eta, loss_value, sgd_step, Gradients, LossKind, LossSpec, MlpModel,
};
use crate::rng::{derive_seed, derive_seed_indexed, stream_rng};
use crate::scenario::{channel_stats, generate_scenario, Scenario};

/// Samples per reduction chunk inside a batch; fixed so the gradient
/// summation order is independent of the number of worker threads.
pub const GRAD_CHUNK: usize = 32;

/// One network realization, ready for both the MLP and the solvers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sample {
    /// Seed that regenerates this sample's [`Scenario`] under the dataset's
    /// [`SystemParams`].
    pub scenario_seed: u64,
    /// Aggregated large-scale fading `B_k = sum_l beta_kl` (network input).
    pub b: Vec<f64>,
    /// Closed-form SINR coefficients of the realization.
    pub coeffs: SinrCoefficients,
}

impl Sample {
    /// Regenerate the scenario this sample was built from.
    pub fn scenario(&self, params: &SystemParams) -> Result<Scenario> {
        generate_scenario(params, self.scenario_seed)
    }
}

/// A set of independent realizations drawn from one [`SystemParams`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub params: SystemParams,
    /// Master seed the per-sample seeds were derived from.
    pub seed: u64,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn num_ues(&self) -> usize {
        self.params.num_ues
    }
}

/// Reduce an existing scenario to a training sample.
fn sample_from_scenario(params: &SystemParams, scenario: &Scenario) -> Result<Sample> {
    let stats = channel_stats(scenario, params);
    let coeffs = sinr_coefficients(&stats, scenario, params.rho)?;
    Ok(Sample {
        scenario_seed: scenario.seed,
        b: aggregate_lsf(&scenario.beta),
        coeffs,
    })
}

/// Build the sample with the given scenario seed: generate the scenario,
/// estimate the channel statistics, and reduce to SINR coefficients.
pub fn make_sample(params: &SystemParams, scenario_seed: u64) -> Result<Sample> {
    let scenario = generate_scenario(params, scenario_seed)?;
    sample_from_scenario(params, &scenario)
}

/// Draw `num_samples` independent realizations.  Sample `i` uses the seed
/// `derive_seed_indexed(seed, "dataset-sample", i)`, so any sample can be
/// regenerated in isolation and the result does not depend on thread count.
pub fn build_dataset(params: &SystemParams, num_samples: usize, seed: u64) -> Result<Dataset> {
    params.validate()?;
    if num_samples == 0 {
        return Err(Error::config("dataset must contain at least one sample"));
    }
    let samples = (0..num_samples)
        .into_par_iter()
        .map(|i| make_sample(params, derive_seed_indexed(seed, "dataset-sample", i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        params: params.clone(),
        seed,
        samples,
    })
}

// ---------------------------------------------------------------------------
// Dataset cache file
// ---------------------------------------------------------------------------

/// Version tag of the dataset cache format.
pub const DATASET_FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    scenario_seed: u64,
    /// Per-sample large-scale fading in dB, `K x L` (row per user).  Kept
    /// for external consumers and as an integrity check; loading always
    /// regenerates the sample from `scenario_seed` so that a loaded dataset
    /// is bit-identical to a freshly built one.
    beta_db: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    version: u32,
    seed: u64,
    params: SystemParams,
    samples: Vec<SampleRecord>,
}

/// Relative mismatch (in linear beta) above which a cached `beta_db` entry
/// is considered corrupt.
const CACHE_INTEGRITY_RTOL: f64 = 1e-9;

impl Dataset {
    /// Write the versioned cache file: parameters, master seed, and per
    /// sample the scenario seed plus the full fading matrix in dB.
    pub fn save_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        let records = self
            .samples
            .par_iter()
            .map(|s| {
                let scenario = s.scenario(&self.params)?;
                Ok(SampleRecord {
                    scenario_seed: s.scenario_seed,
                    beta_db: scenario.beta_db(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let file = DatasetFile {
            version: DATASET_FILE_VERSION,
            seed: self.seed,
            params: self.params.clone(),
            samples: records,
        };
        let writer = BufWriter::new(File::create(path.as_ref())?);
        serde_json::to_writer(writer, &file)?;
        Ok(())
    }

    /// Load a cache file.  Every sample is regenerated from its stored
    /// scenario seed (bit-identical to [`build_dataset`]) and the stored
    /// `beta_db` is verified against the regenerated fading as an integrity
    /// check.
    pub fn load_cache(path: impl AsRef<Path>) -> Result<Dataset> {
        let reader = BufReader::new(File::open(path.as_ref())?);
        let file: DatasetFile = serde_json::from_reader(reader)?;
        if file.version != DATASET_FILE_VERSION {
            return Err(Error::config(format!(
                "unsupported dataset cache version {} (expected {})",
                file.version, DATASET_FILE_VERSION
            )));
        }
        file.params.validate()?;
        if file.samples.is_empty() {
            return Err(Error::config("dataset cache contains no samples"));
        }
        let params = file.params;
        let samples = file
            .samples
            .into_par_iter()
            .enumerate()
            .map(|(i, rec)| {
                let scenario = generate_scenario(&params, rec.scenario_seed)?;
                verify_beta_db(i, &rec.beta_db, &scenario)?;
                sample_from_scenario(&params, &scenario)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            params,
            seed: file.seed,
            samples,
        })
    }
}

fn verify_beta_db(index: usize, stored_db: &[Vec<f64>], scenario: &Scenario) -> Result<()> {
    let (k_total, l_total) = scenario.beta.dim();
    if stored_db.len() != k_total || stored_db.iter().any(|row| row.len() != l_total) {
        return Err(Error::config(format!(
            "dataset cache sample {index}: beta_db shape mismatch (expected {k_total}x{l_total})"
        )));
    }
    for k in 0..k_total {
        for l in 0..l_total {
            let expected = scenario.beta[[k, l]];
            let stored = 10f64.powf(stored_db[k][l] / 10.0);
            if !stored.is_finite() || (stored - expected).abs() > CACHE_INTEGRITY_RTOL * expected {
                return Err(Error::config(format!(
                    "dataset cache sample {index}: beta_db[{k}][{l}] = {} dB does not match \
                     the regenerated fading",
                    stored_db[k][l]
                )));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Training configuration
// ---------------------------------------------------------------------------

/// Default initial learning rate per loss.
pub fn default_lr0(kind: LossKind) -> f64 {
    match kind {
        LossKind::MaxMin | LossKind::MaxMinPrior => 0.3,
        LossKind::SumRate => 1.0,
        LossKind::Product => 0.03,
    }
}

/// Minibatch-SGD schedule.  The learning rate is `lr0` for epochs before
/// `lr_drop_epoch` (1-based) and `lr0 * lr_drop_factor` from that epoch on.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default = "TrainConfig::serde_default", deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_drop_epoch: usize,
    pub lr_drop_factor: f64,
    /// Heavy-ball momentum; `0` (the default) is plain SGD.
    pub momentum: f64,
    /// Hidden-layer widths `(H1, H2)`.
    pub hidden: (usize, usize),
    /// When true, every training presentation of a sample applies a fresh
    /// seeded permutation of the users to the network's input and output
    /// (the loss still sees the physical channel).  The optimal policy is
    /// exchangeable in the users, so this teaches the symmetry instead of
    /// spending samples on it; the dataset itself is untouched and
    /// inference is unaffected.
    pub augment_permutations: bool,
    /// Train the model with canonicalized user order (see
    /// [`MlpModel::sort_inputs`]): exact permutation equivariance by
    /// construction.  The flag is baked into the checkpoint so inference
    /// applies the same canonicalization.  Mutually exclusive with
    /// `augment_permutations`, which it subsumes.
    pub sort_inputs: bool,
    pub seed: u64,
    pub loss: LossSpec,
}

impl TrainConfig {
    /// Reference defaults for the given loss at network size `num_ues`:
    /// 300 epochs, batches of 256, the per-loss learning rate from
    /// [`default_lr0`] dropped by 10x at epoch 150, hidden widths (128, 64).
    pub fn for_loss(kind: LossKind, num_ues: usize) -> Self {
        Self {
            epochs: 300,
            batch_size: 256,
            lr0: default_lr0(kind),
            lr_drop_epoch: 150,
            lr_drop_factor: 0.1,
            momentum: 0.0,
            hidden: (128, 64),
            augment_permutations: false,
            sort_inputs: false,
            seed: 0,
            loss: LossSpec::for_kind(kind, num_ues),
        }
    }

    fn serde_default() -> Self {
        Self::for_loss(LossKind::MaxMin, 0)
    }

    /// Learning rate of the given 1-based epoch.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if epoch < self.lr_drop_epoch {
            self.lr0
        } else {
            self.lr0 * self.lr_drop_factor
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.lr0.is_finite() && self.lr0 >= 0.0) {
            return Err(Error::config(format!(
                "lr0 must be finite and non-negative, got {}",
                self.lr0
            )));
        }
        if self.lr_drop_epoch == 0 {
            return Err(Error::config("lr_drop_epoch must be at least 1"));
        }
        if !(self.lr_drop_factor.is_finite() && self.lr_drop_factor >= 0.0) {
            return Err(Error::config(format!(
                "lr_drop_factor must be finite and non-negative, got {}",
                self.lr_drop_factor
            )));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(Error::config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.hidden.0 == 0 || self.hidden.1 == 0 {
            return Err(Error::config("hidden widths must be nonzero"));
        }
        if self.augment_permutations && self.sort_inputs {
            return Err(Error::config(
                "augment_permutations and sort_inputs are mutually exclusive \
                 (canonical ordering already enforces the permutation symmetry)",
            ));
        }
        self.loss.validate()
    }
}

// ---------------------------------------------------------------------------
// Learning curve
// ---------------------------------------------------------------------------

/// One completed epoch: its 1-based index, the epoch-mean training loss
/// (summed in dataset order, so independent of the shuffle), and the
/// learning rate used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
}

/// Epoch-mean training losses, one record per epoch in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub records: Vec<EpochRecord>,
}

impl LearningCurve {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Render as CSV with the `epoch,loss,lr` schema.  Floats are written
    /// with the shortest round-trip representation, so identical curves
    /// yield byte-identical files.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("epoch,loss,lr\n");
        for rec in &self.records {
            out.push_str(&format!("{},{},{}\n", rec.epoch, rec.mean_loss, rec.lr));
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = BufWriter::new(File::create(path.as_ref())?);
        writer.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }

    /// Mean loss over the epochs `[start, end)` (0-based positions).
    pub fn mean_loss_over(&self, start: usize, end: usize) -> f64 {
        let slice = &self.records[start..end.min(self.records.len())];
        slice.iter().map(|r| r.mean_loss).sum::<f64>() / slice.len() as f64
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Per-feature normalization statistics of `log10(B_k)` over the dataset.
/// With `rank_ordered` the features are taken in canonical (descending `B`)
/// order, matching a [`MlpModel::sort_inputs`] forward pass, so feature `i`
/// is the i-th order statistic.  The standard deviation is the population
/// one; an exactly constant feature falls back to a unit scale (it
/// normalizes to zero anyway).
fn norm_stats(ds: &Dataset, rank_ordered: bool) -> (Vec<f64>, Vec<f64>) {
    let k_total = ds.num_ues();
    let n = ds.num_samples() as f64;
    let features = |sample: &Sample| -> Vec<f64> {
        if rank_ordered {
            MlpModel::canonical_order(&sample.b)
                .iter()
                .map(|&u| sample.b[u].log10())
                .collect()
        } else {
            sample.b.iter().map(|b| b.log10()).collect()
        }
    };
    let mut mean = vec![0.0; k_total];
    for sample in &ds.samples {
        for (k, f) in features(sample).iter().enumerate() {
            mean[k] += f;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; k_total];
    for sample in &ds.samples {
        for (k, f) in features(sample).iter().enumerate() {
            let d = f - mean[k];
            var[k] += d * d;
        }
    }
    let std = var
        .iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

/// Forward/backward for one sample; returns the loss and accumulates the
/// parameter gradient into `grads`.
///
/// With `perm = Some(p)` the network sees the users relabeled by `p`
/// (input slot `i` holds user `p[i]`), while the SINR/loss are evaluated
/// on the physical channel.  The output and its gradient are mapped
/// through the same relabeling, so this is an exact forward/backward for
/// the permuted presentation.
fn sample_step(
    model: &MlpModel,
    spec: &LossSpec,
    sample: &Sample,
    perm: Option<&[usize]>,
    grads: &mut Gradients,
) -> Result<f64> {
    let Some(p) = perm else {
        let (eta, cache) = model.forward(&sample.b)?;
        let sinr_values = sinr(&sample.coeffs, &eta);
        let loss = loss_value(spec, &sinr_values)?;
        let dl_deta = loss_grad_wrt_eta(spec, &sample.coeffs, &eta)?;
        model.backward_accumulate(&cache, &dl_deta, grads)?;
        return Ok(loss);
    };
    let k_total = sample.b.len();
    let mut b_perm = vec![0.0; k_total];
    for (slot, &user) in p.iter().enumerate() {
        b_perm[slot] = sample.b[user];
    }
    let (eta_perm, cache) = model.forward(&b_perm)?;
    let mut eta_phys = vec![0.0; k_total];
    for (slot, &user) in p.iter().enumerate() {
        eta_phys[user] = eta_perm.as_slice()[slot];
    }
    let eta = PowerAllocation::new(eta_phys)?;
    let sinr_values = sinr(&sample.coeffs, &eta);
    let loss = loss_value(spec, &sinr_values)?;
    let dl_deta = loss_grad_wrt_eta(spec, &sample.coeffs, &eta)?;
    let mut dl_perm = vec![0.0; k_total];
    for (slot, &user) in p.iter().enumerate() {
        dl_perm[slot] = dl_deta[user];
    }
    model.backward_accumulate(&cache, &dl_perm, grads)?;
    Ok(loss)
}

/// Train with the configured schedule.  Equivalent to
/// [`train_with`] with a no-op epoch observer.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<(MlpModel, LearningCurve)> {
    train_with(ds, cfg, |_| {})
}

/// Train, invoking `on_epoch` after every completed epoch (the CLI uses
/// this to persist a partial curve when a later epoch diverges).
///
/// Bit-deterministic for fixed `(ds, cfg)`: initialization, the per-epoch
/// shuffle, and the chunked gradient reduction are all derived from
/// `cfg.seed` and reduced in a fixed order.
pub fn train_with(
    ds: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(MlpModel, LearningCurve)> {
    cfg.validate()?;
    let k_total = ds.num_ues();
    let n = ds.num_samples();
    if n == 0 {
        return Err(Error::config("cannot train on an empty dataset"));
    }
    if cfg.loss.num_ues() != k_total {
        return Err(Error::dimension(format!(
            "loss is sized for {} users but the dataset has {}",
            cfg.loss.num_ues(),
            k_total
        )));
    }
    if cfg.batch_size > n {
        return Err(Error::config(format!(
            "batch_size {} exceeds the dataset size {}",
            cfg.batch_size, n
        )));
    }
    for (i, sample) in ds.samples.iter().enumerate() {
        if sample.b.len() != k_total {
            return Err(Error::dimension(format!(
                "sample {i} has {} users, dataset params say {k_total}",
                sample.b.len()
            )));
        }
    }

    let mut model = init_mlp(
        (k_total, cfg.hidden.0, cfg.hidden.1, k_total),
        derive_seed(cfg.seed, "mlp-init"),
    )?;
    model.sort_inputs = cfg.sort_inputs;
    let (mean, std) = norm_stats(ds, cfg.sort_inputs);
    model.set_norm_stats(mean, std)?;

    let mut velocity = Gradients::zeros_like(&model);
    let mut curve = LearningCurve::default();
    let mut indices: Vec<usize> = (0..n).collect();
    // Per-sample losses of the current epoch, written at the sample's
    // dataset position so the epoch mean never depends on the shuffle.
    let mut epoch_losses = vec![0.0_f64; n];

    for epoch in 1..=cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        let mut rng = stream_rng(derive_seed_indexed(cfg.seed, "epoch-shuffle", epoch as u64), 0);
        indices.shuffle(&mut rng);
        // Seed root for this epoch's user permutations; each sample's
        // permutation depends only on (epoch, dataset index), so the
        // result is independent of batch and chunk order.
        let aug_epoch_seed = derive_seed_indexed(cfg.seed, "augment-epoch", epoch as u64);

        for (batch_idx, batch) in indices.chunks(cfg.batch_size).enumerate() {
            // Chunked map-reduce: chunks may run concurrently, the fold
            // below walks them in order, so the sum is bit-deterministic.
            let chunk_results: Vec<(Gradients, Vec<(usize, f64)>)> = batch
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut grads = Gradients::zeros_like(&model);
                    let mut losses = Vec::with_capacity(chunk.len());
                    for &i in chunk {
                        let perm = cfg.augment_permutations.then(|| {
                            let mut p: Vec<usize> = (0..k_total).collect();
                            let seed = derive_seed_indexed(aug_epoch_seed, "perm", i as u64);
                            p.shuffle(&mut stream_rng(seed, 0));
                            p
                        });
                        let loss =
                            sample_step(&model, &cfg.loss, &ds.samples[i], perm.as_deref(), &mut grads)?;
                        if !loss.is_finite() {
                            return Err(Error::numerical(format!(
                                "non-finite loss {loss} on sample {i}"
                            )));
                        }
                        losses.push((i, loss));
                    }
                    Ok((grads, losses))
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| {
                    Error::numerical(format!(
                        "training aborted at epoch {epoch}, batch {batch_idx}: {e}"
                    ))
                })?;

            let mut batch_grads = Gradients::zeros_like(&model);
            for (grads, losses) in chunk_results {
                batch_grads.add_assign(&grads);
                for (i, loss) in losses {
                    epoch_losses[i] = loss;
                }
            }
            batch_grads.scale(1.0 / batch.len() as f64);

            velocity.scale(cfg.momentum);
            velocity.add_assign(&batch_grads);
            model = sgd_step(&model, &velocity, lr).map_err(|e| {
                Error::numerical(format!(
                    "training aborted at epoch {epoch}, batch {batch_idx}: {e}"
                ))
            })?;
        }

        let mean_loss = epoch_losses.iter().sum::<f64>() / n as f64;
        if !mean_loss.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite epoch-mean loss {mean_loss} at epoch {epoch}"
            )));
        }
        let record = EpochRecord {
            epoch,
            mean_loss,
            lr,
        };
        on_epoch(&record);
        curve.records.push(record);
    }

    Ok((model, curve))
}

/// Pure inference: aggregated fading in, power allocation out.
pub fn infer(model: &MlpModel, aggregated_lsf: &[f64]) -> Result<PowerAllocation> {
    Ok(model.forward(aggregated_lsf)?.0)
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Version tag of the checkpoint format.
pub const CHECKPOINT_FILE_VERSION: u32 = 1;

/// Serialized checkpoint: dims, normalization statistics, row-major
/// flattened weights per layer (layer 0 = input-to-H1, 1 = H1-to-H2,
/// 2 = H2-to-output; each row holds one output neuron's input weights),
/// biases, the loss it was trained with, and the training seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub dims: (usize, usize, usize, usize),
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
    /// Input canonicalization flag; see [`MlpModel::sort_inputs`].
    #[serde(default)]
    pub sort_inputs: bool,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub loss: LossSpec,
    pub train_seed: u64,
}

impl Checkpoint {
    pub fn from_model(model: &MlpModel, loss: &LossSpec, train_seed: u64) -> Self {
        Self {
            version: CHECKPOINT_FILE_VERSION,
            dims: model.dims,
            norm_mean: model.norm_mean.clone(),
            norm_std: model.norm_std.clone(),
            sort_inputs: model.sort_inputs,
            weights: model
                .weights
                .iter()
                .map(|w| w.iter().copied().collect())
                .collect(),
            biases: model
                .biases
                .iter()
                .map(|b| b.to_vec())
                .collect(),
            loss: loss.clone(),
            train_seed,
        }
    }

    /// Rebuild the model; validates the version, layer count, and shapes.
    pub fn into_model(self) -> Result<(MlpModel, LossSpec, u64)> {
        if self.version != CHECKPOINT_FILE_VERSION {
            return Err(Error::config(format!(
                "unsupported checkpoint version {} (expected {})",
                self.version, CHECKPOINT_FILE_VERSION
            )));
        }
        let (k_in, h1, h2, k_out) = self.dims;
        let shapes = [(h1, k_in), (h2, h1), (k_out, h2)];
        if self.weights.len() != 3 || self.biases.len() != 3 {
            return Err(Error::config(
                "checkpoint must contain exactly three weight and bias layers",
            ));
        }
        let mut weights = Vec::with_capacity(3);
        let mut biases = Vec::with_capacity(3);
        for (layer, &(rows, cols)) in shapes.iter().enumerate() {
            if self.weights[layer].len() != rows * cols {
                return Err(Error::config(format!(
                    "checkpoint layer {layer}: expected {rows}x{cols} weights, got {}",
                    self.weights[layer].len()
                )));
            }
            if self.biases[layer].len() != rows {
                return Err(Error::config(format!(
                    "checkpoint layer {layer}: expected {rows} biases, got {}",
                    self.biases[layer].len()
                )));
            }
            weights.push(
                Array2::from_shape_vec((rows, cols), self.weights[layer].clone())
                    .map_err(|e| Error::config(format!("checkpoint layer {layer}: {e}")))?,
            );
            biases.push(Array1::from_vec(self.biases[layer].clone()));
        }
        let mut model = MlpModel {
            dims: self.dims,
            weights: weights.try_into().expect("three layers"),
            biases: biases.try_into().expect("three layers"),
            norm_mean: vec![0.0; k_in],
            norm_std: vec![1.0; k_in],
            sort_inputs: self.sort_inputs,
            revision: 0,
        };
        model.set_norm_stats(self.norm_mean, self.norm_std)?;
        self.loss.validate()?;
        Ok((model, self.loss, self.train_seed))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let writer = BufWriter::new(File::create(path.as_ref())?);
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let reader = BufReader::new(File::open(path.as_ref())?);
        Ok(serde_json::from_reader(reader)?)
    }
}

/// Convenience wrapper: serialize the model straight to a checkpoint file.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &MlpModel,
    loss: &LossSpec,
    train_seed: u64,
) -> Result<()> {
    Checkpoint::from_model(model, loss, train_seed).save(path)
}

/// Load a checkpoint file and rebuild the model.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(MlpModel, LossSpec, u64)> {
    Checkpoint::load(path)?.into_model()
}
