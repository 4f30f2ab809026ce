//! Two-hidden-layer ReLU network with sigmoid outputs and the four
//! SINR-embedded unsupervised losses, all with hand-written gradients.
//!
//! The network maps standardized `log10(B_k)` features (one per UE) to
//! power coefficients `eta in (0,1)^K`, so its outputs can never violate
//! the box constraint. Training minimizes one of four losses built from
//! the closed-form SINR:
//!
//! - `maxmin`:       `sum_k sigmoid(q / SINR_k) - alpha * min_k SINR_k`
//! - `maxmin_prior`: `-alpha * min_k SINR_k` (the prior-work loss)
//! - `sum_rate`:     `-sum_k (1/mu_k) * log2(1 + SINR_k)`
//! - `product`:      `-sum_k gamma_k * log2(max(log2(1 + SINR_k), clamp_eps))`
//!
//! There is no autodiff: [`backward`](MlpModel::backward) implements the
//! reverse pass explicitly, and [`loss_grad_wrt_eta`] chains the loss
//! derivative through the exact SINR Jacobian. Models are immutable values
//! between steps; [`sgd_step`] returns an updated copy and bumps a revision
//! counter that forward caches carry, so a backward pass against a stale
//! cache fails loudly instead of silently mixing models.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{sinr, sinr_jacobian, PowerAllocation, SinrCoefficients};
use crate::rng::stream_rng;

/// Which unsupervised loss to train with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "maxmin")]
    MaxMin,
    #[serde(rename = "maxmin_prior")]
    MaxMinPrior,
    #[serde(rename = "sum_rate")]
    SumRate,
    #[serde(rename = "product")]
    Product,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::MaxMin,
        LossKind::MaxMinPrior,
        LossKind::SumRate,
        LossKind::Product,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::MaxMin => "maxmin",
            LossKind::MaxMinPrior => "maxmin_prior",
            LossKind::SumRate => "sum_rate",
            LossKind::Product => "product",
        }
    }
}

/// Fully specified loss: kind plus its hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Weight of the min-SINR term in the max-min losses.
    pub alpha: f64,
    /// Per-user sum-rate weights `mu_k` (the loss divides by them).
    pub mu: Vec<f64>,
    /// Per-user product-loss weights `gamma_k`.
    pub gamma_w: Vec<f64>,
    /// Floor on `log2(1+SINR)` inside the product loss; keeps the outer log
    /// finite near zero SINR (reachable at initialization).
    pub clamp_eps: f64,
    /// Numerator `q` of the max-min sigmoid term `sigmoid(q / SINR_k)`.
    pub sigmoid_coeff: f64,
}

impl LossSpec {
    /// Reference defaults for `K` users: `alpha = 1`, `mu_k = 5`,
    /// `gamma_k = 1`, `clamp_eps = 1e-9`, sigmoid numerator `0.3`.
    pub fn for_kind(kind: LossKind, num_ues: usize) -> Self {
        Self {
            kind,
            alpha: 1.0,
            mu: vec![5.0; num_ues],
            gamma_w: vec![1.0; num_ues],
            clamp_eps: 1e-9,
            sigmoid_coeff: 0.3,
        }
    }

    pub fn num_ues(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::config("alpha must be finite and >= 0".to_string()));
        }
        if self.mu.len() != self.gamma_w.len() {
            return Err(Error::dimension(
                "mu and gamma_w must have the same length K".to_string(),
            ));
        }
        if self.mu.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::config("all mu_k must be positive".to_string()));
        }
        if self.gamma_w.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::config("all gamma_k must be positive".to_string()));
        }
        if !(self.clamp_eps.is_finite() && self.clamp_eps > 0.0) {
            return Err(Error::config("clamp_eps must be positive".to_string()));
        }
        if !(self.sigmoid_coeff.is_finite() && self.sigmoid_coeff > 0.0) {
            return Err(Error::config("sigmoid_coeff must be positive".to_string()));
        }
        Ok(())
    }
}

/// Numerically stable logistic function; `sigmoid(+inf) = 1`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_sinr_input(spec: &LossSpec, sinr_values: &[f64]) -> Result<()> {
    spec.validate()?;
    if sinr_values.len() != spec.num_ues() {
        return Err(Error::dimension(format!(
            "loss spec is for K={} but got {} SINR values",
            spec.num_ues(),
            sinr_values.len()
        )));
    }
    if sinr_values.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::numerical(
            "SINR values must be finite and non-negative".to_string(),
        ));
    }
    Ok(())
}

/// Index of the smallest SINR; earliest index wins ties.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Loss value at a SINR vector.
pub fn loss_value(spec: &LossSpec, sinr_values: &[f64]) -> Result<f64> {
    check_sinr_input(spec, sinr_values)?;
    let min_sinr = sinr_values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(match spec.kind {
        LossKind::MaxMin => {
            // SINR = 0 sends the sigmoid argument to +inf, sigmoid -> 1.
            let sig_sum: f64 = sinr_values
                .iter()
                .map(|s| sigmoid(spec.sigmoid_coeff / s))
                .sum();
            sig_sum - spec.alpha * min_sinr
        }
        LossKind::MaxMinPrior => -spec.alpha * min_sinr,
        LossKind::SumRate => -sinr_values
            .iter()
            .zip(spec.mu.iter())
            .map(|(s, mu)| crate::metrics::log2_1p(*s) / mu)
            .sum::<f64>(),
        LossKind::Product => -sinr_values
            .iter()
            .zip(spec.gamma_w.iter())
            .map(|(s, g)| g * crate::metrics::log2_1p(*s).max(spec.clamp_eps).log2())
            .sum::<f64>(),
    })
}

/// Derivative of the loss with respect to each SINR value.
///
/// The non-smooth min term routes its subgradient through the argmin user
/// only (smallest index on ties); users inside the product loss's clamp
/// region contribute exactly zero.
pub fn loss_grad_wrt_sinr(spec: &LossSpec, sinr_values: &[f64]) -> Result<Vec<f64>> {
    check_sinr_input(spec, sinr_values)?;
    let k_total = sinr_values.len();
    let mut grad = vec![0.0; k_total];
    match spec.kind {
        LossKind::MaxMin => {
            for (k, &s) in sinr_values.iter().enumerate() {
                let arg = spec.sigmoid_coeff / s;
                let sig = sigmoid(arg);
                let sig_prime = sig * (1.0 - sig);
                // At SINR -> 0 the sigmoid saturates: sig_prime underflows to
                // 0 while -q/s^2 overflows, so guard before multiplying (the
                // true limit of the product is 0, not NaN).
                grad[k] = if sig_prime == 0.0 {
                    0.0
                } else {
                    sig_prime * (-spec.sigmoid_coeff / (s * s))
                };
            }
            grad[argmin(sinr_values)] -= spec.alpha;
        }
        LossKind::MaxMinPrior => {
            grad[argmin(sinr_values)] = -spec.alpha;
        }
        LossKind::SumRate => {
            for (k, &s) in sinr_values.iter().enumerate() {
                grad[k] = -1.0 / (spec.mu[k] * (1.0 + s) * std::f64::consts::LN_2);
            }
        }
        LossKind::Product => {
            for (k, &s) in sinr_values.iter().enumerate() {
                let rate = crate::metrics::log2_1p(s);
                grad[k] = if rate > spec.clamp_eps {
                    -spec.gamma_w[k]
                        / (rate * (1.0 + s) * std::f64::consts::LN_2 * std::f64::consts::LN_2)
                } else {
                    0.0
                };
            }
        }
    }
    Ok(grad)
}

/// Chain rule through the SINR Jacobian:
/// `g_j = sum_k (dLoss/dSINR_k) * J_kj`.
pub fn loss_grad_wrt_eta(
    spec: &LossSpec,
    c: &SinrCoefficients,
    p: &PowerAllocation,
) -> Result<Vec<f64>> {
    let sinr_values = sinr(c, p);
    let dl_ds = loss_grad_wrt_sinr(spec, &sinr_values)?;
    let jac = sinr_jacobian(c, p);
    let k_total = dl_ds.len();
    Ok((0..k_total)
        .map(|j| (0..k_total).map(|k| dl_ds[k] * jac[[k, j]]).sum())
        .collect())
}

/// The power-controller network: `K -> H1 -> H2 -> K` with ReLU hidden
/// layers and a sigmoid output layer. Weight matrices are `(out, in)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpModel {
    pub dims: (usize, usize, usize, usize),
    pub weights: [Array2<f64>; 3],
    pub biases: [Array1<f64>; 3],
    /// Per-feature mean of `log10(B_k)` over the training set.
    pub norm_mean: Vec<f64>,
    /// Per-feature standard deviation of `log10(B_k)`; strictly positive.
    pub norm_std: Vec<f64>,
    /// When true, the forward pass canonicalizes the user order: inputs are
    /// sorted by `B_k` descending before the network and the outputs are
    /// mapped back.  The power-control task is exchangeable in the users, so
    /// this makes the model exactly permutation-equivariant by construction
    /// instead of asking the weights to learn the symmetry.  The
    /// normalization statistics are then per *rank* (largest `B` first).
    #[serde(default)]
    pub sort_inputs: bool,
    /// Incremented by every [`sgd_step`]; forward caches record it so that
    /// backward passes against an outdated model are rejected.
    pub revision: u64,
}

/// Pre-activations and activations saved by [`MlpModel::forward`] for the
/// backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    revision: u64,
    x: Array1<f64>,
    z1: Array1<f64>,
    h1: Array1<f64>,
    z2: Array1<f64>,
    h2: Array1<f64>,
    eta: Array1<f64>,
    /// Canonicalization used by this pass (`slot -> user`), if any; the
    /// backward pass maps `dLoss/deta` through it.
    perm: Option<Vec<usize>>,
}

/// Parameter gradients, with exactly the shapes of the model's weights and
/// biases.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub dw: [Array2<f64>; 3],
    pub db: [Array1<f64>; 3],
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            dw: [
                Array2::zeros(model.weights[0].dim()),
                Array2::zeros(model.weights[1].dim()),
                Array2::zeros(model.weights[2].dim()),
            ],
            db: [
                Array1::zeros(model.biases[0].len()),
                Array1::zeros(model.biases[1].len()),
                Array1::zeros(model.biases[2].len()),
            ],
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for i in 0..3 {
            self.dw[i] += &other.dw[i];
            self.db[i] += &other.db[i];
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for i in 0..3 {
            self.dw[i] *= factor;
            self.db[i] *= factor;
        }
    }
}

fn validate_dims(dims: (usize, usize, usize, usize)) -> Result<()> {
    let (k_in, h1, h2, k_out) = dims;
    if k_in == 0 || h1 == 0 || h2 == 0 || k_out == 0 {
        return Err(Error::config(format!("zero-width layer in dims {dims:?}")));
    }
    if k_in != k_out {
        return Err(Error::config(format!(
            "input and output widths must both equal K, got {k_in} and {k_out}"
        )));
    }
    Ok(())
}

/// Initialize a model: hidden weights uniform with the ReLU fan-in gain
/// (bound `sqrt(6/fan_in)`), output weights uniform with the symmetric
/// sigmoid gain (bound `sqrt(6/(fan_in+fan_out))`), biases zero,
/// normalization statistics the identity. Deterministic per seed.
pub fn init_mlp(dims: (usize, usize, usize, usize), seed: u64) -> Result<MlpModel> {
    use rand::Rng;
    validate_dims(dims)?;
    let (k_in, h1, h2, k_out) = dims;
    let shapes = [(h1, k_in), (h2, h1), (k_out, h2)];
    let mut rng = stream_rng(seed, 0);
    let mut weights = Vec::with_capacity(3);
    for (layer, &(rows, cols)) in shapes.iter().enumerate() {
        let bound = if layer < 2 {
            (6.0 / cols as f64).sqrt()
        } else {
            (6.0 / (rows + cols) as f64).sqrt()
        };
        weights.push(Array2::from_shape_fn((rows, cols), |_| {
            rng.random_range(-bound..bound)
        }));
    }
    let weights: [Array2<f64>; 3] = weights.try_into().expect("three layers");
    Ok(MlpModel {
        dims,
        weights,
        biases: [Array1::zeros(h1), Array1::zeros(h2), Array1::zeros(k_out)],
        norm_mean: vec![0.0; k_in],
        norm_std: vec![1.0; k_in],
        sort_inputs: false,
        revision: 0,
    })
}

impl MlpModel {
    /// All-zero-weight model (test hook): forward yields `sigmoid(0) = 0.5`
    /// for every user regardless of the input.
    pub fn zeroed(dims: (usize, usize, usize, usize)) -> Result<Self> {
        let (k_in, h1, h2, k_out) = dims;
        validate_dims(dims)?;
        Ok(MlpModel {
            dims,
            weights: [
                Array2::zeros((h1, k_in)),
                Array2::zeros((h2, h1)),
                Array2::zeros((k_out, h2)),
            ],
            biases: [Array1::zeros(h1), Array1::zeros(h2), Array1::zeros(k_out)],
            norm_mean: vec![0.0; k_in],
            norm_std: vec![1.0; k_in],
            sort_inputs: false,
            revision: 0,
        })
    }

    /// Total number of trainable parameters (weights plus biases).
    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Freeze input-normalization statistics (computed over a training set).
    pub fn set_norm_stats(&mut self, mean: Vec<f64>, std: Vec<f64>) -> Result<()> {
        if mean.len() != self.dims.0 || std.len() != self.dims.0 {
            return Err(Error::dimension(format!(
                "normalization statistics must have length K = {}",
                self.dims.0
            )));
        }
        if std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::numerical(
                "normalization std must be strictly positive".to_string(),
            ));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::numerical(
                "normalization mean must be finite".to_string(),
            ));
        }
        self.norm_mean = mean;
        self.norm_std = std;
        Ok(())
    }

    /// Standardized input features `(log10(B_k) - mean_k) / std_k`.
    pub fn normalized_features(&self, aggregated_lsf: &[f64]) -> Result<Array1<f64>> {
        if aggregated_lsf.len() != self.dims.0 {
            return Err(Error::dimension(format!(
                "expected {} aggregated LSF values, got {}",
                self.dims.0,
                aggregated_lsf.len()
            )));
        }
        if aggregated_lsf.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::numerical(
                "aggregated LSF inputs must be finite and positive".to_string(),
            ));
        }
        Ok(Array1::from_iter(aggregated_lsf.iter().enumerate().map(
            |(k, b)| (b.log10() - self.norm_mean[k]) / self.norm_std[k],
        )))
    }

    /// Canonical user order for [`sort_inputs`](Self::sort_inputs): slots
    /// hold users by descending `B_k`, ties broken by user index.
    pub fn canonical_order(aggregated_lsf: &[f64]) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..aggregated_lsf.len()).collect();
        perm.sort_by(|&i, &j| {
            aggregated_lsf[j]
                .total_cmp(&aggregated_lsf[i])
                .then(i.cmp(&j))
        });
        perm
    }

    /// Forward pass: features -> ReLU -> ReLU -> sigmoid. Returns the power
    /// allocation (always in physical user order) and the cache the backward
    /// pass needs.
    pub fn forward(&self, aggregated_lsf: &[f64]) -> Result<(PowerAllocation, ForwardCache)> {
        let (perm, x) = if self.sort_inputs {
            let perm = Self::canonical_order(aggregated_lsf);
            let sorted: Vec<f64> = perm.iter().map(|&u| aggregated_lsf[u]).collect();
            (Some(perm), self.normalized_features(&sorted)?)
        } else {
            (None, self.normalized_features(aggregated_lsf)?)
        };
        let z1 = self.weights[0].dot(&x) + &self.biases[0];
        let h1 = z1.mapv(|v| v.max(0.0));
        let z2 = self.weights[1].dot(&h1) + &self.biases[1];
        let h2 = z2.mapv(|v| v.max(0.0));
        let z3 = self.weights[2].dot(&h2) + &self.biases[2];
        let eta = z3.mapv(sigmoid);
        let allocation = match &perm {
            None => PowerAllocation::new(eta.to_vec())?,
            Some(p) => {
                let mut phys = vec![0.0; eta.len()];
                for (slot, &user) in p.iter().enumerate() {
                    phys[user] = eta[slot];
                }
                PowerAllocation::new(phys)?
            }
        };
        Ok((
            allocation,
            ForwardCache { revision: self.revision, x, z1, h1, z2, h2, eta, perm },
        ))
    }

    /// Reverse pass from `dLoss/deta` to parameter gradients.
    ///
    /// Errors if the cache was produced by a different model revision.
    pub fn backward(&self, cache: &ForwardCache, dloss_deta: &[f64]) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        self.backward_accumulate(cache, dloss_deta, &mut grads)?;
        Ok(grads)
    }

    /// [`backward`](Self::backward) variant adding into an existing buffer;
    /// the batch loop uses it to avoid reallocating per sample.
    pub fn backward_accumulate(
        &self,
        cache: &ForwardCache,
        dloss_deta: &[f64],
        grads: &mut Gradients,
    ) -> Result<()> {
        if cache.revision != self.revision {
            return Err(Error::config(format!(
                "stale forward cache: model revision {} but cache revision {}",
                self.revision, cache.revision
            )));
        }
        if dloss_deta.len() != self.dims.3 {
            return Err(Error::dimension(format!(
                "dloss_deta has length {} but the model outputs {}",
                dloss_deta.len(),
                self.dims.3
            )));
        }
        // `dloss_deta` arrives in physical user order; a canonicalizing
        // forward pass computed slot `s` for user `perm[s]`.
        let slot_grad: Vec<f64> = match &cache.perm {
            None => dloss_deta.to_vec(),
            Some(p) => p.iter().map(|&user| dloss_deta[user]).collect(),
        };
        // Output layer: sigmoid derivative eta*(1-eta).
        let dz3 = Array1::from_iter(
            slot_grad
                .iter()
                .zip(cache.eta.iter())
                .map(|(d, e)| d * e * (1.0 - e)),
        );
        accumulate_layer(&mut grads.dw[2], &mut grads.db[2], &dz3, &cache.h2);
        let dh2 = self.weights[2].t().dot(&dz3);
        // Hidden layers: ReLU mask (zero gradient at and below 0).
        let dz2 = Array1::from_iter(
            dh2.iter()
                .zip(cache.z2.iter())
                .map(|(d, z)| if *z > 0.0 { *d } else { 0.0 }),
        );
        accumulate_layer(&mut grads.dw[1], &mut grads.db[1], &dz2, &cache.h1);
        let dh1 = self.weights[1].t().dot(&dz2);
        let dz1 = Array1::from_iter(
            dh1.iter()
                .zip(cache.z1.iter())
                .map(|(d, z)| if *z > 0.0 { *d } else { 0.0 }),
        );
        accumulate_layer(&mut grads.dw[0], &mut grads.db[0], &dz1, &cache.x);
        Ok(())
    }
}

/// Add the outer product `dz * h_prev^T` into `dw` and `dz` into `db`.
fn accumulate_layer(
    dw: &mut Array2<f64>,
    db: &mut Array1<f64>,
    dz: &Array1<f64>,
    h_prev: &Array1<f64>,
) {
    for (i, dzi) in dz.iter().enumerate() {
        if *dzi == 0.0 {
            continue;
        }
        let mut row = dw.row_mut(i);
        for (j, h) in h_prev.iter().enumerate() {
            row[j] += dzi * h;
        }
        db[i] += dzi;
    }
}

/// Plain SGD update `params <- params - lr * grads`, returning a new model
/// with the revision bumped. `lr = 0` is allowed and leaves the parameters
/// unchanged (still a new revision).
pub fn sgd_step(model: &MlpModel, grads: &Gradients, lr: f64) -> Result<MlpModel> {
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Error::config(format!(
            "learning rate must be finite and non-negative, got {lr}"
        )));
    }
    for layer in 0..3 {
        if grads.dw[layer].dim() != model.weights[layer].dim()
            || grads.db[layer].len() != model.biases[layer].len()
        {
            return Err(Error::dimension(format!(
                "gradient shapes do not match model layer {layer}"
            )));
        }
        if grads.dw[layer].iter().any(|g| !g.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite weight gradient in layer {layer}"
            )));
        }
        if grads.db[layer].iter().any(|g| !g.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite bias gradient in layer {layer}"
            )));
        }
    }
    let mut next = model.clone();
    for layer in 0..3 {
        next.weights[layer] = &model.weights[layer] - &(lr * &grads.dw[layer]);
        next.biases[layer] = &model.biases[layer] - &(lr * &grads.db[layer]);
    }
    next.revision = model.revision + 1;
    Ok(next)
}
