//! Closed-form SINR/SE as a rational function of the power vector.
//!
//! For a fixed realization the uplink SINR of UE `k` is
//!
//! ```text
//!                        rho * eta_k * a_k
//! SINR_k = -----------------------------------------------------------
//!          rho * sum_{k'!=k} eta_k' d_kk' + rho * sum_{k'} eta_k' u_kk' + n_k
//! ```
//!
//! with coefficients `a`, `d`, `u`, `n` precomputed from the channel
//! statistics by [`sinr_coefficients`]. Everything downstream — the
//! classical solvers, the loss gradients, the evaluation reports — works
//! on this rational form, so this module also provides the exact analytic
//! Jacobian [`sinr_jacobian`] of the SINR vector with respect to the
//! power coefficients.
//!
//! Conventions worth calling out (they are easy to get wrong):
//! - the second denominator sum **includes** the self term `u_kk`;
//! - the `d` matrix stores its diagonal but the SINR sum skips it;
//! - `beta` stays in linear scale here, dB conversions happen only at I/O.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{ChannelStats, Scenario};

/// Per-realization constants that make SINR a rational function of the
/// power vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SinrCoefficients {
    /// Coherent gain, `a_k = (sum_l gamma_kl)^2`.
    pub a: Vec<f64>,
    /// Coherent (pilot-contamination) interference,
    /// `d_kk' = (sum_l gamma_kl * beta_k'l / beta_kl)^2 * xcorr_kk'`.
    /// The diagonal is stored but excluded from the SINR sum.
    pub d: Array2<f64>,
    /// Non-coherent interference, `u_kk' = sum_l gamma_kl * beta_k'l`
    /// (the self term `u_kk` participates in the denominator).
    pub u: Array2<f64>,
    /// Noise term, `n_k = sum_l gamma_kl`.
    pub n: Vec<f64>,
    /// Normalized uplink SNR.
    pub rho: f64,
}

impl SinrCoefficients {
    pub fn num_ues(&self) -> usize {
        self.a.len()
    }

    /// Check the structural invariants: positive finite `a`, `u`, `n`,
    /// finite non-negative `d` (exact zeros are expected off-diagonal under
    /// orthogonal pilots), and the construction identity `a_k = n_k^2`.
    pub fn validate(&self) -> Result<()> {
        let k = self.a.len();
        if self.n.len() != k || self.d.dim() != (k, k) || self.u.dim() != (k, k) {
            return Err(Error::dimension(format!(
                "inconsistent coefficient dimensions for K={k}"
            )));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::numerical("rho must be positive and finite".to_string()));
        }
        for (name, v) in [("a", &self.a), ("n", &self.n)] {
            if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::numerical(format!(
                    "coefficient vector {name} must be strictly positive and finite"
                )));
            }
        }
        if self.u.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::numerical(
                "coefficient matrix u must be strictly positive and finite".to_string(),
            ));
        }
        if self.d.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::numerical(
                "coefficient matrix d must be non-negative and finite".to_string(),
            ));
        }
        for ki in 0..k {
            let diff = (self.a[ki] - self.n[ki] * self.n[ki]).abs();
            if diff > 1e-9 * self.a[ki] {
                return Err(Error::numerical(format!(
                    "identity a_k = n_k^2 violated at k={ki}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-user uplink power coefficients, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerAllocation(Vec<f64>);

impl PowerAllocation {
    /// Wrap a power vector, rejecting entries outside `[0, 1]` or non-finite.
    pub fn new(eta: Vec<f64>) -> Result<Self> {
        for (k, &e) in eta.iter().enumerate() {
            if !(e.is_finite() && (0.0..=1.0).contains(&e)) {
                return Err(Error::config(format!(
                    "power coefficient eta[{k}] = {e} outside [0, 1]"
                )));
            }
        }
        Ok(Self(eta))
    }

    /// Same value for every UE (e.g. full power `1.0`).
    pub fn uniform(num_ues: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; num_ues])
    }

    /// Clamp each entry into `[0, 1]`; used to project solver iterates.
    pub fn clamped(eta: Vec<f64>) -> Self {
        Self(eta.into_iter().map(|e| e.clamp(0.0, 1.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for PowerAllocation {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

/// Coefficients from the matched channel statistics and scenario.
pub fn sinr_coefficients(
    stats: &ChannelStats,
    scenario: &Scenario,
    rho: f64,
) -> Result<SinrCoefficients> {
    sinr_coefficients_from(&stats.gamma, &scenario.beta, &scenario.pilot_xcorr, rho)
}

/// Coefficients straight from the `gamma`/`beta`/pilot-correlation matrices;
/// used when rebuilding from cached fading data without positions.
pub fn sinr_coefficients_from(
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    pilot_xcorr: &Array2<f64>,
    rho: f64,
) -> Result<SinrCoefficients> {
    let (k, l) = beta.dim();
    if gamma.dim() != (k, l) {
        return Err(Error::dimension(format!(
            "gamma is {:?} but beta is {:?}",
            gamma.dim(),
            beta.dim()
        )));
    }
    if pilot_xcorr.dim() != (k, k) {
        return Err(Error::dimension(format!(
            "pilot_xcorr is {:?} but K = {k}",
            pilot_xcorr.dim()
        )));
    }
    let mut a = vec![0.0; k];
    let mut n = vec![0.0; k];
    let mut d = Array2::zeros((k, k));
    let mut u = Array2::zeros((k, k));
    for ki in 0..k {
        let mut gsum = 0.0;
        for li in 0..l {
            gsum += gamma[[ki, li]];
        }
        n[ki] = gsum;
        a[ki] = gsum * gsum;
        for kp in 0..k {
            let mut ratio_sum = 0.0;
            let mut u_sum = 0.0;
            for li in 0..l {
                let g = gamma[[ki, li]];
                let b_other = beta[[kp, li]];
                ratio_sum += g * b_other / beta[[ki, li]];
                u_sum += g * b_other;
            }
            d[[ki, kp]] = ratio_sum * ratio_sum * pilot_xcorr[[ki, kp]];
            u[[ki, kp]] = u_sum;
        }
    }
    let coeffs = SinrCoefficients { a, d, u, n, rho };
    coeffs.validate()?;
    Ok(coeffs)
}

/// Denominator `D_k` of the SINR rational form at a given power vector;
/// shared with the solvers' interference-function fixed point.
pub(crate) fn sinr_denominator(c: &SinrCoefficients, eta: &[f64], k: usize) -> f64 {
    let mut interference = 0.0;
    for kp in 0..eta.len() {
        if kp != k {
            interference += eta[kp] * c.d[[k, kp]];
        }
        interference += eta[kp] * c.u[[k, kp]];
    }
    c.rho * interference + c.n[k]
}

/// Closed-form SINR of every UE at power vector `p`.
pub fn sinr(c: &SinrCoefficients, p: &PowerAllocation) -> Vec<f64> {
    let eta = p.as_slice();
    debug_assert_eq!(eta.len(), c.num_ues());
    (0..eta.len())
        .map(|k| c.rho * eta[k] * c.a[k] / sinr_denominator(c, eta, k))
        .collect()
}

/// `log2(1 + s)` computed through `ln_1p`, keeping full relative precision
/// for tiny SINR (plain `(1.0 + s).log2()` loses the low bits of `s`, which
/// ruins finite-difference checks and near-zero-rate terms).
pub fn log2_1p(s: f64) -> f64 {
    s.ln_1p() / std::f64::consts::LN_2
}

/// Spectral efficiency `SE_k = (1 - tau_p/tau_c) * log2(1 + SINR_k)`,
/// bit/s/Hz. Errors if the prefactor would leave `(0, 1)`.
pub fn se(sinr_values: &[f64], tau_p: usize, tau_c: usize) -> Result<Vec<f64>> {
    if tau_c <= tau_p {
        return Err(Error::config(format!(
            "tau_c ({tau_c}) must exceed tau_p ({tau_p}) for a positive SE prefactor"
        )));
    }
    let prefactor = 1.0 - tau_p as f64 / tau_c as f64;
    Ok(sinr_values.iter().map(|s| prefactor * log2_1p(*s)).collect())
}

/// Exact Jacobian `J_kj = dSINR_k / deta_j`.
///
/// With `D_k` the denominator: `J_kk = rho*a_k/D_k - SINR_k*rho*u_kk/D_k`
/// (the `d` diagonal never enters) and `J_kj = -SINR_k*rho*(d_kj+u_kj)/D_k`
/// for `j != k`. Ups one user's power, own SINR rises, everyone else's
/// falls: `J_kk > 0`, `J_kj <= 0`.
pub fn sinr_jacobian(c: &SinrCoefficients, p: &PowerAllocation) -> Array2<f64> {
    let eta = p.as_slice();
    let k_total = eta.len();
    debug_assert_eq!(k_total, c.num_ues());
    let mut jac = Array2::zeros((k_total, k_total));
    for k in 0..k_total {
        let dk = sinr_denominator(c, eta, k);
        let sinr_k = c.rho * eta[k] * c.a[k] / dk;
        for j in 0..k_total {
            jac[[k, j]] = if j == k {
                (c.rho * c.a[k] - sinr_k * c.rho * c.u[[k, k]]) / dk
            } else {
                -sinr_k * c.rho * (c.d[[k, j]] + c.u[[k, j]]) / dk
            };
        }
    }
    jac
}

/// Aggregated large-scale fading coefficient `B_k = sum_l beta_kl`, the
/// neural controller's raw input feature.
pub fn aggregate_lsf(beta: &Array2<f64>) -> Vec<f64> {
    beta.rows().into_iter().map(|row| row.sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SystemParams;
    use crate::scenario::{channel_stats, generate_scenario};
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn scalar_coeffs() -> SinrCoefficients {
        SinrCoefficients {
            a: vec![1.0],
            d: Array2::zeros((1, 1)),
            u: Array2::from_elem((1, 1), 1.0),
            n: vec![1.0],
            rho: 1.0,
        }
    }

    /// Independently coded triple-sum SINR straight from the raw matrices;
    /// oracle for the coefficient-based fast path.
    fn naive_sinr(
        beta: &Array2<f64>,
        gamma: &Array2<f64>,
        xcorr: &Array2<f64>,
        rho: f64,
        eta: &[f64],
    ) -> Vec<f64> {
        let (k_total, l_total) = beta.dim();
        let mut out = Vec::with_capacity(k_total);
        for k in 0..k_total {
            let mut gsum = 0.0;
            for l in 0..l_total {
                gsum += gamma[[k, l]];
            }
            let numer = rho * eta[k] * gsum * gsum;
            let mut coherent = 0.0;
            for kp in 0..k_total {
                if kp == k {
                    continue;
                }
                let mut inner = 0.0;
                for l in 0..l_total {
                    inner += gamma[[k, l]] * beta[[kp, l]] / beta[[k, l]];
                }
                coherent += eta[kp] * inner * inner * xcorr[[k, kp]];
            }
            let mut noncoherent = 0.0;
            for kp in 0..k_total {
                for l in 0..l_total {
                    noncoherent += eta[kp] * gamma[[k, l]] * beta[[kp, l]];
                }
            }
            out.push(numer / (rho * coherent + rho * noncoherent + gsum));
        }
        out
    }

    fn random_instance(seed: u64, k: usize, l: usize) -> (SystemParams, SinrCoefficients, Scenario) {
        let mut params = SystemParams::with_dims(k, l);
        params.pilot_mode = crate::config::PilotMode::Random;
        params.tau_p = (k / 2).max(1);
        let s = generate_scenario(&params, seed).unwrap();
        let stats = channel_stats(&s, &params);
        let c = sinr_coefficients(&stats, &s, params.rho).unwrap();
        (params, c, s)
    }

    #[test]
    fn scalar_coefficients_example() {
        // K=1, L=1, gamma=beta=1, orthogonal, rho=1 -> a=u=n=1, d diag stored.
        let beta = Array2::from_elem((1, 1), 1.0);
        let gamma = beta.clone();
        let xcorr = Array2::eye(1);
        let c = sinr_coefficients_from(&gamma, &beta, &xcorr, 1.0).unwrap();
        assert_eq!(c.a, vec![1.0]);
        assert_eq!(c.n, vec![1.0]);
        assert_eq!(c.u[[0, 0]], 1.0);
        assert_eq!(c.d[[0, 0]], 1.0);
    }

    #[test]
    fn scalar_sinr_and_jacobian() {
        let c = scalar_coeffs();
        let p = PowerAllocation::uniform(1, 1.0).unwrap();
        let s = sinr(&c, &p);
        assert!((s[0] - 0.5).abs() < 1e-15);
        let j = sinr_jacobian(&c, &p);
        assert!((j[[0, 0]] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_power_gives_zero_sinr_and_decoupled_jacobian() {
        let (_, c, _) = random_instance(3, 6, 12);
        let p = PowerAllocation::uniform(6, 0.0).unwrap();
        assert!(sinr(&c, &p).iter().all(|s| *s == 0.0));
        let j = sinr_jacobian(&c, &p);
        for k in 0..6 {
            let expected = c.rho * c.a[k] / c.n[k];
            assert!((j[[k, k]] - expected).abs() <= 1e-12 * expected);
            for jj in 0..6 {
                if jj != k {
                    assert_eq!(j[[k, jj]], 0.0);
                }
            }
        }
    }

    #[test]
    fn orthogonal_pilots_zero_out_offdiagonal_d() {
        let params = SystemParams::with_dims(5, 10);
        let s = generate_scenario(&params, 8).unwrap();
        let stats = channel_stats(&s, &params);
        let c = sinr_coefficients(&stats, &s, params.rho).unwrap();
        for k in 0..5 {
            assert!(c.d[[k, k]] > 0.0);
            for kp in 0..5 {
                if kp != k {
                    assert_eq!(c.d[[k, kp]], 0.0);
                }
            }
        }
    }

    #[test]
    fn identity_a_equals_n_squared() {
        for seed in 0..5 {
            let (_, c, _) = random_instance(seed, 7, 15);
            for k in 0..7 {
                assert!((c.a[k] - c.n[k] * c.n[k]).abs() <= 1e-12 * c.a[k]);
            }
        }
    }

    #[test]
    fn matches_naive_triple_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..20 {
            let (params, c, s) = random_instance(seed, 5, 9);
            let stats = channel_stats(&s, &params);
            let eta: Vec<f64> = (0..5).map(|_| rng.random_range(0.01..1.0)).collect();
            let p = PowerAllocation::new(eta.clone()).unwrap();
            let fast = sinr(&c, &p);
            let slow = naive_sinr(&s.beta, &stats.gamma, &s.pilot_xcorr, params.rho, &eta);
            for (f, n) in fast.iter().zip(slow.iter()) {
                assert!((f - n).abs() <= 1e-12 * n.abs().max(1e-300), "fast={f} naive={n}");
            }
        }
    }

    #[test]
    fn se_examples() {
        assert!((se(&[1.0], 20, 200).unwrap()[0] - 0.9).abs() < 1e-15);
        assert_eq!(se(&[0.0], 20, 200).unwrap()[0], 0.0);
        assert!((se(&[0.5], 20, 200).unwrap()[0] - 0.52647).abs() < 1e-5);
        assert!(se(&[1.0], 200, 200).is_err());
        assert!(se(&[1.0], 200, 20).is_err());
    }

    #[test]
    fn se_monotone_in_sinr() {
        let values = [0.0, 0.1, 0.5, 1.0, 3.0, 10.0, 1e4];
        let ses = se(&values, 20, 200).unwrap();
        for w in ses.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for seed in 0..5 {
            let (_, c, _) = random_instance(seed + 40, 4, 10);
            let eta: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..0.95)).collect();
            let p = PowerAllocation::new(eta.clone()).unwrap();
            let jac = sinr_jacobian(&c, &p);
            let h = 1e-6;
            for j in 0..4 {
                let mut up = eta.clone();
                let mut dn = eta.clone();
                up[j] += h;
                dn[j] -= h;
                let s_up = sinr(&c, &PowerAllocation::clamped(up));
                let s_dn = sinr(&c, &PowerAllocation::clamped(dn));
                for k in 0..4 {
                    let fd = (s_up[k] - s_dn[k]) / (2.0 * h);
                    let an = jac[[k, j]];
                    let scale = an.abs().max(fd.abs()).max(1e-12);
                    assert!(
                        (an - fd).abs() <= 1e-6 * scale,
                        "k={k} j={j} analytic={an} fd={fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn jacobian_sign_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for seed in 0..8 {
            let k = rng.random_range(2..=8);
            let l = rng.random_range(4..=20);
            let (_, c, _) = random_instance(seed + 70, k, l);
            let eta: Vec<f64> = (0..k).map(|_| rng.random_range(1e-3..=1.0)).collect();
            let jac = sinr_jacobian(&c, &PowerAllocation::new(eta).unwrap());
            for ki in 0..k {
                assert!(jac[[ki, ki]] > 0.0);
                for j in 0..k {
                    if j != ki {
                        assert!(jac[[ki, j]] <= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn aggregate_lsf_examples() {
        let ones = Array2::from_elem((2, 3), 1.0);
        assert_eq!(aggregate_lsf(&ones), vec![3.0, 3.0]);
        let single = Array2::from_shape_vec((3, 1), vec![0.5, 2.0, 7.0]).unwrap();
        assert_eq!(aggregate_lsf(&single), vec![0.5, 2.0, 7.0]);
        // Permuting AP columns leaves B unchanged.
        let m = Array2::from_shape_vec((2, 3), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let permuted =
            Array2::from_shape_vec((2, 3), vec![3.0, 1.0, 2.0, 6.0, 4.0, 5.0]).unwrap();
        assert_eq!(aggregate_lsf(&m), aggregate_lsf(&permuted));
    }

    #[test]
    fn power_allocation_validation() {
        assert!(PowerAllocation::new(vec![0.0, 0.5, 1.0]).is_ok());
        assert!(PowerAllocation::new(vec![-0.1]).is_err());
        assert!(PowerAllocation::new(vec![1.1]).is_err());
        assert!(PowerAllocation::new(vec![f64::NAN]).is_err());
        let clamped = PowerAllocation::clamped(vec![-3.0, 0.4, 9.0]);
        assert_eq!(clamped.as_slice(), &[0.0, 0.4, 1.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let beta = Array2::from_elem((2, 3), 1.0);
        let gamma = Array2::from_elem((2, 2), 0.5);
        let xcorr = Array2::eye(2);
        assert!(sinr_coefficients_from(&gamma, &beta, &xcorr, 1.0).is_err());
        let bad_xcorr = Array2::eye(3);
        let gamma_ok = Array2::from_elem((2, 3), 0.5);
        assert!(sinr_coefficients_from(&gamma_ok, &beta, &bad_xcorr, 1.0).is_err());
    }

    #[test]
    fn serde_roundtrip() {
        let (_, c, _) = random_instance(1, 3, 6);
        let text = serde_json::to_string(&c).unwrap();
        let back: SinrCoefficients = serde_json::from_str(&text).unwrap();
        assert_eq!(back.a, c.a);
        assert_eq!(back.d, c.d);
        let p = PowerAllocation::new(vec![0.25, 0.5, 1.0]).unwrap();
        let ptext = serde_json::to_string(&p).unwrap();
        assert_eq!(ptext, "[0.25,0.5,1.0]");
        let pback: PowerAllocation = serde_json::from_str(&ptext).unwrap();
        assert_eq!(pback, p);
    }
}
