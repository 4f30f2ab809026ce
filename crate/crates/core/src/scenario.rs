//! Random network realizations and channel-estimation statistics.
//!
//! A [`Scenario`] is one draw of a cell-free network: AP and UE positions
//! uniform on a square that wraps around at the edges, a K×L matrix of
//! large-scale fading coefficients (three-slope pathloss times log-normal
//! shadowing), and a pilot assignment. [`channel_stats`] turns it into the
//! LMMSE estimation statistics (`c_kl`, `gamma_kl`) every downstream
//! computation consumes.
//!
//! Generation is a pure function of `(params, seed)`. Position, shadowing,
//! and pilot draws consume independent RNG streams (see [`crate::rng`]),
//! so adding draws to one stage never perturbs another.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{PathLossParams, PilotMode, SystemParams};
use crate::error::{Error, Result};
use crate::rng::{
    stream_rng, STREAM_AP_POSITIONS, STREAM_PILOTS, STREAM_SHADOWING, STREAM_UE_POSITIONS,
};

/// One network realization.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// AP positions, km, each in `[0, area_side)²`.
    pub ap_positions: Vec<[f64; 2]>,
    /// UE positions, km.
    pub ue_positions: Vec<[f64; 2]>,
    /// Large-scale fading coefficients, K×L, linear scale, strictly positive.
    pub beta: Array2<f64>,
    /// Squared pilot cross-correlations `|φ_k^H φ_k'|²`, K×K, entries in
    /// `[0,1]`, unit diagonal.
    pub pilot_xcorr: Array2<f64>,
    /// Pilot index per UE under random assignment; `None` for orthogonal pilots.
    pub pilot_assignment: Option<Vec<usize>>,
    /// Seed this realization was generated from.
    pub seed: u64,
}

/// LMMSE channel-estimation statistics derived from a scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelStats {
    /// LMMSE scaling `c_kl`, K×L, linear.
    pub c: Array2<f64>,
    /// Estimate second moment `gamma_kl = sqrt(tau_p * rho_p) * beta_kl * c_kl`, K×L.
    pub gamma: Array2<f64>,
}

/// Euclidean distance on the torus obtained by wrapping the square of the
/// given side at its edges. Per-axis displacement is `min(|Δ|, side - |Δ|)`,
/// so the result never exceeds `side / sqrt(2)`.
pub fn wrap_distance(p: [f64; 2], q: [f64; 2], side: f64) -> f64 {
    let mut acc = 0.0;
    for axis in 0..2 {
        let delta = (p[axis] - q[axis]).abs();
        let wrapped = delta.min(side - delta);
        acc += wrapped * wrapped;
    }
    acc.sqrt()
}

/// Three-slope pathloss, dB, distance in km.
///
/// Constant below `d0`, 20 dB/decade between `d0` and `d1`, 35 dB/decade
/// beyond `d1`; continuous at both breakpoints.
pub fn path_loss_db(d_km: f64, pl: &PathLossParams) -> f64 {
    if d_km > pl.d1_km {
        -pl.l_const_db - 35.0 * d_km.log10()
    } else if d_km > pl.d0_km {
        -pl.l_const_db - 15.0 * pl.d1_km.log10() - 20.0 * d_km.log10()
    } else {
        -pl.l_const_db - 15.0 * pl.d1_km.log10() - 20.0 * pl.d0_km.log10()
    }
}

/// Pilot assignment for `K` UEs over `tau_p` orthonormal pilots.
///
/// Returns the K×K matrix of squared pilot cross-correlations plus, for
/// random assignment, the pilot index of each UE. Orthogonal mode yields
/// the identity matrix and requires `K <= tau_p`.
pub fn assign_pilots(
    num_ues: usize,
    tau_p: usize,
    mode: PilotMode,
    seed: u64,
) -> Result<(Array2<f64>, Option<Vec<usize>>)> {
    match mode {
        PilotMode::Orthogonal => {
            if num_ues > tau_p {
                return Err(Error::config(format!(
                    "orthogonal pilots require num_ues ({num_ues}) <= tau_p ({tau_p})"
                )));
            }
            Ok((Array2::eye(num_ues), None))
        }
        PilotMode::Random => {
            if tau_p == 0 {
                return Err(Error::config("tau_p must be >= 1".to_string()));
            }
            let mut rng = stream_rng(seed, STREAM_PILOTS);
            let assignment: Vec<usize> =
                (0..num_ues).map(|_| rng.random_range(0..tau_p)).collect();
            let xcorr = xcorr_from_assignment(&assignment);
            Ok((xcorr, Some(assignment)))
        }
    }
}

fn xcorr_from_assignment(assignment: &[usize]) -> Array2<f64> {
    let k = assignment.len();
    Array2::from_shape_fn((k, k), |(i, j)| {
        if assignment[i] == assignment[j] {
            1.0
        } else {
            0.0
        }
    })
}

/// Generate one network realization. Deterministic in `(params, seed)`.
pub fn generate_scenario(params: &SystemParams, seed: u64) -> Result<Scenario> {
    params.validate()?;
    let side = params.area_side_km;
    let (k, l) = (params.num_ues, params.num_aps);

    let mut ap_rng = stream_rng(seed, STREAM_AP_POSITIONS);
    let ap_positions: Vec<[f64; 2]> = (0..l)
        .map(|_| [ap_rng.random_range(0.0..side), ap_rng.random_range(0.0..side)])
        .collect();

    let mut ue_rng = stream_rng(seed, STREAM_UE_POSITIONS);
    let ue_positions: Vec<[f64; 2]> = (0..k)
        .map(|_| [ue_rng.random_range(0.0..side), ue_rng.random_range(0.0..side)])
        .collect();

    // Shadowing draws in (UE, AP) row-major order; beta = PL * 10^(sigma*z/10).
    let mut sh_rng = stream_rng(seed, STREAM_SHADOWING);
    let mut beta = Array2::zeros((k, l));
    for ki in 0..k {
        for li in 0..l {
            let d = wrap_distance(ue_positions[ki], ap_positions[li], side);
            let pl_db = path_loss_db(d, &params.pathloss);
            let z: f64 = sh_rng.sample(StandardNormal);
            beta[[ki, li]] = 10f64.powf((pl_db + params.sigma_sh_db * z) / 10.0);
        }
    }

    let (pilot_xcorr, pilot_assignment) =
        assign_pilots(k, params.tau_p, params.pilot_mode, seed)?;

    Ok(Scenario {
        ap_positions,
        ue_positions,
        beta,
        pilot_xcorr,
        pilot_assignment,
        seed,
    })
}

/// LMMSE estimation statistics for a scenario:
/// `c_kl = sqrt(tau_p*rho_p) * beta_kl / (tau_p*rho_p * sum_k' beta_k'l * xcorr_kk' + 1)`
/// and `gamma_kl = sqrt(tau_p*rho_p) * beta_kl * c_kl`.
pub fn channel_stats(scenario: &Scenario, params: &SystemParams) -> ChannelStats {
    channel_stats_from(
        &scenario.beta,
        &scenario.pilot_xcorr,
        params.tau_p,
        params.rho_p,
    )
}

/// Statistics computed directly from the fading matrix and pilot
/// cross-correlations, without the positional part of a scenario.
pub fn channel_stats_from(
    beta: &Array2<f64>,
    pilot_xcorr: &Array2<f64>,
    tau_p: usize,
    rho_p: f64,
) -> ChannelStats {
    let (k, l) = beta.dim();
    let tau_rho = tau_p as f64 * rho_p;
    let sqrt_tau_rho = tau_rho.sqrt();
    let mut c = Array2::zeros((k, l));
    let mut gamma = Array2::zeros((k, l));
    for ki in 0..k {
        for li in 0..l {
            let mut interference = 0.0;
            for kp in 0..k {
                interference += beta[[kp, li]] * pilot_xcorr[[ki, kp]];
            }
            let c_kl = sqrt_tau_rho * beta[[ki, li]] / (tau_rho * interference + 1.0);
            c[[ki, li]] = c_kl;
            gamma[[ki, li]] = sqrt_tau_rho * beta[[ki, li]] * c_kl;
        }
    }
    ChannelStats { c, gamma }
}

const SCENARIO_FILE_VERSION: u32 = 1;

/// Versioned JSON form of a scenario. `beta` is stored in dB.
#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    version: u32,
    seed: u64,
    ap_positions: Vec<[f64; 2]>,
    ue_positions: Vec<[f64; 2]>,
    beta_db: Vec<Vec<f64>>,
    pilot_assignment: Option<Vec<usize>>,
}

impl Scenario {
    pub fn beta_db(&self) -> Vec<Vec<f64>> {
        self.beta
            .axis_iter(Axis(0))
            .map(|row| row.iter().map(|b| 10.0 * b.log10()).collect())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ScenarioFile {
            version: SCENARIO_FILE_VERSION,
            seed: self.seed,
            ap_positions: self.ap_positions.clone(),
            ue_positions: self.ue_positions.clone(),
            beta_db: self.beta_db(),
            pilot_assignment: self.pilot_assignment.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        if file.version != SCENARIO_FILE_VERSION {
            return Err(Error::config(format!(
                "unsupported scenario file version {} (expected {})",
                file.version, SCENARIO_FILE_VERSION
            )));
        }
        let k = file.ue_positions.len();
        let l = file.ap_positions.len();
        if file.beta_db.len() != k || file.beta_db.iter().any(|row| row.len() != l) {
            return Err(Error::dimension(format!(
                "beta_db must be {k}x{l} to match the stored positions"
            )));
        }
        let beta = Array2::from_shape_fn((k, l), |(i, j)| 10f64.powf(file.beta_db[i][j] / 10.0));
        let pilot_xcorr = match &file.pilot_assignment {
            Some(assignment) => {
                if assignment.len() != k {
                    return Err(Error::dimension(
                        "pilot_assignment length must equal the number of UEs".to_string(),
                    ));
                }
                xcorr_from_assignment(assignment)
            }
            None => Array2::eye(k),
        };
        Ok(Scenario {
            ap_positions: file.ap_positions,
            ue_positions: file.ue_positions,
            beta,
            pilot_xcorr,
            pilot_assignment: file.pilot_assignment,
            seed: file.seed,
        })
    }

    pub fn save_json(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn defaults() -> SystemParams {
        SystemParams::default()
    }

    #[test]
    fn wrap_distance_examples() {
        assert!((wrap_distance([0.0, 0.0], [0.9, 0.0], 1.0) - 0.1).abs() < 1e-12);
        assert!((wrap_distance([0.0, 0.0], [0.5, 0.5], 1.0) - 0.5f64.hypot(0.5)).abs() < 1e-12);
        assert_eq!(wrap_distance([0.3, 0.7], [0.3, 0.7], 1.0), 0.0);
    }

    #[test]
    fn path_loss_examples() {
        let pl = PathLossParams::default();
        assert!((path_loss_db(1.0, &pl) - (-140.7)).abs() < 1e-12);
        // Near-field constant branch: -140.7 - 15*log10(0.05) - 20*log10(0.01).
        let near = -140.7 - 15.0 * 0.05f64.log10() - 20.0 * 0.01f64.log10();
        assert!((near - (-81.18455)).abs() < 1e-4);
        assert!((path_loss_db(0.005, &pl) - near).abs() < 1e-12);
        assert_eq!(path_loss_db(0.005, &pl), path_loss_db(0.01, &pl));
    }

    #[test]
    fn path_loss_continuous_at_breakpoints() {
        let pl = PathLossParams::default();
        // Both branches at d1 reduce to -L - 35*log10(d1).
        let mid_at_d1 = -pl.l_const_db - 15.0 * pl.d1_km.log10() - 20.0 * pl.d1_km.log10();
        let far_at_d1 = -pl.l_const_db - 35.0 * pl.d1_km.log10();
        assert!((mid_at_d1 - far_at_d1).abs() < 1e-12);
        assert!((path_loss_db(pl.d1_km, &pl) - far_at_d1).abs() < 1e-12);
        // And just across the breakpoints the jump is negligible.
        for d in [pl.d0_km, pl.d1_km] {
            let below = path_loss_db(d * (1.0 - 1e-12), &pl);
            let above = path_loss_db(d * (1.0 + 1e-12), &pl);
            assert!((below - above).abs() < 1e-6, "discontinuity at {d}");
        }
    }

    #[test]
    fn path_loss_non_increasing() {
        let pl = PathLossParams::default();
        let mut prev = f64::INFINITY;
        let mut d = 1e-4;
        while d < 2.0 {
            let v = path_loss_db(d, &pl);
            assert!(v <= prev + 1e-12, "increase at d={d}");
            prev = v;
            d *= 1.07;
        }
    }

    #[test]
    fn pilots_orthogonal_identity() {
        let (x, assignment) = assign_pilots(8, 20, PilotMode::Orthogonal, 1).unwrap();
        assert_eq!(x, Array2::<f64>::eye(8));
        assert!(assignment.is_none());
        let (x, _) = assign_pilots(20, 20, PilotMode::Orthogonal, 1).unwrap();
        assert_eq!(x, Array2::<f64>::eye(20));
    }

    #[test]
    fn pilots_forced_reuse_when_tau_is_one() {
        let (x, assignment) = assign_pilots(2, 1, PilotMode::Random, 3).unwrap();
        assert_eq!(x, Array2::<f64>::ones((2, 2)));
        assert_eq!(assignment.unwrap(), vec![0, 0]);
    }

    #[test]
    fn pilots_orthogonal_overflow_is_an_error() {
        let err = assign_pilots(21, 20, PilotMode::Orthogonal, 1).unwrap_err();
        assert!(err.to_string().contains("tau_p"));
    }

    #[test]
    fn pilot_xcorr_symmetric_unit_diagonal() {
        let (x, _) = assign_pilots(12, 4, PilotMode::Random, 9).unwrap();
        for i in 0..12 {
            assert_eq!(x[[i, i]], 1.0);
            for j in 0..12 {
                assert_eq!(x[[i, j]], x[[j, i]]);
            }
        }
    }

    #[test]
    fn scenario_is_deterministic() {
        let params = defaults();
        let a = generate_scenario(&params, 42).unwrap();
        let b = generate_scenario(&params, 42).unwrap();
        assert_eq!(a.ap_positions, b.ap_positions);
        assert_eq!(a.ue_positions, b.ue_positions);
        assert_eq!(a.beta, b.beta);
        assert_eq!(a.pilot_xcorr, b.pilot_xcorr);
        let c = generate_scenario(&params, 43).unwrap();
        assert_ne!(a.beta, c.beta);
    }

    #[test]
    fn zero_shadowing_gives_pure_pathloss_and_nearfield_bound() {
        let mut params = defaults();
        params.sigma_sh_db = 0.0;
        let s = generate_scenario(&params, 1).unwrap();
        let beta_max = 10f64.powf(path_loss_db(0.0, &params.pathloss) / 10.0);
        for ki in 0..params.num_ues {
            for li in 0..params.num_aps {
                let d = wrap_distance(
                    s.ue_positions[ki],
                    s.ap_positions[li],
                    params.area_side_km,
                );
                let expected = 10f64.powf(path_loss_db(d, &params.pathloss) / 10.0);
                let got = s.beta[[ki, li]];
                assert!((got - expected).abs() <= 1e-15 * expected);
                assert!(got > 0.0 && got <= beta_max);
            }
        }
    }

    #[test]
    fn shadowed_beta_positive_and_finite() {
        let s = generate_scenario(&defaults(), 7).unwrap();
        assert!(s.beta.iter().all(|b| b.is_finite() && *b > 0.0));
    }

    #[test]
    fn invalid_params_name_the_invariant() {
        let mut params = defaults();
        params.tau_c = 5;
        let err = generate_scenario(&params, 1).unwrap_err();
        assert!(err.to_string().contains("tau_c"));
    }

    #[test]
    fn channel_stats_scalar_example() {
        // tau_p * rho_p = 1, single UE/AP, beta = 1: c = gamma = 0.5.
        let beta = Array2::from_elem((1, 1), 1.0);
        let xcorr = Array2::eye(1);
        let stats = channel_stats_from(&beta, &xcorr, 1, 1.0);
        assert!((stats.c[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((stats.gamma[[0, 0]] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gamma_bounded_by_beta_and_improves_with_pilot_snr() {
        let params = defaults();
        let s = generate_scenario(&params, 11).unwrap();
        let stats = channel_stats(&s, &params);
        for (g, b) in stats.gamma.iter().zip(s.beta.iter()) {
            assert!(*g > 0.0 && *g <= *b);
        }
        // gamma -> beta as rho_p -> infinity.
        let perfect = channel_stats_from(&s.beta, &s.pilot_xcorr, params.tau_p, 1e30);
        for (g, b) in perfect.gamma.iter().zip(s.beta.iter()) {
            assert!((g - b).abs() <= 1e-9 * b);
        }
        // Strictly increasing in rho_p.
        let low = channel_stats_from(&s.beta, &s.pilot_xcorr, params.tau_p, params.rho_p * 0.5);
        for (hi, lo) in stats.gamma.iter().zip(low.gamma.iter()) {
            assert!(hi > lo);
        }
        // Exact identity gamma = sqrt(tau*rho_p) * beta * c.
        let scale = (params.tau_p as f64 * params.rho_p).sqrt();
        for ((g, c), b) in stats.gamma.iter().zip(stats.c.iter()).zip(s.beta.iter()) {
            assert_eq!(*g, scale * b * c);
        }
    }

    #[test]
    fn scenario_json_roundtrip() {
        let params = defaults();
        let s = generate_scenario(&params, 5).unwrap();
        let text = s.to_json().unwrap();
        let back = Scenario::from_json(&text).unwrap();
        assert_eq!(back.seed, 5);
        assert_eq!(back.ap_positions, s.ap_positions);
        assert_eq!(back.pilot_xcorr, s.pilot_xcorr);
        for (a, b) in back.beta.iter().zip(s.beta.iter()) {
            assert!((a - b).abs() <= 1e-12 * b, "dB roundtrip drift");
        }
        let bad = text.replace("\"version\": 1", "\"version\": 99");
        assert!(Scenario::from_json(&bad).is_err());
    }

    proptest! {
        #[test]
        fn wrap_distance_is_a_torus_metric(
            ax in 0.0..1.0f64, ay in 0.0..1.0f64,
            bx in 0.0..1.0f64, by in 0.0..1.0f64,
            cx in 0.0..1.0f64, cy in 0.0..1.0f64,
        ) {
            let (a, b, c) = ([ax, ay], [bx, by], [cx, cy]);
            let dab = wrap_distance(a, b, 1.0);
            let dba = wrap_distance(b, a, 1.0);
            prop_assert!((dab - dba).abs() < 1e-12);
            prop_assert!(dab <= 1.0 / 2f64.sqrt() + 1e-12);
            let dac = wrap_distance(a, c, 1.0);
            let dcb = wrap_distance(c, b, 1.0);
            prop_assert!(dab <= dac + dcb + 1e-12);
        }
    }
}
