//! Classical optimization baselines for the three power-control problems.
//!
//! - Max-min fairness: bisection on the common SINR target, with the inner
//!   feasibility test implemented as a standard interference-function fixed
//!   point ([`feasibility_fixed_point`]) instead of an LP.
//! - Max-sum-rate and max-product: projected gradient ascent with Armijo
//!   backtracking and deterministic multistarts ([`solve_weighted`]).
//! - [`brute_force`]: exhaustive grid search for small `K`, the ground-truth
//!   oracle the acceptance tests compare against.
//!
//! All solvers are pure functions of the SINR coefficients and their
//! configuration; returned power vectors always satisfy the box constraints
//! and reported objectives are recomputed through [`crate::metrics`], so a
//! reader can verify them independently.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{sinr, sinr_denominator, sinr_jacobian, PowerAllocation, SinrCoefficients};
use crate::rng::{derive_seed, stream_rng};

/// Outcome of one solver run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    /// Power coefficients, each in `[0, 1]`.
    pub eta: PowerAllocation,
    /// Objective at `eta`, recomputed from the metrics module: min-SINR for
    /// max-min, `sum_k log2(1+SINR_k)` for sum-rate, `sum_k ln SINR_k` for
    /// product.
    pub objective_value: f64,
    /// Outer iterations performed (bisection steps, gradient steps summed
    /// over multistarts, or grid points evaluated).
    pub iterations: usize,
    /// Whether the solver met its own convergence test before hitting an
    /// iteration cap.
    pub converged: bool,
    /// Wall-clock time of the solve, seconds.
    pub wall_time_s: f64,
    /// Projected-gradient KKT residual at the returned point; `None` for
    /// solvers without a first-order certificate.
    pub kkt_residual: Option<f64>,
}

/// Objectives understood by the grid oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    MaxMin,
    SumRate,
    Product,
}

/// Smooth objectives handled by projected gradient ascent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightedObjective {
    SumRate,
    Product,
}

impl From<WeightedObjective> for Objective {
    fn from(o: WeightedObjective) -> Self {
        match o {
            WeightedObjective::SumRate => Objective::SumRate,
            WeightedObjective::Product => Objective::Product,
        }
    }
}

/// Objective value at a power vector. The product objective is evaluated in
/// log form, `sum_k ln SINR_k`, which is `-inf` whenever some SINR is zero.
pub fn objective_value(c: &SinrCoefficients, p: &PowerAllocation, objective: Objective) -> f64 {
    let s = sinr(c, p);
    match objective {
        Objective::MaxMin => s.iter().copied().fold(f64::INFINITY, f64::min),
        Objective::SumRate => s.iter().map(|v| crate::metrics::log2_1p(*v)).sum(),
        Objective::Product => s.iter().map(|v| v.ln()).sum(),
    }
}

/// Result of the interference-function feasibility test for one SINR target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointOutcome {
    /// Whether the minimal fixed point satisfies `eta <= 1` (tolerance 1e-10).
    pub feasible: bool,
    /// Final iterate: the (approximate) minimal fixed point when feasible,
    /// the last iterate otherwise.
    pub eta: Vec<f64>,
    /// Fixed-point iterations performed.
    pub iterations: usize,
    /// True when the iteration cap was reached without a verdict; such runs
    /// are conservatively declared infeasible.
    pub hit_max_iter: bool,
}

/// Iteration cap for the inner feasibility fixed point.
pub const FIXED_POINT_MAX_ITER: usize = 500;
/// Box-constraint slack when declaring a fixed point feasible.
const FEASIBILITY_SLACK: f64 = 1e-10;
/// Relative change below which the fixed point is considered converged.
const FIXED_POINT_REL_TOL: f64 = 1e-12;

/// Test whether SINR target `t` is achievable within the power box.
///
/// Iterates `eta_k <- (t / (rho * a_k)) * D_k(eta)` from `eta = 0`, where
/// `D_k` is the SINR denominator. The map is a standard interference
/// function (monotone and scalable), so the iterates increase monotonically
/// toward the minimal fixed point when one exists. The target is feasible
/// iff that fixed point lies inside the box; any iterate exceeding `1`
/// certifies infeasibility early. Hitting [`FIXED_POINT_MAX_ITER`] without
/// a verdict is reported via `hit_max_iter` and treated as infeasible.
pub fn feasibility_fixed_point(c: &SinrCoefficients, t: f64) -> Result<FixedPointOutcome> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::config(format!(
            "SINR target must be finite and non-negative, got {t}"
        )));
    }
    let k_total = c.num_ues();
    if t == 0.0 {
        return Ok(FixedPointOutcome {
            feasible: true,
            eta: vec![0.0; k_total],
            iterations: 0,
            hit_max_iter: false,
        });
    }
    let mut eta = vec![0.0; k_total];
    for iter in 1..=FIXED_POINT_MAX_ITER {
        let mut next = vec![0.0; k_total];
        let mut max_rel_change: f64 = 0.0;
        let mut overflow = false;
        for k in 0..k_total {
            let updated = t / (c.rho * c.a[k]) * sinr_denominator(c, &eta, k);
            debug_assert!(
                updated >= eta[k],
                "interference-function iterates must be non-decreasing"
            );
            max_rel_change = max_rel_change.max((updated - eta[k]) / updated.max(1e-300));
            if updated > 1.0 + FEASIBILITY_SLACK {
                overflow = true;
            }
            next[k] = updated;
        }
        eta = next;
        if overflow {
            // Iterates increase toward the minimal fixed point, so exceeding
            // the box already proves the target infeasible.
            return Ok(FixedPointOutcome {
                feasible: false,
                eta,
                iterations: iter,
                hit_max_iter: false,
            });
        }
        if max_rel_change <= FIXED_POINT_REL_TOL {
            return Ok(FixedPointOutcome {
                feasible: true,
                eta,
                iterations: iter,
                hit_max_iter: false,
            });
        }
    }
    Ok(FixedPointOutcome {
        feasible: false,
        eta,
        iterations: FIXED_POINT_MAX_ITER,
        hit_max_iter: true,
    })
}

/// Bisection cap; the interval shrinks by half each step, so this is never
/// reached for sane tolerances.
const BISECTION_MAX_ITER: usize = 200;

/// Max-min power control: bisection on the common SINR target with the
/// fixed-point feasibility test inside.
///
/// `tol` is relative on the target. The upper bracket is the best
/// zero-interference single-user SINR, `max_k rho*a_k/n_k`, which no
/// feasible allocation can exceed. After bisection the solution is scaled
/// so its largest coefficient sits on the box boundary — uniform up-scaling
/// strictly increases every SINR, so this only improves the objective (and
/// makes symmetric instances return exactly full power).
pub fn solve_maxmin(c: &SinrCoefficients, tol: f64) -> Result<SolveReport> {
    c.validate()?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::config(format!("bisection tol must be positive, got {tol}")));
    }
    let start = Instant::now();
    let k_total = c.num_ues();
    let mut t_hi = (0..k_total)
        .map(|k| c.rho * c.a[k] / c.n[k])
        .fold(0.0, f64::max);
    let mut t_lo = 0.0;
    let mut eta_lo = vec![0.0; k_total];
    let mut iterations = 0;
    while t_hi - t_lo > tol * t_hi && iterations < BISECTION_MAX_ITER {
        let mid = 0.5 * (t_lo + t_hi);
        let fp = feasibility_fixed_point(c, mid)?;
        if fp.feasible {
            t_lo = mid;
            eta_lo = fp.eta;
        } else {
            t_hi = mid;
        }
        iterations += 1;
    }
    let max_eta = eta_lo.iter().copied().fold(0.0, f64::max);
    if max_eta > 0.0 {
        for e in &mut eta_lo {
            *e /= max_eta;
        }
    } else {
        // No positive target was certified feasible (only possible at the
        // iteration cap); full power is the sane fallback.
        eta_lo = vec![1.0; k_total];
    }
    let eta = PowerAllocation::clamped(eta_lo);
    let objective = objective_value(c, &eta, Objective::MaxMin);
    Ok(SolveReport {
        eta,
        objective_value: objective,
        iterations,
        converged: iterations < BISECTION_MAX_ITER,
        wall_time_s: start.elapsed().as_secs_f64(),
        kkt_residual: None,
    })
}

/// Projected-gradient configuration for [`solve_weighted`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgConfig {
    /// Gradient steps per start.
    pub max_iters: usize,
    /// Convergence threshold on the projected-gradient residual
    /// `max_j |proj(eta + grad)_j - eta_j|`.
    pub kkt_tol: f64,
    /// Backtracking shrink factor, in (0, 1).
    pub armijo_shrink: f64,
    /// Armijo sufficient-increase slope, in (0, 1).
    pub armijo_slope: f64,
    /// Number of starts: full power, the lower corner, the box center, then
    /// seeded random points.
    pub multistarts: usize,
    /// Lower box edge keeping `ln SINR` finite; a solver artifact, not part
    /// of the problem statement.
    pub eta_floor: f64,
    /// Seed for the random starts.
    pub seed: u64,
}

impl Default for PgConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            kkt_tol: 1e-6,
            armijo_shrink: 0.5,
            armijo_slope: 1e-4,
            multistarts: 8,
            eta_floor: 1e-6,
            seed: 0,
        }
    }
}

impl PgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be >= 1".to_string()));
        }
        if !(self.kkt_tol > 0.0) {
            return Err(Error::config("kkt_tol must be positive".to_string()));
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return Err(Error::config("armijo_shrink must lie in (0, 1)".to_string()));
        }
        if !(self.armijo_slope > 0.0 && self.armijo_slope < 1.0) {
            return Err(Error::config("armijo_slope must lie in (0, 1)".to_string()));
        }
        if self.multistarts == 0 {
            return Err(Error::config("multistarts must be >= 1".to_string()));
        }
        if !(self.eta_floor > 0.0 && self.eta_floor < 1.0) {
            return Err(Error::config("eta_floor must lie in (0, 1)".to_string()));
        }
        Ok(())
    }
}

/// Gradient of the smooth objectives via the exact SINR Jacobian:
/// `g_j = sum_k w_k * J_kj` with `w_k = 1/((1+SINR_k) ln 2)` for sum-rate
/// and `w_k = 1/SINR_k` for the log-product.
fn objective_gradient(
    c: &SinrCoefficients,
    p: &PowerAllocation,
    objective: WeightedObjective,
) -> Vec<f64> {
    let s = sinr(c, p);
    let jac = sinr_jacobian(c, p);
    let k_total = s.len();
    let weights: Vec<f64> = match objective {
        WeightedObjective::SumRate => s
            .iter()
            .map(|v| 1.0 / ((1.0 + v) * std::f64::consts::LN_2))
            .collect(),
        WeightedObjective::Product => s.iter().map(|v| 1.0 / v).collect(),
    };
    (0..k_total)
        .map(|j| (0..k_total).map(|k| weights[k] * jac[[k, j]]).sum())
        .collect()
}

fn project(eta: &[f64], floor: f64) -> Vec<f64> {
    eta.iter().map(|e| e.clamp(floor, 1.0)).collect()
}

fn kkt_residual(eta: &[f64], grad: &[f64], floor: f64) -> f64 {
    eta.iter()
        .zip(grad.iter())
        .map(|(e, g)| ((e + g).clamp(floor, 1.0) - e).abs())
        .fold(0.0, f64::max)
}

struct PgRun {
    eta: Vec<f64>,
    objective: f64,
    iterations: usize,
    kkt: f64,
    line_search_failed: bool,
}

fn pg_ascent(
    c: &SinrCoefficients,
    objective: WeightedObjective,
    cfg: &PgConfig,
    start: Vec<f64>,
) -> PgRun {
    const MAX_BACKTRACKS: usize = 60;
    let mut x = project(&start, cfg.eta_floor);
    let mut f = objective_value(c, &PowerAllocation::clamped(x.clone()), objective.into());
    let mut iterations = 0;
    let mut line_search_failed = false;
    for _ in 0..cfg.max_iters {
        let g = objective_gradient(c, &PowerAllocation::clamped(x.clone()), objective);
        let kkt = kkt_residual(&x, &g, cfg.eta_floor);
        if kkt <= cfg.kkt_tol {
            return PgRun { eta: x, objective: f, iterations, kkt, line_search_failed: false };
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let cand: Vec<f64> = x
                .iter()
                .zip(g.iter())
                .map(|(xi, gi)| (xi + step * gi).clamp(cfg.eta_floor, 1.0))
                .collect();
            let ascent: f64 = g
                .iter()
                .zip(cand.iter().zip(x.iter()))
                .map(|(gi, (ci, xi))| gi * (ci - xi))
                .sum();
            if ascent <= 0.0 {
                // Projection made no ascent progress; treat like a failed step.
                break;
            }
            let f_cand =
                objective_value(c, &PowerAllocation::clamped(cand.clone()), objective.into());
            if f_cand >= f + cfg.armijo_slope * ascent {
                x = cand;
                f = f_cand;
                accepted = true;
                break;
            }
            step *= cfg.armijo_shrink;
        }
        iterations += 1;
        if !accepted {
            line_search_failed = true;
            break;
        }
    }
    let g = objective_gradient(c, &PowerAllocation::clamped(x.clone()), objective);
    let kkt = kkt_residual(&x, &g, cfg.eta_floor);
    PgRun { eta: x, objective: f, iterations, kkt, line_search_failed }
}

/// Max-sum-rate or max-product power control by projected gradient ascent
/// over the box `[eta_floor, 1]^K`, best of `cfg.multistarts` starts.
///
/// Accepted steps never decrease the objective (Armijo backtracking). If
/// every start fails its line search before meeting the KKT tolerance the
/// best iterate is still returned, flagged `converged: false`.
pub fn solve_weighted(
    c: &SinrCoefficients,
    objective: WeightedObjective,
    cfg: &PgConfig,
) -> Result<SolveReport> {
    c.validate()?;
    cfg.validate()?;
    let start_time = Instant::now();
    let k_total = c.num_ues();
    let mut starts: Vec<Vec<f64>> = vec![
        vec![1.0; k_total],
        vec![cfg.eta_floor; k_total],
        vec![0.5; k_total],
    ];
    let mut rng = stream_rng(derive_seed(cfg.seed, "pg-multistart"), 0);
    while starts.len() < cfg.multistarts {
        starts.push(
            (0..k_total)
                .map(|_| rng.random_range(cfg.eta_floor..=1.0))
                .collect(),
        );
    }
    starts.truncate(cfg.multistarts);

    let mut best: Option<PgRun> = None;
    let mut total_iterations = 0;
    for s in starts {
        let run = pg_ascent(c, objective, cfg, s);
        total_iterations += run.iterations;
        let better = match &best {
            None => true,
            Some(b) => run.objective > b.objective,
        };
        if better {
            best = Some(run);
        }
    }
    let best = best.expect("at least one multistart");
    let eta = PowerAllocation::clamped(best.eta);
    let recomputed = objective_value(c, &eta, objective.into());
    Ok(SolveReport {
        eta,
        objective_value: recomputed,
        iterations: total_iterations,
        converged: best.kkt <= cfg.kkt_tol && !best.line_search_failed,
        wall_time_s: start_time.elapsed().as_secs_f64(),
        kkt_residual: Some(best.kkt),
    })
}

/// Largest `K` the grid oracle will accept.
pub const BRUTE_FORCE_MAX_UES: usize = 4;

/// Exhaustive grid search over `[0,1]^K` (over `[grid_step, 1]^K` for the
/// product objective, whose log form is `-inf` at zero power). Ties are
/// broken toward the lexicographically smallest power vector. Ground-truth
/// oracle for small instances; refuses `K > 4`.
pub fn brute_force(
    c: &SinrCoefficients,
    objective: Objective,
    grid_step: f64,
) -> Result<SolveReport> {
    c.validate()?;
    let k_total = c.num_ues();
    if k_total > BRUTE_FORCE_MAX_UES {
        return Err(Error::config(format!(
            "brute_force supports K <= {BRUTE_FORCE_MAX_UES}, got K = {k_total} \
             ((1/grid_step + 1)^K evaluations would be unreasonable)"
        )));
    }
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::config(format!(
            "grid_step must lie in (0, 1], got {grid_step}"
        )));
    }
    let start_time = Instant::now();
    let m = (1.0 / grid_step).round().max(1.0) as usize;
    let lowest = if objective == Objective::Product { 1 } else { 0 };
    let levels: Vec<f64> = (lowest..=m).map(|i| i as f64 / m as f64).collect();

    let mut indices = vec![0usize; k_total];
    let mut best_eta: Option<Vec<f64>> = None;
    let mut best_value = f64::NEG_INFINITY;
    let mut evaluated = 0usize;
    loop {
        let eta: Vec<f64> = indices.iter().map(|&i| levels[i]).collect();
        let p = PowerAllocation::clamped(eta.clone());
        let value = objective_value(c, &p, objective);
        evaluated += 1;
        // Enumeration is lexicographic with the first user most significant,
        // so replacing only on strict improvement keeps the lexicographically
        // smallest argmax.
        if value > best_value {
            best_value = value;
            best_eta = Some(eta);
        }
        // Odometer increment, least-significant digit last.
        let mut pos = k_total;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            if indices[pos] + 1 < levels.len() {
                indices[pos] += 1;
                for idx in indices.iter_mut().skip(pos + 1) {
                    *idx = 0;
                }
                break;
            } else if pos == 0 {
                let eta = PowerAllocation::clamped(best_eta.expect("grid is non-empty"));
                let objective_value_final = objective_value(c, &eta, objective);
                return Ok(SolveReport {
                    eta,
                    objective_value: objective_value_final,
                    iterations: evaluated,
                    converged: true,
                    wall_time_s: start_time.elapsed().as_secs_f64(),
                    kkt_residual: None,
                });
            }
        }
    }
}
