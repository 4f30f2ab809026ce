//! Uplink power control for cell-free massive MIMO.
//!
//! The crate generates random network realizations (AP/UE positions,
//! three-slope pathloss with log-normal shadowing, LMMSE channel-estimation
//! statistics), evaluates the closed-form uplink SINR and spectral
//! efficiency as a rational function of the per-user power coefficients,
//! solves max-min / max-sum-rate / max-product power control with classical
//! iterative methods, and trains a small unsupervised neural controller
//! that maps aggregated large-scale fading coefficients to power
//! coefficients. A reporting layer produces CDF, learning-curve, and timing
//! artifacts as CSV/JSON.

pub mod config;
pub mod error;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod solvers;

pub use config::{PathLossParams, PilotMode, SystemParams};
pub use error::{Error, Result};
