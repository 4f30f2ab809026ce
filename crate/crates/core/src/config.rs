//! System-level parameters and config-file loading.
//!
//! `SystemParams` carries every physical and protocol constant a network
//! realization depends on. Values live in the units stated on each field;
//! SNRs are normalized (transmit power over noise power, linear scale).
//!
//! The on-disk form is TOML with a `[system]` table:
//!
//! ```toml
//! [system]
//! area_side_km = 1.0
//! num_aps = 20
//! num_ues = 8
//! tau_p = 20
//! tau_c = 200
//! sigma_sh_db = 8.0
//! pilot_mode = "orthogonal"   # or "random"
//! # rho = 1.57e11             # optional explicit overrides; otherwise
//! # rho_p = 1.57e11           # derived from [system.radio]
//!
//! [system.pathloss]
//! d0_km = 0.01
//! d1_km = 0.05
//! l_const_db = 140.7
//!
//! [system.radio]
//! pilot_power_mw = 100.0
//! uplink_power_mw = 100.0
//! bandwidth_hz = 2.0e7
//! noise_figure_db = 9.0
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boltzmann constant, J/K.
const BOLTZMANN: f64 = 1.380_649e-23;
/// Reference noise temperature, K.
const NOISE_TEMPERATURE_K: f64 = 290.0;

/// Three-slope pathloss model constants (distances in km, loss in dB).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossParams {
    /// Inner breakpoint: below this distance the loss is constant.
    pub d0_km: f64,
    /// Outer breakpoint between the 20 dB/decade and 35 dB/decade slopes.
    pub d1_km: f64,
    /// Fixed attenuation constant, dB.
    pub l_const_db: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self {
            d0_km: 0.01,
            d1_km: 0.05,
            l_const_db: 140.7,
        }
    }
}

/// Physical radio constants used to derive the normalized SNRs when they
/// are not given explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    pub pilot_power_mw: f64,
    pub uplink_power_mw: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            pilot_power_mw: 100.0,
            uplink_power_mw: 100.0,
            bandwidth_hz: 2.0e7,
            noise_figure_db: 9.0,
        }
    }
}

/// Normalized SNR (linear) of a transmitter with the given power over the
/// thermal noise floor of the given bandwidth and noise figure.
pub fn normalized_snr(power_mw: f64, bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    let noise_w =
        BOLTZMANN * NOISE_TEMPERATURE_K * bandwidth_hz * 10f64.powf(noise_figure_db / 10.0);
    (power_mw * 1e-3) / noise_w
}

/// How pilots are assigned to UEs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PilotMode {
    /// Mutually orthogonal pilots; requires `num_ues <= tau_p`.
    Orthogonal,
    /// Each UE picks one of `tau_p` orthonormal pilots uniformly at random.
    Random,
}

/// All physical/protocol constants of the simulated system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Side of the square deployment area, km.
    pub area_side_km: f64,
    /// Number of access points `L`.
    pub num_aps: usize,
    /// Number of user equipments `K`.
    pub num_ues: usize,
    /// Pilot sequence length, symbols.
    pub tau_p: usize,
    /// Coherence block length, symbols.
    pub tau_c: usize,
    /// Normalized pilot SNR, linear.
    pub rho_p: f64,
    /// Normalized uplink data SNR, linear.
    pub rho: f64,
    /// Shadow-fading standard deviation, dB.
    pub sigma_sh_db: f64,
    pub pathloss: PathLossParams,
    pub pilot_mode: PilotMode,
}

impl Default for SystemParams {
    fn default() -> Self {
        let radio = RadioParams::default();
        Self {
            area_side_km: 1.0,
            num_aps: 20,
            num_ues: 8,
            tau_p: 20,
            tau_c: 200,
            rho_p: normalized_snr(radio.pilot_power_mw, radio.bandwidth_hz, radio.noise_figure_db),
            rho: normalized_snr(radio.uplink_power_mw, radio.bandwidth_hz, radio.noise_figure_db),
            sigma_sh_db: 8.0,
            pathloss: PathLossParams::default(),
            pilot_mode: PilotMode::Orthogonal,
        }
    }
}

impl SystemParams {
    /// Convenience constructor for a default system resized to `K` UEs and `L` APs.
    pub fn with_dims(num_ues: usize, num_aps: usize) -> Self {
        Self {
            num_ues,
            num_aps,
            ..Self::default()
        }
    }

    /// Fraction of the coherence block left for uplink data.
    pub fn se_prefactor(&self) -> f64 {
        1.0 - self.tau_p as f64 / self.tau_c as f64
    }

    /// Check every invariant; the error message names the violated one.
    pub fn validate(&self) -> Result<()> {
        if !(self.area_side_km.is_finite() && self.area_side_km > 0.0) {
            return Err(Error::config(format!(
                "area_side_km must be positive and finite, got {}",
                self.area_side_km
            )));
        }
        if self.num_aps == 0 || self.num_ues == 0 {
            return Err(Error::config(format!(
                "num_aps and num_ues must be >= 1, got L={} K={}",
                self.num_aps, self.num_ues
            )));
        }
        if self.tau_p < 1 {
            return Err(Error::config("tau_p must be >= 1".to_string()));
        }
        if self.tau_c <= self.tau_p {
            return Err(Error::config(format!(
                "tau_c ({}) must exceed tau_p ({}) so the SE prefactor is in (0,1)",
                self.tau_c, self.tau_p
            )));
        }
        if self.pilot_mode == PilotMode::Orthogonal && self.num_ues > self.tau_p {
            return Err(Error::config(format!(
                "orthogonal pilots require num_ues ({}) <= tau_p ({})",
                self.num_ues, self.tau_p
            )));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::config(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.rho_p.is_finite() && self.rho_p > 0.0) {
            return Err(Error::config(format!(
                "rho_p must be positive, got {}",
                self.rho_p
            )));
        }
        if !(self.sigma_sh_db.is_finite() && self.sigma_sh_db >= 0.0) {
            return Err(Error::config(format!(
                "sigma_sh_db must be >= 0 and finite, got {}",
                self.sigma_sh_db
            )));
        }
        let pl = &self.pathloss;
        if !(pl.d0_km > 0.0 && pl.d0_km < pl.d1_km && pl.d1_km < self.area_side_km) {
            return Err(Error::config(format!(
                "pathloss breakpoints must satisfy 0 < d0 ({}) < d1 ({}) < area_side ({})",
                pl.d0_km, pl.d1_km, self.area_side_km
            )));
        }
        if !pl.l_const_db.is_finite() {
            return Err(Error::config("pathloss l_const_db must be finite".to_string()));
        }
        Ok(())
    }
}

/// Lenient on-disk form of [`SystemParams`]: every field optional, with the
/// normalized SNRs either given explicitly or derived from `[system.radio]`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub area_side_km: Option<f64>,
    pub num_aps: Option<usize>,
    pub num_ues: Option<usize>,
    pub tau_p: Option<usize>,
    pub tau_c: Option<usize>,
    pub rho_p: Option<f64>,
    pub rho: Option<f64>,
    pub sigma_sh_db: Option<f64>,
    pub pathloss: Option<PathLossParams>,
    pub pilot_mode: Option<PilotMode>,
    pub radio: Option<RadioParams>,
}

impl SystemConfig {
    /// Resolve against defaults and validate.
    pub fn into_params(self) -> Result<SystemParams> {
        let defaults = SystemParams::default();
        let radio = self.radio.unwrap_or_default();
        let params = SystemParams {
            area_side_km: self.area_side_km.unwrap_or(defaults.area_side_km),
            num_aps: self.num_aps.unwrap_or(defaults.num_aps),
            num_ues: self.num_ues.unwrap_or(defaults.num_ues),
            tau_p: self.tau_p.unwrap_or(defaults.tau_p),
            tau_c: self.tau_c.unwrap_or(defaults.tau_c),
            rho_p: self.rho_p.unwrap_or_else(|| {
                normalized_snr(radio.pilot_power_mw, radio.bandwidth_hz, radio.noise_figure_db)
            }),
            rho: self.rho.unwrap_or_else(|| {
                normalized_snr(radio.uplink_power_mw, radio.bandwidth_hz, radio.noise_figure_db)
            }),
            sigma_sh_db: self.sigma_sh_db.unwrap_or(defaults.sigma_sh_db),
            pathloss: self.pathloss.unwrap_or_default(),
            pilot_mode: self.pilot_mode.unwrap_or(defaults.pilot_mode),
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Default, Deserialize)]
struct SystemFile {
    #[serde(default)]
    system: SystemConfig,
}

/// Load `SystemParams` from a TOML file containing a `[system]` table.
pub fn load_system_params(path: impl AsRef<std::path::Path>) -> Result<SystemParams> {
    let text = std::fs::read_to_string(path)?;
    let file: SystemFile = toml::from_str(&text)?;
    file.system.into_params()
}
