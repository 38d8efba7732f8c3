//! Closed-form expected count rates for a pulsed photon-pair source.
//!
//! The source produces signal/idler pairs by spontaneous four-wave mixing:
//! the on-chip pair rate is `gamma_eff * P_onchip^2`, quadratic in the
//! on-chip average pump power. Light enters and exits the chip through two
//! grating couplers whose individual transmittances are unequal and not
//! separately measurable; only their product is. Each detection channel
//! applies its collection-path transmittance, adds residual pump leakage
//! (linear in on-chip power), and a power-independent dark rate.
//!
//! Everything in this module is a pure function of [`SourceParams`]; the
//! Monte Carlo simulator and the test oracles both reference these
//! expressions as ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `gamma_eff` is stored in MHz/mW^2 while all returned rates are Hz.
/// The unit conversion is applied exactly once, through this constant.
const GAMMA_MHZ_TO_HZ: f64 = 1e6;

/// Which grating coupler is the input. `A` means light enters through
/// coupler A and exits through coupler B; `B` is the reverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IoConfig {
    A,
    B,
}

impl IoConfig {
    pub const BOTH: [IoConfig; 2] = [IoConfig::A, IoConfig::B];

    pub fn swapped(self) -> Self {
        match self {
            IoConfig::A => IoConfig::B,
            IoConfig::B => IoConfig::A,
        }
    }

    /// Short lowercase label used in file and directory names.
    pub fn label(self) -> &'static str {
        match self {
            IoConfig::A => "a",
            IoConfig::B => "b",
        }
    }
}

impl std::fmt::Display for IoConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IoConfig::A => write!(f, "A"),
            IoConfig::B => write!(f, "B"),
        }
    }
}

/// Detection channel selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Signal,
    Idler,
}

/// Physical ground truth for one device + detection chain.
///
/// Transmittances are dimensionless in [0, 1]. Field names carry units to
/// prevent unit drift between the config file and the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceParams {
    /// Effective nonlinearity, MHz/mW^2: on-chip pair rate = gamma_eff * P_onchip^2.
    pub gamma_eff_mhz_per_mw2: f64,
    /// Transmittance of grating coupler A.
    pub eta_gc_a: f64,
    /// Transmittance of grating coupler B.
    pub eta_gc_b: f64,
    /// Signal collection-path transmittance downstream of the output coupler.
    pub eta_path_s: f64,
    /// Idler collection-path transmittance downstream of the output coupler.
    pub eta_path_i: f64,
    /// Residual pump leakage into the signal channel, Hz per mW of on-chip power.
    pub leak_s_hz_per_mw: f64,
    /// Residual pump leakage into the idler channel, Hz per mW of on-chip power.
    pub leak_i_hz_per_mw: f64,
    /// Signal detector dark/background rate, Hz.
    pub dark_s_hz: f64,
    /// Idler detector dark/background rate, Hz.
    pub dark_i_hz: f64,
    /// Pump pulse repetition rate, Hz.
    pub rep_rate_hz: f64,
    /// FWHM of the signal-idler time-difference spread of true pairs, seconds.
    pub jitter_fwhm_s: f64,
}

impl SourceParams {
    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, msg: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Domain(msg.to_string()))
            }
        }
        let transmittance = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        check(
            self.gamma_eff_mhz_per_mw2.is_finite() && self.gamma_eff_mhz_per_mw2 >= 0.0,
            "gamma_eff_mhz_per_mw2 must be finite and >= 0",
        )?;
        check(transmittance(self.eta_gc_a), "eta_gc_a must be in [0, 1]")?;
        check(transmittance(self.eta_gc_b), "eta_gc_b must be in [0, 1]")?;
        check(transmittance(self.eta_path_s), "eta_path_s must be in [0, 1]")?;
        check(transmittance(self.eta_path_i), "eta_path_i must be in [0, 1]")?;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        check(
            nonneg(self.leak_s_hz_per_mw),
            "leak_s_hz_per_mw must be >= 0",
        )?;
        check(
            nonneg(self.leak_i_hz_per_mw),
            "leak_i_hz_per_mw must be >= 0",
        )?;
        check(nonneg(self.dark_s_hz), "dark_s_hz must be >= 0")?;
        check(nonneg(self.dark_i_hz), "dark_i_hz must be >= 0")?;
        check(
            self.rep_rate_hz.is_finite() && self.rep_rate_hz > 0.0,
            "rep_rate_hz must be > 0",
        )?;
        check(
            self.jitter_fwhm_s.is_finite() && self.jitter_fwhm_s > 0.0,
            "jitter_fwhm_s must be > 0",
        )?;
        Ok(())
    }

    /// Transmittance of the input coupler for a configuration.
    pub fn eta_in(&self, config: IoConfig) -> f64 {
        match config {
            IoConfig::A => self.eta_gc_a,
            IoConfig::B => self.eta_gc_b,
        }
    }

    /// Transmittance of the output coupler for a configuration.
    pub fn eta_out(&self, config: IoConfig) -> f64 {
        self.eta_in(config.swapped())
    }

    /// Collection efficiency of one channel: output coupler times path.
    ///
    /// The output coupler differs per configuration, so the collection
    /// efficiencies are configuration-dependent composites. They cancel in
    /// the coefficient-ratio estimator, which is the whole point of the
    /// dual-configuration method.
    pub fn eta_collection(&self, config: IoConfig, channel: Channel) -> f64 {
        let path = match channel {
            Channel::Signal => self.eta_path_s,
            Channel::Idler => self.eta_path_i,
        };
        self.eta_out(config) * path
    }

    /// The measurable pair transmittance of the two grating couplers.
    pub fn eta_coupling(&self) -> f64 {
        self.eta_gc_a * self.eta_gc_b
    }

    pub fn rep_period_s(&self) -> f64 {
        1.0 / self.rep_rate_hz
    }

    pub fn leak_hz_per_mw(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Signal => self.leak_s_hz_per_mw,
            Channel::Idler => self.leak_i_hz_per_mw,
        }
    }

    pub fn dark_hz(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Signal => self.dark_s_hz,
            Channel::Idler => self.dark_i_hz,
        }
    }

    /// On-chip pair generation rate in Hz at a given laser power.
    pub fn onchip_pair_rate_hz(&self, config: IoConfig, p_laser_mw: f64) -> f64 {
        let p_onchip = self.eta_in(config) * p_laser_mw;
        self.gamma_eff_mhz_per_mw2 * GAMMA_MHZ_TO_HZ * p_onchip * p_onchip
    }

    /// Mean pair number per pump pulse. The simulators require this to stay
    /// below 0.5 (low-gain regime).
    pub fn mean_pairs_per_pulse(&self, config: IoConfig, p_laser_mw: f64) -> f64 {
        self.onchip_pair_rate_hz(config, p_laser_mw) / self.rep_rate_hz
    }
}

fn check_power(p_laser_mw: f64) -> Result<()> {
    if !p_laser_mw.is_finite() || p_laser_mw < 0.0 {
        return Err(Error::Domain(format!(
            "p_laser_mw must be finite and >= 0 (got {p_laser_mw})"
        )));
    }
    Ok(())
}

/// Expected single-detector count rate in Hz for one channel.
///
/// Quadratic pair term + linear leakage term + constant dark rate; exactly
/// a quadratic polynomial in the laser power.
pub fn expected_singles_rate(
    params: &SourceParams,
    config: IoConfig,
    channel: Channel,
    p_laser_mw: f64,
) -> Result<f64> {
    params.validate()?;
    check_power(p_laser_mw)?;
    let (a, b, c) = singles_quad_coeffs(params, config, channel);
    Ok(a * p_laser_mw * p_laser_mw + b * p_laser_mw + c)
}

/// Expected true-pair coincidence rate in Hz.
///
/// Only the correlated-pair term; accidentals are modeled separately by
/// [`expected_accidental_rate`].
pub fn expected_coincidence_rate(
    params: &SourceParams,
    config: IoConfig,
    p_laser_mw: f64,
) -> Result<f64> {
    params.validate()?;
    check_power(p_laser_mw)?;
    let (a, _, _) = coincidence_quad_coeffs(params, config);
    Ok(a * p_laser_mw * p_laser_mw)
}

/// Expected accidental coincidence rate in Hz per pulse-aligned peak.
///
/// For a pulsed source, uncorrelated clicks produce `S_s * S_i / rep_rate`
/// coincidences per peak; every pulse-aligned peak is populated equally.
/// This is the oracle for the adjacent-peak populations of the simulators.
pub fn expected_accidental_rate(
    params: &SourceParams,
    config: IoConfig,
    p_laser_mw: f64,
) -> Result<f64> {
    params.validate()?;
    check_power(p_laser_mw)?;
    if params.rep_rate_hz <= 0.0 {
        return Err(Error::Domain("rep_rate_hz must be > 0".into()));
    }
    let s_s = expected_singles_rate(params, config, Channel::Signal, p_laser_mw)?;
    let s_i = expected_singles_rate(params, config, Channel::Idler, p_laser_mw)?;
    Ok(s_s * s_i / params.rep_rate_hz)
}

/// Analytic quadratic coefficients `(a, b, c)` of the singles rate in
/// Hz/mW^2, Hz/mW and Hz. These are what an ideal noise-free fit recovers.
pub fn singles_quad_coeffs(
    params: &SourceParams,
    config: IoConfig,
    channel: Channel,
) -> (f64, f64, f64) {
    let eta_in = params.eta_in(config);
    let eta_ch = params.eta_collection(config, channel);
    let a = eta_ch * params.gamma_eff_mhz_per_mw2 * GAMMA_MHZ_TO_HZ * eta_in * eta_in;
    let b = eta_ch * params.leak_hz_per_mw(channel) * eta_in;
    let c = params.dark_hz(channel);
    (a, b, c)
}

/// Analytic quadratic coefficients of the true-pair coincidence rate.
/// The linear and constant terms are identically zero.
pub fn coincidence_quad_coeffs(params: &SourceParams, config: IoConfig) -> (f64, f64, f64) {
    let eta_in = params.eta_in(config);
    let eta1 = params.eta_collection(config, Channel::Signal);
    let eta2 = params.eta_collection(config, Channel::Idler);
    let a = eta1 * eta2 * params.gamma_eff_mhz_per_mw2 * GAMMA_MHZ_TO_HZ * eta_in * eta_in;
    (a, 0.0, 0.0)
}
