//! Run-configuration file: one structured TOML document that drives both
//! the simulate and analyze commands.
//!
//! All physical quantities carry their unit in the field name (`_mw`,
//! `_ns`, `_hz`, `_s`) so values cannot drift between file and model.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ratemodel::{IoConfig, SourceParams};
use crate::sweep::{auto_integration_times, default_plan, AnalysisSettings, SweepPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Analyze,
}

/// Power schedule section. Either list `powers_mw` explicitly or give
/// `max_power_mw` for the default 12-point logarithmic schedule; the
/// integration times default to the inverse-rate rule when omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub powers_mw: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_power_mw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integration_times_s: Option<Vec<f64>>,
    #[serde(default = "default_repeats")]
    pub repeats: u32,
    #[serde(default = "default_configs")]
    pub configs: Vec<IoConfig>,
}

fn default_repeats() -> u32 {
    10
}

fn default_configs() -> Vec<IoConfig> {
    vec![IoConfig::A, IoConfig::B]
}

impl PlanConfig {
    pub fn resolve(&self) -> Result<SweepPlan> {
        let powers_mw = match (&self.powers_mw, self.max_power_mw) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "[plan] specify either powers_mw or max_power_mw, not both".into(),
                ))
            }
            (Some(p), None) => p.clone(),
            (None, Some(max)) => default_plan(max)?.powers_mw,
            (None, None) => {
                return Err(Error::Config(
                    "[plan] needs powers_mw or max_power_mw".into(),
                ))
            }
        };
        let integration_times_s = match &self.integration_times_s {
            Some(t) => t.clone(),
            None => auto_integration_times(&powers_mw),
        };
        let plan = SweepPlan {
            powers_mw,
            integration_times_s,
            repeats: self.repeats,
            configs: self.configs.clone(),
        };
        plan.validate()?;
        Ok(plan)
    }
}

/// Histogram-analysis section, in interface units (ns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_bin_width_ns")]
    pub bin_width_ns: f64,
    #[serde(default = "default_car_window_ns")]
    pub car_window_ns: f64,
    #[serde(default = "default_true")]
    pub subtract_accidentals: bool,
    #[serde(default = "default_eta_sigma_rel")]
    pub eta_coupling_sigma_rel: f64,
}

fn default_bin_width_ns() -> f64 {
    0.1
}

fn default_car_window_ns() -> f64 {
    2.0
}

fn default_true() -> bool {
    true
}

fn default_eta_sigma_rel() -> f64 {
    0.05
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            bin_width_ns: default_bin_width_ns(),
            car_window_ns: default_car_window_ns(),
            subtract_accidentals: default_true(),
            eta_coupling_sigma_rel: default_eta_sigma_rel(),
        }
    }
}

impl AnalysisConfig {
    pub fn to_settings(&self) -> AnalysisSettings {
        AnalysisSettings {
            bin_width_s: self.bin_width_ns * 1e-9,
            car_window_s: self.car_window_ns * 1e-9,
            subtract_accidentals: self.subtract_accidentals,
            eta_coupling_sigma_rel: self.eta_coupling_sigma_rel,
        }
    }
}

/// Analyze-mode inputs: one or two dataset directories plus the quantities
/// that are measured directly rather than fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_a_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_b_dir: Option<PathBuf>,
    pub rep_rate_hz: f64,
    /// Directly measured pair transmittance of the two grating couplers.
    pub eta_coupling: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_coupling_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<SourceParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanConfig>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<InputsConfig>,
}

impl RunConfig {
    pub fn from_str_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_str_toml(&text)
    }

    /// Mode-specific completeness checks, with the missing piece named.
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            Mode::Simulate => {
                let params = self
                    .params
                    .as_ref()
                    .ok_or_else(|| Error::Config("simulate mode requires a [params] section".into()))?;
                params.validate()?;
                let plan = self
                    .plan
                    .as_ref()
                    .ok_or_else(|| Error::Config("simulate mode requires a [plan] section".into()))?;
                plan.resolve()?;
                if self.seed.is_none() {
                    return Err(Error::Config(
                        "simulate mode requires `seed` (or pass --seed)".into(),
                    ));
                }
            }
            Mode::Analyze => {
                let inputs = self
                    .inputs
                    .as_ref()
                    .ok_or_else(|| Error::Config("analyze mode requires an [inputs] section".into()))?;
                if inputs.config_a_dir.is_none() && inputs.config_b_dir.is_none() {
                    return Err(Error::Config(
                        "[inputs] needs config_a_dir and/or config_b_dir".into(),
                    ));
                }
                for (name, dir) in [
                    ("config_a_dir", &inputs.config_a_dir),
                    ("config_b_dir", &inputs.config_b_dir),
                ] {
                    if let Some(d) = dir {
                        if !d.is_dir() {
                            return Err(Error::Config(format!(
                                "[inputs] {name} = {} does not exist or is not a directory",
                                d.display()
                            )));
                        }
                    }
                }
                if !(inputs.rep_rate_hz > 0.0) {
                    return Err(Error::Config("[inputs] rep_rate_hz must be > 0".into()));
                }
                if !(0.0 < inputs.eta_coupling && inputs.eta_coupling <= 1.0) {
                    return Err(Error::Config(
                        "[inputs] eta_coupling must lie in (0, 1]".into(),
                    ));
                }
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::Config("output_dir must not be empty".into()));
        }
        Ok(())
    }
}

/// Commented template with every default spelled out; what
/// `print-defaults` emits.
pub fn default_config_toml() -> String {
    r#"# Photon-pair source characterization run.
#
# mode = "simulate": generate synthetic sweeps from [params] and analyze them.
# mode = "analyze":  analyze existing dataset directories listed in [inputs].
mode = "simulate"

# Master seed for the simulation; every (config, power, repeat) point
# derives its own generator from it, so runs are fully reproducible.
seed = 20260808

# Report directory (created if missing).
output_dir = "report"

[params]
# Effective nonlinearity, MHz/mW^2 (on-chip pair rate / on-chip power^2).
gamma_eff_mhz_per_mw2 = 14.7
# Grating coupler transmittances; only their product is measurable.
eta_gc_a = 0.1
eta_gc_b = 0.1
# Collection-path transmittance after the output coupler (4 dB ~ 0.398).
eta_path_s = 0.398
eta_path_i = 0.398
# Residual pump leakage, Hz per mW of on-chip average power.
leak_s_hz_per_mw = 25000.0
leak_i_hz_per_mw = 25000.0
# Detector dark/background rates, Hz.
dark_s_hz = 200.0
dark_i_hz = 200.0
# Pump repetition rate, Hz.
rep_rate_hz = 5e7
# FWHM of the signal-idler delay spread of true pairs, seconds.
jitter_fwhm_s = 1.2e-9

[plan]
# Either list powers_mw explicitly or give max_power_mw for the default
# 12-point logarithmic schedule starting at 0.3 mW.
max_power_mw = 3.0
# Integration times default to 300 s at the lowest power, scaled with the
# inverse expected coincidence rate (1/P^2) and clamped to [30, 300] s.
#integration_times_s = [...]
repeats = 10
configs = ["a", "b"]

[analysis]
# Delay-histogram bin width; must divide the pulse period evenly.
bin_width_ns = 0.1
# Integration window around each peak for the CAR.
car_window_ns = 2.0
# Fit accidental-subtracted coincidence rates (true) or raw ones (false).
subtract_accidentals = true
# Relative sigma assigned to eta_coupling in the simulate pipeline.
eta_coupling_sigma_rel = 0.05

# Analyze mode only: where the dataset directories live and the directly
# measured quantities.
#[inputs]
#config_a_dir = "report/config_a"
#config_b_dir = "report/config_b"
#rep_rate_hz = 5e7
#eta_coupling = 0.01
#eta_coupling_sigma = 0.0005
"#
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_template_parses_and_validates() {
        let cfg = RunConfig::from_str_toml(&default_config_toml()).unwrap();
        assert_eq!(cfg.mode, Mode::Simulate);
        assert_eq!(cfg.seed, Some(20260808));
        cfg.validate().unwrap();
        let plan = cfg.plan.unwrap().resolve().unwrap();
        assert_eq!(plan.powers_mw.len(), 12);
        assert_eq!(plan.repeats, 10);
        let settings = cfg.analysis.to_settings();
        assert!((settings.car_window_s - 2e-9).abs() < 1e-18);
    }

    #[test]
    fn missing_required_field_is_named() {
        let text = r#"
mode = "simulate"
seed = 1
output_dir = "out"
[plan]
max_power_mw = 3.0
[params]
gamma_eff_mhz_per_mw2 = 14.7
eta_gc_a = 0.1
eta_gc_b = 0.1
eta_path_s = 0.4
eta_path_i = 0.4
leak_s_hz_per_mw = 0.0
leak_i_hz_per_mw = 0.0
dark_s_hz = 100.0
rep_rate_hz = 5e7
jitter_fwhm_s = 1.2e-9
"#;
        let err = RunConfig::from_str_toml(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("dark_i_hz"), "field not named: {msg}");
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = default_config_toml() + "\nnot_a_field = 3\n";
        assert!(RunConfig::from_str_toml(&text).is_err());
    }

    #[test]
    fn simulate_mode_requires_sections() {
        let text = r#"
mode = "simulate"
seed = 1
output_dir = "out"
"#;
        let cfg = RunConfig::from_str_toml(text).unwrap();
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("[params]"), "{msg}");
    }

    #[test]
    fn plan_conflicts_are_rejected() {
        let plan = PlanConfig {
            powers_mw: Some(vec![0.3, 1.0, 2.0, 3.0]),
            max_power_mw: Some(3.0),
            integration_times_s: None,
            repeats: 10,
            configs: default_configs(),
        };
        assert!(plan.resolve().is_err());
        let plan = PlanConfig {
            powers_mw: None,
            max_power_mw: None,
            integration_times_s: None,
            repeats: 10,
            configs: default_configs(),
        };
        assert!(plan.resolve().is_err());
    }

    #[test]
    fn analyze_mode_checks_directories() {
        let text = r#"
mode = "analyze"
output_dir = "out"
[inputs]
config_a_dir = "/definitely/not/here"
rep_rate_hz = 5e7
eta_coupling = 0.01
"#;
        let cfg = RunConfig::from_str_toml(text).unwrap();
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("config_a_dir"), "{msg}");
    }

    #[test]
    fn run_config_round_trips_through_toml() {
        let cfg = RunConfig::from_str_toml(&default_config_toml()).unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let back = RunConfig::from_str_toml(&text).unwrap();
        assert_eq!(cfg, back);
        // Serialization is stable after one round trip.
        assert_eq!(text, toml::to_string(&back).unwrap());
    }
}
