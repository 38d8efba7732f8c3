//! Experimental protocol and the end-to-end characterization pipeline.
//!
//! A [`SweepPlan`] encodes the attenuation schedule: which pump powers to
//! visit, how long to integrate at each (longer at low power so coincidence
//! counts stay roughly constant), how many repeats, and which input/output
//! configurations to run. [`run_pipeline`] simulates both configurations,
//! reduces repeats to rates, computes per-power CAR, performs the six
//! weighted quadratic fits, and extracts the effective nonlinearity with
//! the dual-configuration estimator.

use serde::{Deserialize, Serialize};

use crate::coincidence::{self, CarEstimate};
use crate::error::{Error, Result};
use crate::extract::{self, GammaEstimate};
use crate::fitting::{self, FitTriplet, RateKind, RatePoint};
use crate::montecarlo::{self, SweepDataset, TaggerSpec};
use crate::ratemodel::{IoConfig, SourceParams};

/// Lowest pump power of the default schedule, mW.
pub const DEFAULT_MIN_POWER_MW: f64 = 0.3;
/// Default integration-time clamp, seconds.
pub const MIN_INTEGRATION_S: f64 = 30.0;
pub const MAX_INTEGRATION_S: f64 = 300.0;
/// Number of powers in the default schedule.
pub const DEFAULT_N_POWERS: usize = 12;

/// Attenuation schedule for one characterization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    /// Pump powers at the laser, mW, strictly increasing.
    pub powers_mw: Vec<f64>,
    /// Integration time per power, seconds (same length as `powers_mw`).
    pub integration_times_s: Vec<f64>,
    /// Repeats per power.
    pub repeats: u32,
    /// Configurations to run.
    pub configs: Vec<IoConfig>,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.powers_mw.is_empty() {
            return Err(Error::Domain("plan has no powers".into()));
        }
        if self.powers_mw.len() != self.integration_times_s.len() {
            return Err(Error::Domain(format!(
                "powers ({}) and integration times ({}) must have the same length",
                self.powers_mw.len(),
                self.integration_times_s.len()
            )));
        }
        let mut prev = 0.0;
        for &p in &self.powers_mw {
            if !p.is_finite() || p <= prev {
                return Err(Error::Domain(
                    "powers must be finite, positive and strictly increasing".into(),
                ));
            }
            prev = p;
        }
        for &t in &self.integration_times_s {
            if !t.is_finite() || t <= 0.0 {
                return Err(Error::Domain("integration times must be > 0".into()));
            }
        }
        if self.repeats < 2 {
            return Err(Error::Domain(
                "repeats must be >= 2 so standard errors exist".into(),
            ));
        }
        if self.configs.is_empty() {
            return Err(Error::Domain("plan lists no configurations".into()));
        }
        let mut seen = Vec::new();
        for c in &self.configs {
            if seen.contains(c) {
                return Err(Error::Domain(format!("configuration {c} listed twice")));
            }
            seen.push(*c);
        }
        Ok(())
    }
}

/// Integration times for a power schedule: proportional to the inverse
/// expected central-peak rate (which grows as P^2), anchored so the lowest
/// power gets the maximum time, clamped to the default range.
pub fn auto_integration_times(powers_mw: &[f64]) -> Vec<f64> {
    let p_min = powers_mw.first().copied().unwrap_or(DEFAULT_MIN_POWER_MW);
    powers_mw
        .iter()
        .map(|&p| {
            let t = MAX_INTEGRATION_S * (p_min / p) * (p_min / p);
            t.clamp(MIN_INTEGRATION_S, MAX_INTEGRATION_S)
        })
        .collect()
}

/// Default measurement plan: 12 logarithmically spaced powers from
/// 0.3 mW to `max_power_mw`, 10 repeats, both configurations, integration
/// times scaled so coincidence counts per point stay roughly constant.
pub fn default_plan(max_power_mw: f64) -> Result<SweepPlan> {
    if !max_power_mw.is_finite() || max_power_mw <= DEFAULT_MIN_POWER_MW {
        return Err(Error::Domain(format!(
            "max power must exceed {DEFAULT_MIN_POWER_MW} mW (got {max_power_mw}); \
             a single-power plan cannot support a quadratic fit"
        )));
    }
    let ratio = max_power_mw / DEFAULT_MIN_POWER_MW;
    let powers_mw: Vec<f64> = (0..DEFAULT_N_POWERS)
        .map(|i| DEFAULT_MIN_POWER_MW * ratio.powf(i as f64 / (DEFAULT_N_POWERS - 1) as f64))
        .collect();
    let integration_times_s = auto_integration_times(&powers_mw);
    let plan = SweepPlan {
        powers_mw,
        integration_times_s,
        repeats: 10,
        configs: vec![IoConfig::A, IoConfig::B],
    };
    plan.validate()?;
    Ok(plan)
}

/// Histogram-analysis settings shared by the simulate and analyze paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSettings {
    /// Delay-histogram bin width, seconds.
    pub bin_width_s: f64,
    /// CAR integration window around each peak, seconds.
    pub car_window_s: f64,
    /// Fit accidental-subtracted coincidence rates (default) or raw ones.
    pub subtract_accidentals: bool,
    /// Relative uncertainty assigned to eta_coupling when none is supplied.
    pub eta_coupling_sigma_rel: f64,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            bin_width_s: 100e-12,
            car_window_s: 2e-9,
            subtract_accidentals: true,
            eta_coupling_sigma_rel: 0.05,
        }
    }
}

impl AnalysisSettings {
    pub fn tagger(&self) -> TaggerSpec {
        TaggerSpec {
            bin_width_s: self.bin_width_s,
        }
    }
}

/// Where a report came from; everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub toolkit_version: String,
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
}

/// Per-power reduced results for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub p_laser_mw: f64,
    pub signal: RatePoint,
    pub idler: RatePoint,
    pub coincidence: RatePoint,
    /// CAR of the repeat-summed histogram; `None` when undefined.
    pub car: Option<CarEstimate>,
    /// Raw counts backing an undefined CAR (empty accidental window).
    pub car_undefined: Option<(u64, f64)>,
}

/// Everything derived from one configuration's dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigResults {
    pub config: IoConfig,
    pub dataset: SweepDataset,
    pub rows: Vec<PowerRow>,
    pub fits: FitTriplet,
    /// Power and estimate of the maximum defined CAR.
    pub max_car: Option<(f64, CarEstimate)>,
}

/// Full output of a characterization run.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterizationReport {
    pub provenance: Provenance,
    pub analysis: AnalysisSettings,
    pub rep_rate_hz: f64,
    pub eta_coupling: f64,
    pub eta_coupling_sigma: f64,
    pub per_config: Vec<ConfigResults>,
    /// Dual-configuration extraction; present when both configs were run.
    pub gamma_dual: Option<GammaEstimate>,
    /// Naive single-configuration estimates (one per config), computed with
    /// the balanced-coupler guess sqrt(eta_coupling) for comparison.
    pub gamma_single: Vec<(IoConfig, GammaEstimate)>,
    pub warnings: Vec<String>,
}

/// Reduce one dataset to per-power rows and the three quadratic fits.
pub fn analyze_dataset(
    dataset: &SweepDataset,
    analysis: &AnalysisSettings,
    rep_rate_hz: f64,
) -> Result<ConfigResults> {
    let rep_period_s = 1.0 / rep_rate_hz;
    let coincidence_kind = if analysis.subtract_accidentals {
        RateKind::CoincidenceCorrected
    } else {
        RateKind::CoincidenceRaw
    };
    let config = dataset.config();
    let ctx = |power: f64| format!("config {config}, power {power} mW");

    let mut rows = Vec::with_capacity(dataset.groups().len());
    for group in dataset.groups() {
        let p = group.p_laser_mw;
        let signal = fitting::repeats_to_rate_point(&group.records, RateKind::Signal, rep_period_s)
            .map_err(|e| e.in_stage("rates", ctx(p)))?;
        let idler = fitting::repeats_to_rate_point(&group.records, RateKind::Idler, rep_period_s)
            .map_err(|e| e.in_stage("rates", ctx(p)))?;
        let coinc = fitting::repeats_to_rate_point(&group.records, coincidence_kind, rep_period_s)
            .map_err(|e| e.in_stage("rates", ctx(p)))?;

        // CAR from the repeat-summed histogram (counts add; the ratio is
        // scale invariant, so pooling just reduces the variance).
        let mut pooled = group.records[0].histogram.clone();
        for r in &group.records[1..] {
            pooled = pooled
                .checked_add(&r.histogram)
                .map_err(|e| e.in_stage("car", ctx(p)))?;
        }
        let (car, car_undefined) =
            match coincidence::compute_car(&pooled, rep_period_s, analysis.car_window_s) {
                Ok(est) => (Some(est), None),
                Err(Error::UndefinedCar {
                    central_counts,
                    accidental_counts,
                }) => (None, Some((central_counts, accidental_counts))),
                Err(e) => return Err(e.in_stage("car", ctx(p))),
            };

        rows.push(PowerRow {
            p_laser_mw: p,
            signal,
            idler,
            coincidence: coinc,
            car,
            car_undefined,
        });
    }

    let collect = |f: fn(&PowerRow) -> RatePoint| -> Vec<RatePoint> { rows.iter().map(f).collect() };
    let fit_ctx = |what: &str| format!("config {config}, {what} rates");
    let signal_fit = fitting::weighted_quadratic_fit(&collect(|r| r.signal.clone()))
        .map_err(|e| e.in_stage("fit", fit_ctx("signal")))?;
    let idler_fit = fitting::weighted_quadratic_fit(&collect(|r| r.idler.clone()))
        .map_err(|e| e.in_stage("fit", fit_ctx("idler")))?;
    let coincidence_fit = fitting::weighted_quadratic_fit(&collect(|r| r.coincidence.clone()))
        .map_err(|e| e.in_stage("fit", fit_ctx("coincidence")))?;

    let max_car = rows
        .iter()
        .filter_map(|r| r.car.clone().map(|c| (r.p_laser_mw, c)))
        .max_by(|a, b| a.1.car.total_cmp(&b.1.car));

    Ok(ConfigResults {
        config,
        dataset: dataset.clone(),
        rows,
        fits: FitTriplet {
            signal: signal_fit,
            idler: idler_fit,
            coincidence: coincidence_fit,
        },
        max_car,
    })
}

/// Run the analysis half of the pipeline over one or two datasets.
///
/// With both configurations present the dual-configuration estimator runs;
/// with a single configuration only the (bias-prone) naive estimate is
/// available and a warning is recorded.
pub fn analyze_datasets(
    datasets: &[SweepDataset],
    analysis: &AnalysisSettings,
    rep_rate_hz: f64,
    eta_coupling: f64,
    eta_coupling_sigma: f64,
    provenance: Provenance,
) -> Result<CharacterizationReport> {
    if datasets.is_empty() {
        return Err(Error::Domain("no datasets to analyze".into()));
    }
    if !(rep_rate_hz > 0.0) {
        return Err(Error::Domain("rep_rate_hz must be > 0".into()));
    }
    let mut per_config = Vec::new();
    for ds in datasets {
        per_config.push(analyze_dataset(ds, analysis, rep_rate_hz)?);
    }

    let mut warnings = Vec::new();
    let mut gamma_single = Vec::new();
    let balanced_guess = eta_coupling.sqrt();
    for cr in &per_config {
        let est = extract::gamma_single_config(
            &cr.fits.signal,
            &cr.fits.idler,
            &cr.fits.coincidence,
            balanced_guess,
        )
        .map_err(|e| e.in_stage("extract", format!("config {} single", cr.config)))?;
        gamma_single.push((cr.config, est));
    }

    let fits_a = per_config.iter().find(|c| c.config == IoConfig::A);
    let fits_b = per_config.iter().find(|c| c.config == IoConfig::B);
    let gamma_dual = match (fits_a, fits_b) {
        (Some(a), Some(b)) => Some(
            extract::gamma_dual_config(&a.fits, &b.fits, eta_coupling, eta_coupling_sigma)
                .map_err(|e| e.in_stage("extract", "dual configuration"))?,
        ),
        _ => {
            warnings.push(
                "single-configuration input: gamma uses the balanced-coupler guess \
                 sqrt(eta_coupling) and is biased by eta_in^2/eta_coupling when the \
                 grating couplers are unbalanced; run both configurations for an \
                 imbalance-free estimate"
                    .to_string(),
            );
            None
        }
    };

    Ok(CharacterizationReport {
        provenance,
        analysis: analysis.clone(),
        rep_rate_hz,
        eta_coupling,
        eta_coupling_sigma,
        per_config,
        gamma_dual,
        gamma_single,
        warnings,
    })
}

/// Full simulation pipeline: simulate every configuration in the plan,
/// then analyze. `eta_coupling` is taken from the ground-truth params (the
/// stand-in for the direct transmission measurement).
pub fn run_pipeline(
    params: &SourceParams,
    plan: &SweepPlan,
    analysis: &AnalysisSettings,
    master_seed: u64,
) -> Result<CharacterizationReport> {
    params.validate()?;
    plan.validate()?;
    let tagger = analysis.tagger();
    let mut datasets = Vec::new();
    for &config in &plan.configs {
        datasets.push(montecarlo::simulate_sweep(
            params,
            plan,
            config,
            master_seed,
            &tagger,
        )?);
    }
    let eta = params.eta_coupling();
    let provenance = Provenance {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        mode: "simulate".to_string(),
        master_seed: Some(master_seed),
        params_hash: None, // filled by the I/O layer, which owns hashing
        inputs: Vec::new(),
    };
    analyze_datasets(
        &datasets,
        analysis,
        params.rep_rate_hz,
        eta,
        analysis.eta_coupling_sigma_rel * eta,
        provenance,
    )
}
