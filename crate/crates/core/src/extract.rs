//! Effective-nonlinearity extraction from quadratic fit coefficients.
//!
//! For one configuration the coefficient ratio `a_s a_i / a_si` equals
//! `gamma_eff eta_in^2` in Hz units: both collection efficiencies cancel,
//! but the square of the (individually unknowable) input coupler remains.
//! Running the device in both input/output configurations and multiplying
//! the two ratios leaves only the measurable product of the two coupler
//! transmittances:
//!
//! `gamma_eff = sqrt(a_sA a_sB a_iA a_iB / (a_siA a_siB)) / eta_coupling`
//!
//! which is why the dual-configuration estimate is immune to coupler
//! imbalance, while a single-configuration estimate that assumes balanced
//! couplers is biased by `eta_in^2 / eta_coupling`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{FitTriplet, QuadFit};

const HZ_TO_MHZ: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMethod {
    DualConfig,
    SingleConfig,
}

/// One quadratic coefficient that entered the estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientInput {
    pub label: String,
    pub a_hz_per_mw2: f64,
    pub sigma_hz_per_mw2: f64,
}

/// The inputs an estimate was computed from, kept for the report.
/// (Scalar fields precede the coefficient tables for TOML serialization.)
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaInputs {
    pub eta_coupling: f64,
    pub eta_coupling_sigma: f64,
    pub coefficients: Vec<CoefficientInput>,
}

/// Extracted effective nonlinearity with one-sigma uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub value_mhz_per_mw2: f64,
    pub sigma_mhz_per_mw2: f64,
    pub method: GammaMethod,
    /// Documented approximations that went into value and sigma.
    pub flags: Vec<String>,
    pub inputs: GammaInputs,
}

fn check_positive(value: f64, label: &str) -> Result<()> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::InvalidCoefficient(format!(
            "{label} must be positive and finite (got {value}); \
             this signals a fit failure or the absence of a pair signal"
        )));
    }
    Ok(())
}

fn check_eta(eta: f64, label: &str) -> Result<()> {
    if !eta.is_finite() || !(0.0 < eta && eta <= 1.0) {
        return Err(Error::Domain(format!(
            "{label} must lie in (0, 1] (got {eta})"
        )));
    }
    Ok(())
}

fn coeff(label: &str, fit: &QuadFit) -> CoefficientInput {
    CoefficientInput {
        label: label.to_string(),
        a_hz_per_mw2: fit.a_hz_per_mw2,
        sigma_hz_per_mw2: fit.sigma_a(),
    }
}

const INDEPENDENCE_FLAG: &str =
    "quadratic-coefficient uncertainties treated as independent across fits";

/// Naive single-configuration estimate `a_s a_i / (a_si eta_in^2)`.
///
/// Requires the true input-coupler transmittance; feeding the balanced
/// guess `sqrt(eta_coupling)` biases the value by `eta_in^2 / eta_coupling`
/// when the couplers are unequal.
pub fn gamma_single_config(
    fit_s: &QuadFit,
    fit_i: &QuadFit,
    fit_si: &QuadFit,
    eta_gc_in: f64,
) -> Result<GammaEstimate> {
    check_positive(fit_s.a_hz_per_mw2, "signal quadratic coefficient")?;
    check_positive(fit_i.a_hz_per_mw2, "idler quadratic coefficient")?;
    check_positive(fit_si.a_hz_per_mw2, "coincidence quadratic coefficient")?;
    check_eta(eta_gc_in, "eta_gc_in")?;

    let a_s = fit_s.a_hz_per_mw2;
    let a_i = fit_i.a_hz_per_mw2;
    let a_si = fit_si.a_hz_per_mw2;
    let value = a_s * a_i / (a_si * eta_gc_in * eta_gc_in) * HZ_TO_MHZ;

    // First-order propagation of the three coefficient variances; the
    // value is a product of powers, so relative variances add.
    let rel2 = [
        fit_s.sigma_a() / a_s,
        fit_i.sigma_a() / a_i,
        fit_si.sigma_a() / a_si,
    ]
    .iter()
    .map(|r| r * r)
    .sum::<f64>();
    let sigma = value * rel2.sqrt();

    Ok(GammaEstimate {
        value_mhz_per_mw2: value,
        sigma_mhz_per_mw2: sigma,
        method: GammaMethod::SingleConfig,
        flags: vec![
            INDEPENDENCE_FLAG.to_string(),
            "single-configuration estimate: biased by eta_in^2/eta_coupling \
             when the couplers are unbalanced"
                .to_string(),
        ],
        inputs: GammaInputs {
            eta_coupling: eta_gc_in * eta_gc_in,
            eta_coupling_sigma: 0.0,
            coefficients: vec![
                coeff("a_s", fit_s),
                coeff("a_i", fit_i),
                coeff("a_si", fit_si),
            ],
        },
    })
}

/// Dual-configuration estimate, immune to coupler imbalance.
///
/// `value = sqrt(a_sA a_sB a_iA a_iB / (a_siA a_siB)) / eta_coupling`
/// converted to MHz/mW^2. The relative variance is
/// `1/4 sum_6 (sigma_a/a)^2 + (sigma_eta/eta)^2` from first-order
/// propagation of the square root.
pub fn gamma_dual_config(
    fits_a: &FitTriplet,
    fits_b: &FitTriplet,
    eta_coupling: f64,
    sigma_eta: f64,
) -> Result<GammaEstimate> {
    let named = [
        ("a_s_config_a", &fits_a.signal),
        ("a_i_config_a", &fits_a.idler),
        ("a_si_config_a", &fits_a.coincidence),
        ("a_s_config_b", &fits_b.signal),
        ("a_i_config_b", &fits_b.idler),
        ("a_si_config_b", &fits_b.coincidence),
    ];
    for (label, fit) in &named {
        check_positive(fit.a_hz_per_mw2, label)?;
    }
    check_eta(eta_coupling, "eta_coupling")?;
    if !sigma_eta.is_finite() || sigma_eta < 0.0 {
        return Err(Error::Domain("sigma_eta must be finite and >= 0".into()));
    }

    let rel = |f: &QuadFit| {
        let r = f.sigma_a() / f.a_hz_per_mw2;
        r * r
    };
    // Grouped symmetrically so swapping the A and B bundles is bit-identical.
    let numerator =
        (fits_a.signal.a_hz_per_mw2 * fits_b.signal.a_hz_per_mw2)
            * (fits_a.idler.a_hz_per_mw2 * fits_b.idler.a_hz_per_mw2);
    let denominator = fits_a.coincidence.a_hz_per_mw2 * fits_b.coincidence.a_hz_per_mw2;
    let value = (numerator / denominator).sqrt() / eta_coupling * HZ_TO_MHZ;

    let rel_eta = sigma_eta / eta_coupling;
    let rel2 = 0.25
        * ((rel(&fits_a.signal) + rel(&fits_b.signal))
            + (rel(&fits_a.idler) + rel(&fits_b.idler))
            + (rel(&fits_a.coincidence) + rel(&fits_b.coincidence)))
        + rel_eta * rel_eta;
    let sigma = value * rel2.sqrt();

    Ok(GammaEstimate {
        value_mhz_per_mw2: value,
        sigma_mhz_per_mw2: sigma,
        method: GammaMethod::DualConfig,
        flags: vec![INDEPENDENCE_FLAG.to_string()],
        inputs: GammaInputs {
            eta_coupling,
            eta_coupling_sigma: sigma_eta,
            coefficients: named.iter().map(|(l, f)| coeff(l, f)).collect(),
        },
    })
}
