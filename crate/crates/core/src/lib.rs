//! Simulation and estimation toolkit for pulsed-pump photon-pair sources.
//!
//! A spontaneous four-wave-mixing source converts two pump photons into a
//! signal-idler pair, so the pair rate grows with the square of the pump
//! power. Characterizing such a source means sweeping the pump power,
//! recording singles and coincidence counts, fitting the three quadratics,
//! and extracting the effective nonlinearity `gamma_eff` — the brightness
//! figure of merit in MHz/mW^2 — together with the coincidence-to-accidental
//! ratio (CAR).
//!
//! The toolkit covers both halves of that workflow:
//!
//! * [`ratemodel`] — closed-form expected rates (the ground truth);
//! * [`montecarlo`] — synthetic detection data, in a fast aggregate mode
//!   and a per-pulse timestamp mode;
//! * [`coincidence`] — histogram analysis: peak fits, windowed counts, CAR;
//! * [`fitting`] — weighted quadratic fits with coefficient covariance;
//! * [`extract`] — the dual-configuration `gamma_eff` estimator, immune to
//!   the imbalance of the two grating couplers, plus the naive
//!   single-configuration estimate for comparison;
//! * [`sweep`] — the experimental protocol and end-to-end pipeline;
//! * [`config`] / [`dataio`] — the TOML run configuration and the CSV/TOML
//!   file formats of datasets and reports.

pub mod coincidence;
pub mod config;
pub mod dataio;
pub mod error;
pub mod extract;
pub mod fitting;
pub mod math;
pub mod montecarlo;
pub mod ratemodel;
pub mod sweep;

pub use error::{Error, Result};
pub use ratemodel::{Channel, IoConfig, SourceParams};
