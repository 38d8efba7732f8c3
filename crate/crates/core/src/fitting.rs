//! Weighted least-squares quadratic fits of count rates versus pump power.
//!
//! Repeated measurements at each power give a rate and a standard error;
//! the fit minimizes `sum w_k (rate_k - a P_k^2 - b P_k - c)^2` with
//! `w_k = 1/std_err_k^2` and reports the full 3x3 coefficient covariance
//! `(X^T W X)^-1`. The solve goes through a Householder QR of the weighted
//! design matrix; forming normal equations would square the condition
//! number for no benefit.

use serde::{Deserialize, Serialize};

use crate::coincidence;
use crate::error::{Error, Result};
use crate::math;
use crate::montecarlo::PowerPointRecord;

/// One rate measurement with its repeat statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub p_laser_mw: f64,
    pub rate_hz: f64,
    pub std_err_hz: f64,
    pub n_repeats: usize,
    /// True when the sample spread was zero and the standard error was
    /// replaced by the Poisson floor.
    pub stderr_floored: bool,
}

/// Which rate to reduce from a group of repeated records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    Signal,
    Idler,
    /// Accidental-subtracted coincidences: central-peak counts minus the
    /// mean of the two adjacent peaks, each over a full pulse period.
    CoincidenceCorrected,
    /// Central-peak counts without subtraction (sensitivity-study mode;
    /// the accidental level then lands in the fitted constant term).
    CoincidenceRaw,
}

/// Quadratic fit `rate = a P^2 + b P + c` with coefficient covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadFit {
    pub a_hz_per_mw2: f64,
    pub b_hz_per_mw: f64,
    pub c_hz: f64,
    /// Covariance of (a, b, c).
    pub covariance: [[f64; 3]; 3],
    pub chi2: f64,
    pub dof: usize,
}

impl QuadFit {
    /// Synthetic fit from exact coefficients, zero covariance. Used by
    /// oracles and identity tests.
    pub fn from_coefficients(a: f64, b: f64, c: f64) -> Self {
        QuadFit {
            a_hz_per_mw2: a,
            b_hz_per_mw: b,
            c_hz: c,
            covariance: [[0.0; 3]; 3],
            chi2: 0.0,
            dof: 1,
        }
    }

    pub fn sigma_a(&self) -> f64 {
        self.covariance[0][0].max(0.0).sqrt()
    }

    pub fn sigma_b(&self) -> f64 {
        self.covariance[1][1].max(0.0).sqrt()
    }

    pub fn sigma_c(&self) -> f64 {
        self.covariance[2][2].max(0.0).sqrt()
    }

    pub fn evaluate(&self, p_mw: f64) -> f64 {
        self.a_hz_per_mw2 * p_mw * p_mw + self.b_hz_per_mw * p_mw + self.c_hz
    }

    /// Correlation matrix of the coefficients.
    pub fn correlation(&self) -> [[f64; 3]; 3] {
        let s = [self.sigma_a(), self.sigma_b(), self.sigma_c()];
        let mut rho = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let d = s[i] * s[j];
                rho[i][j] = if d > 0.0 { self.covariance[i][j] / d } else { 0.0 };
            }
        }
        rho
    }
}

/// The three fits of one input/output configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTriplet {
    pub signal: QuadFit,
    pub idler: QuadFit,
    pub coincidence: QuadFit,
}

/// Reduce the repeats of one power group to a rate with standard error.
///
/// Counts are converted to rates by the (common) duration; the rate is the
/// mean over repeats and the standard error is `sample sd / sqrt(n)`. When
/// the sample spread is exactly zero the error is floored at the Poisson
/// expectation `sqrt(mean counts) / duration / sqrt(n)` so the point does
/// not get infinite weight, and the point is flagged.
pub fn repeats_to_rate_point(
    records: &[PowerPointRecord],
    kind: RateKind,
    rep_period_s: f64,
) -> Result<RatePoint> {
    if records.len() < 2 {
        return Err(Error::InsufficientRepeats {
            got: records.len(),
        });
    }
    let duration = records[0].duration_s;
    if duration <= 0.0 {
        return Err(Error::Domain("duration must be > 0".into()));
    }
    let p_laser_mw = records[0].p_laser_mw;
    for r in records {
        if r.duration_s != duration {
            return Err(Error::Domain(format!(
                "repeats of one power group must share a duration \
                 ({} s vs {} s at {} mW)",
                r.duration_s, duration, p_laser_mw
            )));
        }
        if r.p_laser_mw != p_laser_mw {
            return Err(Error::Domain(
                "repeats of one power group must share a power".into(),
            ));
        }
    }

    // Per-repeat counts; also track the Poisson scale for the error floor.
    let mut counts = Vec::with_capacity(records.len());
    let mut scale_counts = Vec::with_capacity(records.len());
    for r in records {
        let (value, scale) = match kind {
            RateKind::Signal => (r.singles_s as f64, r.singles_s as f64),
            RateKind::Idler => (r.singles_i as f64, r.singles_i as f64),
            RateKind::CoincidenceCorrected => {
                let c = coincidence::corrected_coincidence_counts(&r.histogram, rep_period_s)?;
                let central = coincidence::raw_coincidence_counts(&r.histogram, rep_period_s)?;
                (c, central as f64)
            }
            RateKind::CoincidenceRaw => {
                let c = coincidence::raw_coincidence_counts(&r.histogram, rep_period_s)?;
                (c as f64, c as f64)
            }
        };
        counts.push(value);
        scale_counts.push(scale);
    }
    let rates: Vec<f64> = counts.iter().map(|c| c / duration).collect();
    let n = rates.len() as f64;
    let rate_hz = math::mean(&rates);
    let mut std_err_hz = math::standard_error(&rates);
    let mut stderr_floored = false;
    if std_err_hz == 0.0 {
        let mean_scale = math::mean(&scale_counts).max(1.0);
        std_err_hz = mean_scale.sqrt() / duration / n.sqrt();
        stderr_floored = true;
    }
    Ok(RatePoint {
        p_laser_mw,
        rate_hz,
        std_err_hz,
        n_repeats: records.len(),
        stderr_floored,
    })
}

/// Householder QR solve of the weighted quadratic design.
///
/// Returns the coefficients, the upper-triangular factor `R` (whose inverse
/// gives the covariance), and the residual chi-square.
fn qr_solve_quadratic(rows: &[[f64; 3]], rhs: &[f64]) -> Option<([f64; 3], [[f64; 3]; 3], f64)> {
    let n = rows.len();
    let mut a: Vec<[f64; 3]> = rows.to_vec();
    let mut y: Vec<f64> = rhs.to_vec();

    for k in 0..3 {
        // Householder vector for column k, rows k..n.
        let mut norm = 0.0;
        for row in a.iter().take(n).skip(k) {
            norm += row[k] * row[k];
        }
        let norm = norm.sqrt();
        if norm < 1e-290 {
            return None;
        }
        let alpha = if a[k][k] >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..n).map(|i| a[i][k]).collect();
        v[0] -= alpha;
        let v_norm2: f64 = v.iter().map(|x| x * x).sum();
        if v_norm2 > 0.0 {
            // Apply the reflection to the remaining columns and the rhs.
            for col in k..3 {
                let mut dot = 0.0;
                for (idx, vi) in v.iter().enumerate() {
                    dot += vi * a[k + idx][col];
                }
                let f = 2.0 * dot / v_norm2;
                for (idx, vi) in v.iter().enumerate() {
                    a[k + idx][col] -= f * vi;
                }
            }
            let mut dot = 0.0;
            for (idx, vi) in v.iter().enumerate() {
                dot += vi * y[k + idx];
            }
            let f = 2.0 * dot / v_norm2;
            for (idx, vi) in v.iter().enumerate() {
                y[k + idx] -= f * vi;
            }
        }
        a[k][k] = alpha;
        for row in a.iter_mut().take(n).skip(k + 1) {
            row[k] = 0.0;
        }
    }

    // Rank check on the diagonal of R against the column scale.
    let col_scale: f64 = rows
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    for k in 0..3 {
        if a[k][k].abs() <= 1e-12 * col_scale {
            return None;
        }
    }

    // Back-substitute R beta = Q^T y.
    let mut beta = [0.0; 3];
    for i in (0..3).rev() {
        let mut s = y[i];
        for j in i + 1..3 {
            s -= a[i][j] * beta[j];
        }
        beta[i] = s / a[i][i];
    }
    let chi2: f64 = y.iter().skip(3).map(|v| v * v).sum();

    let r = [
        [a[0][0], a[0][1], a[0][2]],
        [0.0, a[1][1], a[1][2]],
        [0.0, 0.0, a[2][2]],
    ];
    Some((beta, r, chi2))
}

/// Invert the upper-triangular factor and form `(X^T W X)^-1 = R^-1 R^-T`.
fn covariance_from_r(r: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut rinv = [[0.0; 3]; 3];
    for i in (0..3).rev() {
        rinv[i][i] = 1.0 / r[i][i];
        for j in i + 1..3 {
            let mut s = 0.0;
            for k in i + 1..=j {
                s += r[i][k] * rinv[k][j];
            }
            rinv[i][j] = -s / r[i][i];
        }
    }
    let mut cov = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for k in 0..3 {
                s += rinv[i][k] * rinv[j][k];
            }
            cov[i][j] = s;
        }
    }
    cov
}

/// Weighted least-squares quadratic fit of rate versus power.
///
/// Needs at least four distinct powers so the three-parameter fit retains a
/// degree of freedom for the error estimate.
pub fn weighted_quadratic_fit(points: &[RatePoint]) -> Result<QuadFit> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.p_laser_mw).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::SingularDesign(format!(
            "{} distinct powers; a quadratic fit with an error estimate needs \
             at least 4 distinct powers (add more attenuation steps)",
            distinct.len()
        )));
    }
    for p in points {
        if !(p.std_err_hz > 0.0) {
            return Err(Error::Domain(format!(
                "std_err must be > 0 at every point (got {} at {} mW)",
                p.std_err_hz, p.p_laser_mw
            )));
        }
    }

    let mut rows = Vec::with_capacity(points.len());
    let mut rhs = Vec::with_capacity(points.len());
    for p in points {
        let sw = 1.0 / p.std_err_hz;
        rows.push([sw * p.p_laser_mw * p.p_laser_mw, sw * p.p_laser_mw, sw]);
        rhs.push(sw * p.rate_hz);
    }
    let (beta, r, chi2) = qr_solve_quadratic(&rows, &rhs).ok_or_else(|| {
        Error::SingularDesign("weighted design matrix is rank deficient".into())
    })?;
    Ok(QuadFit {
        a_hz_per_mw2: beta[0],
        b_hz_per_mw: beta[1],
        c_hz: beta[2],
        covariance: covariance_from_r(&r),
        chi2,
        dof: points.len() - 3,
    })
}
