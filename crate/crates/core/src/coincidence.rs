//! Coincidence-histogram analysis: windowed counting, Gaussian peak
//! fitting, and the coincidence-to-accidental ratio (CAR).
//!
//! For a pulsed pump the signal-idler delay histogram shows a central peak
//! (true pairs + accidentals) and pulse-aligned side peaks that contain
//! only accidentals. The CAR subtracts the accidental level (averaged over
//! the two nearest side peaks) from the central peak and takes the ratio.

use crate::error::{Error, Result};
use crate::math::{self, FWHM_PER_SIGMA};

/// Binned signal-idler delay counts.
///
/// Bin `i` covers `[origin + i*w, origin + (i+1)*w)`. The simulators place
/// peak delays on bin *edges*, so a symmetric window around a peak never
/// puts a bin center exactly on the window boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    origin_s: f64,
    bin_width_s: f64,
    counts: Vec<u64>,
}

impl Histogram {
    pub fn new(origin_s: f64, bin_width_s: f64, n_bins: usize) -> Result<Self> {
        Self::from_counts(origin_s, bin_width_s, vec![0; n_bins])
    }

    pub fn from_counts(origin_s: f64, bin_width_s: f64, counts: Vec<u64>) -> Result<Self> {
        if !bin_width_s.is_finite() || bin_width_s <= 0.0 {
            return Err(Error::Domain(format!(
                "bin_width_s must be > 0 (got {bin_width_s})"
            )));
        }
        if !origin_s.is_finite() {
            return Err(Error::Domain("origin_s must be finite".into()));
        }
        if counts.is_empty() {
            return Err(Error::Domain("histogram needs at least one bin".into()));
        }
        Ok(Histogram {
            origin_s,
            bin_width_s,
            counts,
        })
    }

    pub fn origin_s(&self) -> f64 {
        self.origin_s
    }

    pub fn bin_width_s(&self) -> f64 {
        self.bin_width_s
    }

    pub fn end_s(&self) -> f64 {
        self.origin_s + self.bin_width_s * self.counts.len() as f64
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn bin_center_s(&self, i: usize) -> f64 {
        self.origin_s + (i as f64 + 0.5) * self.bin_width_s
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Record one delay; returns false (and drops it) when out of range.
    pub fn record_delay(&mut self, delay_s: f64) -> bool {
        let x = (delay_s - self.origin_s) / self.bin_width_s;
        if x < 0.0 || !x.is_finite() {
            return false;
        }
        let i = x as usize;
        if i >= self.counts.len() {
            return false;
        }
        self.counts[i] += 1;
        true
    }

    pub fn add_to_bin(&mut self, i: usize, n: u64) {
        self.counts[i] += n;
    }

    /// Element-wise sum of two histograms with identical geometry.
    pub fn checked_add(&self, other: &Histogram) -> Result<Histogram> {
        if self.origin_s != other.origin_s
            || self.bin_width_s != other.bin_width_s
            || self.counts.len() != other.counts.len()
        {
            return Err(Error::Domain(
                "cannot add histograms with different geometry".into(),
            ));
        }
        let counts = self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(a, b)| a + b)
            .collect();
        Histogram::from_counts(self.origin_s, self.bin_width_s, counts)
    }

    /// Sub-histogram of the bins whose centers lie within
    /// `center_s +- half_width_s`.
    pub fn slice_around(&self, center_s: f64, half_width_s: f64) -> Result<Histogram> {
        let (lo, hi) = self.window_bin_range(center_s, 2.0 * half_width_s)?;
        Histogram::from_counts(
            self.origin_s + lo as f64 * self.bin_width_s,
            self.bin_width_s,
            self.counts[lo..hi].to_vec(),
        )
    }

    /// Index range `[lo, hi)` of bins whose centers lie in the closed
    /// interval `center +- window/2`.
    fn window_bin_range(&self, center_s: f64, window_s: f64) -> Result<(usize, usize)> {
        if !window_s.is_finite() || window_s < self.bin_width_s {
            return Err(Error::Domain(format!(
                "window ({window_s} s) must span at least one bin ({} s)",
                self.bin_width_s
            )));
        }
        let lo_t = center_s - window_s / 2.0;
        let hi_t = center_s + window_s / 2.0;
        if hi_t < self.origin_s || lo_t > self.end_s() {
            return Err(Error::Domain(format!(
                "window [{lo_t}, {hi_t}] s lies outside the histogram range [{}, {}] s",
                self.origin_s,
                self.end_s()
            )));
        }
        // Bin center origin + (i + 0.5) w >= lo_t  <=>  i >= (lo_t - origin)/w - 0.5
        let lo = ((lo_t - self.origin_s) / self.bin_width_s - 0.5).ceil().max(0.0) as usize;
        let hi_f = ((hi_t - self.origin_s) / self.bin_width_s - 0.5).floor();
        let hi = if hi_f < 0.0 {
            0
        } else {
            ((hi_f as usize) + 1).min(self.counts.len())
        };
        Ok((lo.min(self.counts.len()), hi))
    }
}

/// Sum of the counts in bins whose centers lie in
/// `[center - window/2, center + window/2]` (bin-center inclusion rule;
/// partial bins are excluded).
pub fn window_counts(h: &Histogram, center_s: f64, window_s: f64) -> Result<u64> {
    let (lo, hi) = h.window_bin_range(center_s, window_s)?;
    Ok(h.counts()[lo..hi].iter().sum())
}

/// Central-peak counts minus the mean of the two first adjacent peaks,
/// each integrated over one full pulse period. Used for the
/// accidental-subtracted coincidence rate, where capturing the entire peak
/// (not just the CAR window) keeps the quadratic coefficient unbiased.
pub fn corrected_coincidence_counts(h: &Histogram, rep_period_s: f64) -> Result<f64> {
    let n_c = window_counts(h, 0.0, rep_period_s)?;
    let n_a1 = window_counts(h, -rep_period_s, rep_period_s)?;
    let n_a2 = window_counts(h, rep_period_s, rep_period_s)?;
    Ok(n_c as f64 - (n_a1 + n_a2) as f64 / 2.0)
}

/// Central-peak counts over one full pulse period, without subtraction.
pub fn raw_coincidence_counts(h: &Histogram, rep_period_s: f64) -> Result<u64> {
    window_counts(h, 0.0, rep_period_s)
}

/// Coincidence-to-accidental ratio with first-order Poisson uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct CarEstimate {
    pub car: f64,
    pub sigma_car: f64,
    /// Integration window used around each peak, seconds.
    pub window_s: f64,
    /// Windowed counts at the central peak.
    pub central_counts: u64,
    /// Mean windowed counts of the +-1 adjacent peaks.
    pub accidental_counts: f64,
}

/// CAR from a delay histogram: `(N_c - N_a) / N_a` with `N_c` the windowed
/// central-peak counts and `N_a` the mean of the windowed counts at the
/// two first adjacent peaks.
///
/// The uncertainty treats each windowed sum as Poisson:
/// `sigma^2 = N_c / N_a^2 + N_c^2 * N_a / N_a^4`.
pub fn compute_car(h: &Histogram, rep_period_s: f64, window_s: f64) -> Result<CarEstimate> {
    if !rep_period_s.is_finite() || rep_period_s <= 0.0 {
        return Err(Error::Domain("rep_period_s must be > 0".into()));
    }
    if !window_s.is_finite() || window_s <= 0.0 {
        return Err(Error::Domain("window_s must be > 0".into()));
    }
    // The histogram must span the central peak and one adjacent peak on
    // each side, windows included.
    if h.origin_s() > -rep_period_s - window_s / 2.0 || h.end_s() < rep_period_s + window_s / 2.0 {
        return Err(Error::Domain(format!(
            "histogram [{}, {}] s does not span the central and first adjacent peaks \
             (need +-{} s)",
            h.origin_s(),
            h.end_s(),
            rep_period_s + window_s / 2.0
        )));
    }
    let n_c = window_counts(h, 0.0, window_s)?;
    let n_a1 = window_counts(h, -rep_period_s, window_s)?;
    let n_a2 = window_counts(h, rep_period_s, window_s)?;
    let n_a = (n_a1 + n_a2) as f64 / 2.0;
    if n_a == 0.0 {
        return Err(Error::UndefinedCar {
            central_counts: n_c,
            accidental_counts: n_a,
        });
    }
    let n_c_f = n_c as f64;
    let car = (n_c_f - n_a) / n_a;
    let var = n_c_f / (n_a * n_a) + n_c_f * n_c_f / (n_a * n_a * n_a);
    Ok(CarEstimate {
        car,
        sigma_car: var.sqrt(),
        window_s,
        central_counts: n_c,
        accidental_counts: n_a,
    })
}

/// Result of a four-parameter Gaussian peak fit
/// `A exp(-(t - center)^2 / 2 sigma^2) + baseline`.
#[derive(Debug, Clone)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub center_s: f64,
    pub sigma_s: f64,
    pub baseline: f64,
    /// Parameter covariance in the order (amplitude, center, sigma, baseline).
    pub covariance: [[f64; 4]; 4],
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
}

impl GaussianFit {
    /// Full width at half maximum, `2 sqrt(2 ln 2) * sigma`.
    pub fn fwhm_s(&self) -> f64 {
        FWHM_PER_SIGMA * self.sigma_s
    }

    pub fn sigma_errors(&self) -> [f64; 4] {
        [
            self.covariance[0][0].max(0.0).sqrt(),
            self.covariance[1][1].max(0.0).sqrt(),
            self.covariance[2][2].max(0.0).sqrt(),
            self.covariance[3][3].max(0.0).sqrt(),
        ]
    }
}

fn gaussian_model(t: f64, p: &[f64; 4]) -> f64 {
    let [amp, center, sigma, baseline] = *p;
    let z = (t - center) / sigma;
    amp * (-0.5 * z * z).exp() + baseline
}

fn chi2_of(ts: &[f64], ys: &[f64], p: &[f64; 4]) -> f64 {
    ts.iter()
        .zip(ys)
        .map(|(&t, &y)| {
            let r = y - gaussian_model(t, p);
            r * r
        })
        .sum()
}

/// Solve a 4x4 linear system by Gaussian elimination with partial pivoting.
fn solve_4x4(a: &[[f64; 4]; 4], b: &[f64; 4]) -> Option<[f64; 4]> {
    let mut m = *a;
    let mut rhs = *b;
    for col in 0..4 {
        let mut piv = col;
        for row in col + 1..4 {
            if m[row][col].abs() > m[piv][col].abs() {
                piv = row;
            }
        }
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..4 {
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 4];
    for i in (0..4).rev() {
        let mut s = rhs[i];
        for k in i + 1..4 {
            s -= m[i][k] * x[k];
        }
        x[i] = s / m[i][i];
    }
    Some(x)
}

fn invert_4x4(a: &[[f64; 4]; 4]) -> Option<[[f64; 4]; 4]> {
    let mut inv = [[0.0; 4]; 4];
    for col in 0..4 {
        let mut e = [0.0; 4];
        e[col] = 1.0;
        let x = solve_4x4(a, &e)?;
        for row in 0..4 {
            inv[row][col] = x[row];
        }
    }
    Some(inv)
}

/// Levenberg-Marquardt fit of a Gaussian peak with a flat baseline to the
/// bin centers and counts of `h`.
///
/// `guess_center_s` seeds the peak position. The histogram should contain a
/// single peak region (slice a multi-peak histogram first, e.g. with
/// [`Histogram::slice_around`]). Needs at least five populated bins.
pub fn fit_gaussian_peak(h: &Histogram, guess_center_s: f64) -> Result<GaussianFit> {
    let n = h.len();
    let ts: Vec<f64> = (0..n).map(|i| h.bin_center_s(i)).collect();
    let ys: Vec<f64> = h.counts().iter().map(|&c| c as f64).collect();

    let populated = h.counts().iter().filter(|&&c| c > 0).count();
    if populated < 5 {
        return Err(Error::DegenerateData(format!(
            "Gaussian peak fit needs at least 5 populated bins, found {populated}"
        )));
    }

    // Initial parameter estimates from the data.
    let y_min = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let (i_max, y_max) = ys
        .iter()
        .cloned()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    if y_max <= y_min {
        return Err(Error::DegenerateData("histogram is flat".into()));
    }
    let amp0 = y_max - y_min;
    // Sigma from the width of the half-maximum region around the peak.
    let half = y_min + amp0 / 2.0;
    let mut left = i_max;
    while left > 0 && ys[left] > half {
        left -= 1;
    }
    let mut right = i_max;
    while right + 1 < n && ys[right] > half {
        right += 1;
    }
    let width_bins = (right - left).max(1) as f64;
    let sigma0 = (width_bins * h.bin_width_s() / FWHM_PER_SIGMA).max(h.bin_width_s() / 2.0);

    let mut p = [amp0, guess_center_s, sigma0, y_min];
    let mut lambda = 1e-3;
    let mut chi2 = chi2_of(&ts, &ys, &p);
    let max_iter = 200;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..max_iter {
        iterations = iter + 1;
        // Jacobian of the model wrt (amp, center, sigma, baseline).
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for (&t, &y) in ts.iter().zip(&ys) {
            let [amp, center, sigma, _] = p;
            let dz = (t - center) / sigma;
            let e = (-0.5 * dz * dz).exp();
            let j = [e, amp * e * dz / sigma, amp * e * dz * dz / sigma, 1.0];
            let r = y - gaussian_model(t, &p);
            for a in 0..4 {
                jtr[a] += j[a] * r;
                for b in 0..4 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        let mut damped = jtj;
        for (d, row) in damped.iter_mut().enumerate() {
            row[d] *= 1.0 + lambda;
        }
        let Some(step) = solve_4x4(&damped, &jtr) else {
            break;
        };
        let mut trial = p;
        for (v, s) in trial.iter_mut().zip(step.iter()) {
            *v += s;
        }
        trial[2] = trial[2].abs().max(h.bin_width_s() * 1e-3);
        let trial_chi2 = chi2_of(&ts, &ys, &trial);
        if trial_chi2 <= chi2 {
            let rel_drop = (chi2 - trial_chi2) / chi2.max(1e-300);
            p = trial;
            chi2 = trial_chi2;
            lambda = (lambda * 0.3).max(1e-12);
            let max_step = step
                .iter()
                .zip(&p)
                .map(|(s, v)| (s / v.abs().max(1e-30)).abs())
                .fold(0.0, f64::max);
            if rel_drop < 1e-12 || max_step < 1e-10 {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }

    if !converged {
        return Err(Error::FitFailure {
            iterations,
            residual_norm: chi2.sqrt(),
        });
    }
    let sigma_fit = p[2].abs();
    if sigma_fit <= 0.0 || !sigma_fit.is_finite() {
        return Err(Error::DegenerateData(
            "fitted sigma collapsed to zero".into(),
        ));
    }
    if n < 5 {
        return Err(Error::DegenerateData(
            "need at least 5 bins for a 4-parameter fit".into(),
        ));
    }
    let dof = n - 4;

    // Parameter covariance: s^2 (J^T J)^-1 at the solution.
    let mut jtj = [[0.0; 4]; 4];
    let pf = [p[0], p[1], sigma_fit, p[3]];
    for &t in &ts {
        let [amp, center, sigma, _] = pf;
        let dz = (t - center) / sigma;
        let e = (-0.5 * dz * dz).exp();
        let j = [e, amp * e * dz / sigma, amp * e * dz * dz / sigma, 1.0];
        for a in 0..4 {
            for b in 0..4 {
                jtj[a][b] += j[a] * j[b];
            }
        }
    }
    let s2 = chi2 / dof.max(1) as f64;
    let mut covariance = invert_4x4(&jtj).ok_or_else(|| Error::DegenerateData(
        "normal matrix of the converged fit is singular".into(),
    ))?;
    for row in covariance.iter_mut() {
        for v in row.iter_mut() {
            *v *= s2;
        }
    }

    Ok(GaussianFit {
        amplitude: pf[0],
        center_s: pf[1],
        sigma_s: sigma_fit,
        baseline: pf[3],
        covariance,
        chi2,
        dof,
        iterations,
    })
}

/// Expected fraction of a Gaussian peak of the given FWHM captured by a
/// centered window. Test oracle companion to [`window_counts`].
pub fn gaussian_window_capture(window_s: f64, fwhm_s: f64) -> f64 {
    let sigma = fwhm_s / FWHM_PER_SIGMA;
    math::gaussian_interval_prob(-window_s / 2.0, window_s / 2.0, 0.0, sigma)
}
