//! Small numerical helpers shared across the crate: the error function,
//! Gaussian bin probabilities, sample statistics, and seed mixing.

/// FWHM of a Gaussian divided by its sigma: `2 sqrt(2 ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Error function, accurate to ~1e-15 over the real line.
///
/// Uses the Maclaurin series for |x| < 2 and the continued-fraction
/// expansion of erfc above. Both pieces are derivable from first
/// principles, so there are no opaque tabulated coefficients to trust.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let ax = x.abs();
    let val = if ax < 2.0 {
        erf_series(ax)
    } else {
        1.0 - erfc_cf(ax)
    };
    if x < 0.0 {
        -val
    } else {
        val
    }
}

fn erf_series(x: f64) -> f64 {
    // erf(x) = 2/sqrt(pi) * sum_{n>=0} (-1)^n x^(2n+1) / (n! (2n+1))
    let x2 = x * x;
    let mut power = x; // x^(2n+1) / n!
    let mut sum = x;
    for n in 1..200u32 {
        power *= -x2 / n as f64;
        let term = power / (2 * n + 1) as f64;
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    std::f64::consts::FRAC_2_SQRT_PI * sum
}

fn erfc_cf(x: f64) -> f64 {
    // erfc(x) = exp(-x^2)/sqrt(pi) * K(x) for x > 0, where
    // K(x) = 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + 2/(x + ...)))))
    // evaluated with the modified Lentz algorithm. Converges fast for x >= 2.
    const TINY: f64 = 1e-300;
    let mut f = TINY;
    let mut c = TINY;
    let mut d = 0.0;
    for j in 1..200u32 {
        let a = if j == 1 { 1.0 } else { (j - 1) as f64 / 2.0 };
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / std::f64::consts::PI.sqrt() * f
}

/// Probability mass of a normal distribution on the interval `[lo, hi]`.
pub fn gaussian_interval_prob(lo: f64, hi: f64, mean: f64, sigma: f64) -> f64 {
    debug_assert!(sigma > 0.0);
    let scale = sigma * std::f64::consts::SQRT_2;
    0.5 * (erf((hi - mean) / scale) - erf((lo - mean) / scale))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 in the denominator).
pub fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len();
    assert!(n >= 2, "sample_sd needs at least two values");
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Standard error of the mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    sample_sd(xs) / (xs.len() as f64).sqrt()
}

/// SplitMix64 mixing step. Used to derive independent per-point RNG seeds
/// from a master seed without any sequential state.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
