//! Synthetic detection data for a pulsed pair source.
//!
//! Two generators, one statistical contract:
//!
//! * **Aggregate mode** draws the per-point totals directly — singles as
//!   Poisson counts, each pulse-aligned histogram peak as a Poisson count
//!   spread over bins by the pair timing jitter. A full power sweep runs in
//!   milliseconds, which matters because a real measurement integrates
//!   ~1e10 pulses per point.
//! * **Per-pulse mode** generates pair and noise clicks pulse by pulse with
//!   timestamps, detects them by independent thinning, and correlates the
//!   two click streams into the delay histogram. It is the validation-grade
//!   generator: multi-pair and broken-pair accidentals emerge on their own
//!   instead of being inserted from the closed form.
//!
//! Both modes agree with the rate model in expectation, and they agree with
//! each other; the test suite holds them to that.
//!
//! Every draw comes from a generator seeded per point, so sweeps are
//! reproducible and independent of the parallel schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use crate::coincidence::Histogram;
use crate::error::{Error, Result};
use crate::math::{self, FWHM_PER_SIGMA};
use crate::ratemodel::{
    expected_accidental_rate, expected_coincidence_rate, expected_singles_rate, Channel, IoConfig,
    SourceParams,
};
use crate::sweep::SweepPlan;

/// Adjacent pulse-aligned peaks simulated on each side of the central one.
pub const ADJACENT_PEAKS: i64 = 3;

/// Half-span of the delay histogram in pulse periods; covers the central
/// peak and [`ADJACENT_PEAKS`] side peaks with half a period of margin.
const HALF_SPAN_PERIODS: f64 = 3.5;

/// Time-tagger binning of the delay histogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaggerSpec {
    pub bin_width_s: f64,
}

impl Default for TaggerSpec {
    fn default() -> Self {
        // 100 ps resolves a ~1 ns jitter peak with >= 10 bins.
        TaggerSpec { bin_width_s: 100e-12 }
    }
}

impl TaggerSpec {
    /// Empty delay histogram for one pulse period. Peak delays (multiples
    /// of the period) land on bin edges, so symmetric windows around a peak
    /// never put a bin center exactly on the window boundary.
    pub fn histogram_template(&self, rep_period_s: f64) -> Result<Histogram> {
        if !self.bin_width_s.is_finite() || self.bin_width_s <= 0.0 {
            return Err(Error::Domain("bin_width_s must be > 0".into()));
        }
        let ratio = rep_period_s / self.bin_width_s;
        let bins_per_period = ratio.round();
        if bins_per_period < 1.0 || (ratio - bins_per_period).abs() > 1e-6 * bins_per_period {
            return Err(Error::Domain(format!(
                "bin width ({} s) must divide the pulse period ({} s) evenly",
                self.bin_width_s, rep_period_s
            )));
        }
        let n_half = (HALF_SPAN_PERIODS * bins_per_period).ceil() as usize;
        Histogram::new(-(n_half as f64) * self.bin_width_s, self.bin_width_s, 2 * n_half)
    }
}

/// One simulated acquisition: everything the instrument would log for a
/// single (power, repeat) point.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerPointRecord {
    pub p_laser_mw: f64,
    pub duration_s: f64,
    pub config: IoConfig,
    pub singles_s: u64,
    pub singles_i: u64,
    pub histogram: Histogram,
    /// Seed the point was generated from, for reproducibility.
    pub seed: u64,
}

/// All repeats at one power.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerGroup {
    pub p_laser_mw: f64,
    pub records: Vec<PowerPointRecord>,
}

/// Per-power repeated measurements for one input/output configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepDataset {
    config: IoConfig,
    groups: Vec<PowerGroup>,
}

impl SweepDataset {
    /// Validates the repeat structure: equal repeat counts everywhere and
    /// strictly increasing powers across groups.
    pub fn new(config: IoConfig, groups: Vec<PowerGroup>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Domain("sweep dataset has no power groups".into()));
        }
        let repeats = groups[0].records.len();
        if repeats == 0 {
            return Err(Error::Domain("power group has no records".into()));
        }
        let mut prev_power = f64::NEG_INFINITY;
        for g in &groups {
            if g.records.len() != repeats {
                return Err(Error::Domain(format!(
                    "every power must have the same repeat count \
                     ({} at {} mW, {} elsewhere)",
                    g.records.len(),
                    g.p_laser_mw,
                    repeats
                )));
            }
            if !(g.p_laser_mw > prev_power) {
                return Err(Error::Domain(format!(
                    "powers must be strictly increasing across groups \
                     ({} mW after {} mW)",
                    g.p_laser_mw, prev_power
                )));
            }
            prev_power = g.p_laser_mw;
            for r in &g.records {
                if r.p_laser_mw != g.p_laser_mw {
                    return Err(Error::Domain("record power differs from its group".into()));
                }
                if r.config != config {
                    return Err(Error::Domain("record config differs from dataset".into()));
                }
            }
        }
        Ok(SweepDataset { config, groups })
    }

    pub fn config(&self) -> IoConfig {
        self.config
    }

    pub fn groups(&self) -> &[PowerGroup] {
        &self.groups
    }

    pub fn repeats(&self) -> usize {
        self.groups[0].records.len()
    }
}

/// Derive the RNG seed of one point from the master seed and the point's
/// coordinates. Pure mixing, so results do not depend on execution order.
pub fn derive_point_seed(
    master_seed: u64,
    config: IoConfig,
    power_idx: usize,
    repeat_idx: usize,
) -> u64 {
    let config_tag: u64 = match config {
        IoConfig::A => 0x636f_6e66_6967_5f61, // "config_a"
        IoConfig::B => 0x636f_6e66_6967_5f62, // "config_b"
    };
    let s0 = math::splitmix64(master_seed ^ config_tag);
    let s1 = math::splitmix64(s0 ^ (power_idx as u64).wrapping_add(1));
    math::splitmix64(s1 ^ (repeat_idx as u64).wrapping_add(1))
}

fn poisson_u64(rng: &mut impl Rng, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(lambda).expect("lambda checked positive and finite");
    let draw: f64 = dist.sample(rng);
    draw as u64
}

/// Validate the operating point shared by both simulation modes and return
/// the expected rates (signal singles, idler singles, pair coincidences,
/// accidentals per peak).
fn point_rates(
    params: &SourceParams,
    config: IoConfig,
    p_laser_mw: f64,
) -> Result<(f64, f64, f64, f64)> {
    params.validate()?;
    let mu = params.mean_pairs_per_pulse(config, p_laser_mw);
    if mu >= 0.5 {
        return Err(Error::Regime { mu });
    }
    let s_s = expected_singles_rate(params, config, Channel::Signal, p_laser_mw)?;
    let s_i = expected_singles_rate(params, config, Channel::Idler, p_laser_mw)?;
    let cc = expected_coincidence_rate(params, config, p_laser_mw)?;
    let acc = expected_accidental_rate(params, config, p_laser_mw)?;
    Ok((s_s, s_i, cc, acc))
}

/// Spread a Poisson-mean `lambda` of events over the histogram bins around
/// `center_s` with a Gaussian profile.
///
/// Bin occupancies of a binned Poisson process are independent Poisson
/// variables with mean `lambda * p_bin`, so drawing them per bin is
/// distributionally identical to drawing each event's delay and binning it,
/// at a fraction of the cost. Tails beyond eight sigma are dropped
/// (probability < 1e-15).
fn fill_gaussian_peak(
    hist: &mut Histogram,
    rng: &mut impl Rng,
    center_s: f64,
    sigma_s: f64,
    lambda: f64,
) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let reach = 8.0 * sigma_s;
    let lo_t = (center_s - reach).max(hist.origin_s());
    let hi_t = (center_s + reach).min(hist.end_s());
    if lo_t >= hi_t {
        return 0;
    }
    let w = hist.bin_width_s();
    let i_lo = ((lo_t - hist.origin_s()) / w).floor().max(0.0) as usize;
    let i_hi = (((hi_t - hist.origin_s()) / w).ceil() as usize).min(hist.len());
    let mut total = 0;
    for i in i_lo..i_hi {
        let edge_lo = hist.origin_s() + i as f64 * w;
        let p = math::gaussian_interval_prob(edge_lo, edge_lo + w, center_s, sigma_s);
        let n = poisson_u64(rng, lambda * p);
        hist.add_to_bin(i, n);
        total += n;
    }
    total
}

/// Draw one acquisition by sampling the aggregate statistics directly.
///
/// Singles are Poisson with the model rates; the central histogram peak is
/// Poisson with mean `(CC + ACC) * duration`, each adjacent peak Poisson
/// with mean `ACC * duration`, all spread by the pair-jitter Gaussian.
/// Coincidences consume one click in each channel, so the singles totals
/// are composed as (histogram total) + independent Poisson remainder, which
/// keeps the marginals exact and guarantees `singles >= histogram total`.
pub fn simulate_point_aggregate(
    params: &SourceParams,
    config: IoConfig,
    p_laser_mw: f64,
    duration_s: f64,
    seed: u64,
    tagger: &TaggerSpec,
) -> Result<PowerPointRecord> {
    if !duration_s.is_finite() || duration_s <= 0.0 {
        return Err(Error::Domain(format!(
            "duration_s must be > 0 (got {duration_s})"
        )));
    }
    let (s_s, s_i, cc, acc) = point_rates(params, config, p_laser_mw)?;
    if duration_s * params.rep_rate_hz < 1.0 {
        return Err(Error::Domain(
            "duration must cover at least one pump pulse".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut histogram = tagger.histogram_template(params.rep_period_s())?;
    let sigma_diff = params.jitter_fwhm_s / FWHM_PER_SIGMA;
    let period = params.rep_period_s();

    let mut hist_total = 0u64;
    let mut hist_expected = 0.0;
    for k in -ADJACENT_PEAKS..=ADJACENT_PEAKS {
        let lambda = if k == 0 {
            (cc + acc) * duration_s
        } else {
            acc * duration_s
        };
        hist_total += fill_gaussian_peak(&mut histogram, &mut rng, k as f64 * period, sigma_diff, lambda);
        hist_expected += lambda;
    }

    let singles_s = hist_total + poisson_u64(&mut rng, (s_s * duration_s - hist_expected).max(0.0));
    let singles_i = hist_total + poisson_u64(&mut rng, (s_i * duration_s - hist_expected).max(0.0));

    Ok(PowerPointRecord {
        p_laser_mw,
        duration_s,
        config,
        singles_s,
        singles_i,
        histogram,
        seed,
    })
}

/// Per-pulse output with the raw click timestamps, for validation work
/// that needs more than the binned histogram.
#[derive(Debug, Clone)]
pub struct PerPulseOutput {
    pub record: PowerPointRecord,
    pub signal_timestamps_s: Vec<f64>,
    pub idler_timestamps_s: Vec<f64>,
}

/// Draw one acquisition pulse by pulse.
///
/// Pair counts per pulse are Poisson with the low-gain mean; each generated
/// pair survives to signal/idler detection independently with the two
/// collection efficiencies. Leakage and dark clicks arrive per pulse window
/// at their observed rates. Every click gets a timestamp of pulse epoch
/// plus per-channel Gaussian jitter sized so the signal-idler difference
/// has the configured FWHM, and the histogram is built from all
/// signal-idler timestamp differences in range.
pub fn simulate_point_perpulse(
    params: &SourceParams,
    config: IoConfig,
    p_laser_mw: f64,
    n_pulses: u64,
    seed: u64,
    tagger: &TaggerSpec,
) -> Result<PowerPointRecord> {
    Ok(simulate_point_perpulse_timestamps(params, config, p_laser_mw, n_pulses, seed, tagger)?
        .record)
}

pub fn simulate_point_perpulse_timestamps(
    params: &SourceParams,
    config: IoConfig,
    p_laser_mw: f64,
    n_pulses: u64,
    seed: u64,
    tagger: &TaggerSpec,
) -> Result<PerPulseOutput> {
    if n_pulses == 0 {
        return Err(Error::Domain("n_pulses must be >= 1".into()));
    }
    let (s_s, s_i, _, _) = point_rates(params, config, p_laser_mw)?;
    let mu = params.mean_pairs_per_pulse(config, p_laser_mw);
    let period = params.rep_period_s();
    let duration_s = n_pulses as f64 * period;

    let eta1 = params.eta_collection(config, Channel::Signal);
    let eta2 = params.eta_collection(config, Channel::Idler);
    // Per-channel jitter; the difference of two independent draws then has
    // the configured FWHM.
    let sigma_ch = params.jitter_fwhm_s / FWHM_PER_SIGMA / std::f64::consts::SQRT_2;
    // Observed noise rates (leakage after the collection path, plus darks).
    let noise_s = s_s - params.onchip_pair_rate_hz(config, p_laser_mw) * eta1;
    let noise_i = s_i - params.onchip_pair_rate_hz(config, p_laser_mw) * eta2;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, sigma_ch).expect("sigma checked positive");

    let mut ts_s: Vec<f64> = Vec::new();
    let mut ts_i: Vec<f64> = Vec::new();

    // Pair events: a total Poisson draw assigned to uniform pulse indices
    // is jointly identical to independent Poisson(mu) draws per pulse, and
    // costs O(events) instead of O(pulses).
    let n_pair_events = poisson_u64(&mut rng, mu * n_pulses as f64);
    for _ in 0..n_pair_events {
        let pulse = rng.random_range(0..n_pulses);
        let epoch = pulse as f64 * period;
        let hit_s = rng.random_bool(eta1);
        let hit_i = rng.random_bool(eta2);
        if hit_s {
            ts_s.push(epoch + jitter.sample(&mut rng));
        }
        if hit_i {
            ts_i.push(epoch + jitter.sample(&mut rng));
        }
    }
    // Noise clicks (leakage + darks), attributed to their pulse window.
    for (timestamps, rate) in [(&mut ts_s, noise_s), (&mut ts_i, noise_i)] {
        let n_noise = poisson_u64(&mut rng, rate.max(0.0) / params.rep_rate_hz * n_pulses as f64);
        for _ in 0..n_noise {
            let pulse = rng.random_range(0..n_pulses);
            timestamps.push(pulse as f64 * period + jitter.sample(&mut rng));
        }
    }

    ts_s.sort_unstable_by(f64::total_cmp);
    ts_i.sort_unstable_by(f64::total_cmp);

    // Correlate: every signal-idler pair whose delay falls in the histogram.
    let mut histogram = tagger.histogram_template(period)?;
    let lo_delay = histogram.origin_s();
    let hi_delay = histogram.end_s();
    for &t_s in &ts_s {
        // delay = t_s - t_i in [lo, hi)  <=>  t_i in (t_s - hi, t_s - lo]
        let start = ts_i.partition_point(|&t| t <= t_s - hi_delay);
        for &t_i in &ts_i[start..] {
            if t_i > t_s - lo_delay {
                break;
            }
            histogram.record_delay(t_s - t_i);
        }
    }

    let record = PowerPointRecord {
        p_laser_mw,
        duration_s,
        config,
        singles_s: ts_s.len() as u64,
        singles_i: ts_i.len() as u64,
        histogram,
        seed,
    };
    Ok(PerPulseOutput {
        record,
        signal_timestamps_s: ts_s,
        idler_timestamps_s: ts_i,
    })
}

/// Simulate a full sweep (aggregate mode) for one configuration.
///
/// Points run in parallel; each derives its own seed from the master seed
/// and its (power, repeat) coordinates, so the dataset is identical under
/// any schedule.
pub fn simulate_sweep(
    params: &SourceParams,
    plan: &SweepPlan,
    config: IoConfig,
    master_seed: u64,
    tagger: &TaggerSpec,
) -> Result<SweepDataset> {
    plan.validate()?;
    let coords: Vec<(usize, usize)> = (0..plan.powers_mw.len())
        .flat_map(|pi| (0..plan.repeats as usize).map(move |ri| (pi, ri)))
        .collect();
    let records: Vec<Result<PowerPointRecord>> = coords
        .par_iter()
        .map(|&(pi, ri)| {
            let seed = derive_point_seed(master_seed, config, pi, ri);
            simulate_point_aggregate(
                params,
                config,
                plan.powers_mw[pi],
                plan.integration_times_s[pi],
                seed,
                tagger,
            )
            .map_err(|e| {
                e.in_stage(
                    "simulate",
                    format!(
                        "config {config}, power {} mW, repeat {}",
                        plan.powers_mw[pi],
                        ri + 1
                    ),
                )
            })
        })
        .collect();

    let mut groups: Vec<PowerGroup> = plan
        .powers_mw
        .iter()
        .map(|&p| PowerGroup {
            p_laser_mw: p,
            records: Vec::with_capacity(plan.repeats as usize),
        })
        .collect();
    for ((pi, _), rec) in coords.into_iter().zip(records) {
        groups[pi].records.push(rec?);
    }
    SweepDataset::new(config, groups)
}
