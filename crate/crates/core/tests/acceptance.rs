//! Acceptance suite for the library: each test checks one release
//! criterion end to end at its stated tolerance and prints a PASS line.
//!
//! Run with `cargo test -p pairchar --test acceptance -- --nocapture` to
//! see the criterion summary lines.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use pairchar::coincidence::{
    compute_car, fit_gaussian_peak, gaussian_window_capture, window_counts, Histogram,
};
use pairchar::extract::{gamma_dual_config, gamma_single_config};
use pairchar::fitting::{FitTriplet, QuadFit};
use pairchar::math::{mean, sample_sd, standard_error, FWHM_PER_SIGMA};
use pairchar::montecarlo::{
    simulate_point_aggregate, simulate_point_perpulse, TaggerSpec,
};
use pairchar::ratemodel::{
    coincidence_quad_coeffs, expected_accidental_rate, expected_coincidence_rate,
    expected_singles_rate, singles_quad_coeffs, Channel, IoConfig, SourceParams,
};
use pairchar::sweep::{default_plan, run_pipeline, AnalysisSettings, CharacterizationReport};

/// Device analog used across the suite: 20 dB total coupling split evenly,
/// 4 dB collection path per channel, 50 MHz pump, 1.2 ns pair jitter, and
/// leakage around 1e2 Hz observed.
fn device_fixture(gamma_mhz_per_mw2: f64) -> SourceParams {
    SourceParams {
        gamma_eff_mhz_per_mw2: gamma_mhz_per_mw2,
        eta_gc_a: 0.1,
        eta_gc_b: 0.1,
        eta_path_s: 10f64.powf(-0.4),
        eta_path_i: 10f64.powf(-0.4),
        leak_s_hz_per_mw: 2.5e4,
        leak_i_hz_per_mw: 2.5e4,
        dark_s_hz: 200.0,
        dark_i_hz: 200.0,
        rep_rate_hz: 50e6,
        jitter_fwhm_s: 1.2e-9,
    }
}

fn analytic_triplet(params: &SourceParams, config: IoConfig) -> FitTriplet {
    let (a_s, _, _) = singles_quad_coeffs(params, config, Channel::Signal);
    let (a_i, _, _) = singles_quad_coeffs(params, config, Channel::Idler);
    let (a_si, _, _) = coincidence_quad_coeffs(params, config);
    FitTriplet {
        signal: QuadFit::from_coefficients(a_s, 0.0, 0.0),
        idler: QuadFit::from_coefficients(a_i, 0.0, 0.0),
        coincidence: QuadFit::from_coefficients(a_si, 0.0, 0.0),
    }
}

/// Criterion 1 — closed-form identity suite: analytic coefficients fed
/// through the dual-configuration estimator recover gamma to 1e-10
/// relative over random parameter draws.
#[test]
fn criterion_1_closed_form_identities() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let gamma = rng.random_range(0.1..200.0);
        let params = SourceParams {
            gamma_eff_mhz_per_mw2: gamma,
            eta_gc_a: rng.random_range(0.005..0.5),
            eta_gc_b: rng.random_range(0.005..0.5),
            eta_path_s: rng.random_range(0.001..0.5),
            eta_path_i: rng.random_range(0.001..0.5),
            leak_s_hz_per_mw: rng.random_range(0.0..1e5),
            leak_i_hz_per_mw: rng.random_range(0.0..1e5),
            dark_s_hz: rng.random_range(0.0..2e3),
            dark_i_hz: rng.random_range(0.0..2e3),
            rep_rate_hz: 50e6,
            jitter_fwhm_s: 1.2e-9,
        };
        let est = gamma_dual_config(
            &analytic_triplet(&params, IoConfig::A),
            &analytic_triplet(&params, IoConfig::B),
            params.eta_coupling(),
            0.0,
        )
        .unwrap();
        let rel = (est.value_mhz_per_mw2 - gamma).abs() / gamma;
        worst = worst.max(rel);
        assert!(rel <= 1e-10, "relative error {rel} at gamma {gamma}");
    }
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 1.0, "criterion 1 took {dt:?} (budget 1 s)");
    println!(
        "PASS criterion 1: dual-config identity exact on 100 random draws \
         (worst rel err {worst:.2e}, {dt:.2?})"
    );
}

struct RoundTrip {
    reports: Vec<CharacterizationReport>,
    within_3sigma: usize,
    median_rel_err: f64,
}

fn roundtrip_at_scale(gamma_true: f64, n_seeds: u64, seed_base: u64) -> RoundTrip {
    let params = device_fixture(gamma_true);
    let plan = default_plan(3.0).unwrap();
    let analysis = AnalysisSettings::default();
    let mut reports = Vec::new();
    let mut rel_errs = Vec::new();
    let mut within = 0;
    for i in 0..n_seeds {
        let report = run_pipeline(&params, &plan, &analysis, seed_base + i).unwrap();
        {
            let g = report.gamma_dual.as_ref().expect("dual extraction");
            let err = (g.value_mhz_per_mw2 - gamma_true).abs();
            if err < 3.0 * g.sigma_mhz_per_mw2 {
                within += 1;
            }
            rel_errs.push(err / gamma_true);
        }
        reports.push(report);
    }
    rel_errs.sort_by(f64::total_cmp);
    RoundTrip {
        reports,
        within_3sigma: within,
        median_rel_err: rel_errs[rel_errs.len() / 2],
    }
}

/// Criterion 2 — round trip at experimental scale, ring analog
/// (gamma = 14.7 MHz/mW^2): 12 powers from 0.3 mW, 10 repeats, both
/// configurations, aggregate simulation; the extracted gamma lands within
/// 3 sigma in at least 95 of 100 seeds with median relative error <= 15%.
#[test]
fn criterion_2_round_trip_ring_scale() {
    let start = Instant::now();
    let rt = roundtrip_at_scale(14.7, 100, 10_000);
    let dt = start.elapsed();
    assert!(
        rt.within_3sigma >= 95,
        "only {}/100 seeds within 3 sigma",
        rt.within_3sigma
    );
    assert!(
        rt.median_rel_err <= 0.15,
        "median relative error {} > 0.15",
        rt.median_rel_err
    );
    assert!(dt.as_secs_f64() < 120.0, "criterion 2 took {dt:?} (budget 2 min)");
    println!(
        "PASS criterion 2: ring-scale round trip ({} / 100 within 3 sigma, \
         median rel err {:.3}, {dt:.2?})",
        rt.within_3sigma, rt.median_rel_err
    );
}

/// Criterion 3 — round trip with gamma = 2.0 MHz/mW^2 (waveguide analog),
/// plus error calibration: the pull (a_hat - a_true)/sigma_a of each of
/// the six quadratic coefficients has |mean| < 0.3 and sd in [0.7, 1.4]
/// over 100 seeds.
#[test]
fn criterion_3_round_trip_waveguide_scale_with_pull_calibration() {
    let start = Instant::now();
    let gamma_true = 2.0;
    let rt = roundtrip_at_scale(gamma_true, 100, 20_000);
    assert!(
        rt.within_3sigma >= 95,
        "only {}/100 seeds within 3 sigma",
        rt.within_3sigma
    );
    assert!(
        rt.median_rel_err <= 0.15,
        "median relative error {} > 0.15",
        rt.median_rel_err
    );

    let params = device_fixture(gamma_true);
    let mut worst = (0.0f64, 1.0f64);
    for config in IoConfig::BOTH {
        let (a_s, _, _) = singles_quad_coeffs(&params, config, Channel::Signal);
        let (a_i, _, _) = singles_quad_coeffs(&params, config, Channel::Idler);
        let (a_si, _, _) = coincidence_quad_coeffs(&params, config);
        for (label, a_true, pick) in [
            ("signal", a_s, 0usize),
            ("idler", a_i, 1),
            ("coincidence", a_si, 2),
        ] {
            let pulls: Vec<f64> = rt
                .reports
                .iter()
                .map(|r| {
                    let cr = r
                        .per_config
                        .iter()
                        .find(|c| c.config == config)
                        .expect("config present");
                    let fit = match pick {
                        0 => &cr.fits.signal,
                        1 => &cr.fits.idler,
                        _ => &cr.fits.coincidence,
                    };
                    (fit.a_hz_per_mw2 - a_true) / fit.sigma_a()
                })
                .collect();
            let m = mean(&pulls);
            let sd = sample_sd(&pulls);
            assert!(
                m.abs() < 0.3,
                "pull mean {m:.3} for {label} a (config {config})"
            );
            assert!(
                (0.7..=1.4).contains(&sd),
                "pull sd {sd:.3} for {label} a (config {config})"
            );
            if m.abs() > worst.0 {
                worst.0 = m.abs();
            }
            if (sd - 1.0).abs() > (worst.1 - 1.0).abs() {
                worst.1 = sd;
            }
        }
    }
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 120.0, "criterion 3 took {dt:?} (budget 2 min)");
    println!(
        "PASS criterion 3: waveguide-scale round trip ({} / 100 within 3 sigma, \
         median rel err {:.3}; worst pull mean {:.3}, extreme pull sd {:.3}, {dt:.2?})",
        rt.within_3sigma, rt.median_rel_err, worst.0, worst.1
    );
}

/// Criterion 4 — coupler-imbalance bias demonstration on analytic
/// coefficients: with eta_A/eta_B = 9 at fixed product 0.01, the naive
/// single-configuration estimates are biased by exactly 9 and 1/9 while
/// the dual-configuration estimate stays exact (1e-10 relative).
#[test]
fn criterion_4_coupler_imbalance_bias() {
    let start = Instant::now();
    let gamma_true = 14.7;
    let mut params = device_fixture(gamma_true);
    params.eta_gc_a = 0.3;
    params.eta_gc_b = 0.1 / 3.0;
    assert!((params.eta_coupling() - 0.01).abs() < 1e-15);
    let balanced_guess = params.eta_coupling().sqrt();

    let ta = analytic_triplet(&params, IoConfig::A);
    let tb = analytic_triplet(&params, IoConfig::B);

    let single_a =
        gamma_single_config(&ta.signal, &ta.idler, &ta.coincidence, balanced_guess).unwrap();
    let bias_a = single_a.value_mhz_per_mw2 / gamma_true;
    assert!((bias_a - 9.0).abs() <= 9.0 * 1e-10, "config A bias {bias_a}");

    let single_b =
        gamma_single_config(&tb.signal, &tb.idler, &tb.coincidence, balanced_guess).unwrap();
    let bias_b = single_b.value_mhz_per_mw2 / gamma_true;
    assert!(
        (bias_b - 1.0 / 9.0).abs() <= 1e-10 / 9.0,
        "config B bias {bias_b}"
    );

    let dual = gamma_dual_config(&ta, &tb, params.eta_coupling(), 0.0).unwrap();
    let rel = (dual.value_mhz_per_mw2 - gamma_true).abs() / gamma_true;
    assert!(rel <= 1e-10, "dual-config rel err {rel}");

    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 1.0, "criterion 4 took {dt:?} (budget 1 s)");
    println!(
        "PASS criterion 4: single-config biased x9 / x(1/9) under 9:1 coupler \
         imbalance, dual-config exact (rel err {rel:.2e}, {dt:.2?})"
    );
}

/// `E[1/Z | Z >= 1]` for `Z ~ Poisson(lambda)`, by direct enumeration of
/// the probability mass function.
fn poisson_inverse_moment_nonzero(lambda: f64) -> f64 {
    let p0 = (-lambda).exp();
    let mut p = p0;
    let mut num = 0.0;
    let kmax = (2.0 * lambda + 20.0 * lambda.sqrt() + 50.0) as usize;
    for k in 1..=kmax {
        p *= lambda / k as f64;
        num += p / k as f64;
    }
    num / (1.0 - p0)
}

/// Criterion 5 — CAR pipeline at the lowest operating power: per-pulse
/// simulation at 0.3 mW with the duration scaled so the expected central
/// window holds ~60 counts. The mean CAR over 100 seeds matches the
/// enumeration oracle built on the analytic CC/ACC rates within 3 combined
/// standard errors, and the propagated uncertainty in the sparse-counts
/// regime (N_c = 66, N_a = 2) comes out at the ~20 scale such counts imply.
#[test]
fn criterion_5_car_pipeline() {
    let start = Instant::now();
    // Noise-raised fixture so the accidental windows are populated: a
    // low-CAR regime is loss/noise dominated.
    let mut params = device_fixture(14.7);
    params.dark_s_hz = 15_000.0;
    params.dark_i_hz = 15_000.0;
    let config = IoConfig::A;
    let power = 0.3;
    let window_s = 2e-9;
    let period = params.rep_period_s();
    let tagger = TaggerSpec::default();

    let cc = expected_coincidence_rate(&params, config, power).unwrap();
    let acc = expected_accidental_rate(&params, config, power).unwrap();
    let capture = gaussian_window_capture(window_s, params.jitter_fwhm_s);
    // Scale the duration for ~60 expected central-window counts.
    let duration = 60.0 / ((cc + acc) * capture);
    let n_pulses = (duration * params.rep_rate_hz).round() as u64;
    let lambda_c = (cc + acc) * duration * capture;
    let lambda_a_each = acc * duration * capture;
    assert!((lambda_c - 60.0).abs() < 0.5, "lambda_c = {lambda_c}");

    // Oracle: car = 2 N_c / (X1 + X2) - 1 with N_c ~ Poisson(lambda_c)
    // and X1 + X2 ~ Poisson(2 lambda_a_each), so
    // E[car | X1 + X2 >= 1] = 2 lambda_c E[1/Z | Z >= 1] - 1.
    let predicted = 2.0 * lambda_c * poisson_inverse_moment_nonzero(2.0 * lambda_a_each) - 1.0;

    for (mode, cars) in [
        ("per-pulse", {
            let mut cars = Vec::new();
            for seed in 0..100 {
                let rec = simulate_point_perpulse(
                    &params,
                    config,
                    power,
                    n_pulses,
                    0x5000 + seed,
                    &tagger,
                )
                .unwrap();
                let est = compute_car(&rec.histogram, period, window_s).unwrap();
                cars.push(est.car);
            }
            cars
        }),
        ("aggregate", {
            let mut cars = Vec::new();
            for seed in 0..100 {
                let rec = simulate_point_aggregate(
                    &params,
                    config,
                    power,
                    duration,
                    0x6000 + seed,
                    &tagger,
                )
                .unwrap();
                let est = compute_car(&rec.histogram, period, window_s).unwrap();
                cars.push(est.car);
            }
            cars
        }),
    ] {
        let m = mean(&cars);
        let se = standard_error(&cars);
        let z = (m - predicted) / se;
        assert!(
            z.abs() < 3.0,
            "{mode}: mean CAR {m:.3} vs predicted {predicted:.3} (z = {z:.2})"
        );
        println!(
            "  criterion 5 [{mode}]: mean CAR {m:.3} vs oracle {predicted:.3} (z = {z:+.2})"
        );
    }

    // Sparse-counts regime: N_c = 66, N_a = 2 per side peak. The Poisson
    // propagation gives car = 32, sigma = sqrt(66/4 + 66^2*2/16) = 23.69 —
    // error bars comparable to the value itself, as such counts imply.
    let mut h = Histogram::new(-70e-9, 0.1e-9, 1400).unwrap();
    h.add_to_bin(700, 66); // central peak, just right of delay 0
    h.add_to_bin(500, 2); // -20 ns peak
    h.add_to_bin(900, 2); // +20 ns peak
    let est = compute_car(&h, period, window_s).unwrap();
    assert_eq!(est.central_counts, 66);
    assert!((est.car - 32.0).abs() < 1e-12);
    assert!((est.sigma_car - 561.0f64.sqrt()).abs() < 1e-9);
    assert!(
        est.sigma_car > 10.0 && est.sigma_car < 40.0,
        "sigma {} not the expected order",
        est.sigma_car
    );

    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 120.0, "criterion 5 took {dt:?} (budget 2 min)");
    println!(
        "PASS criterion 5: CAR pipeline matches the enumeration oracle; \
         sparse-regime sigma {:.1} at car 32 ({dt:.2?})",
        est.sigma_car
    );
}

/// Criterion 6 — Gaussian peak recovery: Poisson-noisy synthetic
/// histograms with 1.2 ns FWHM and >= 1e3 counts; the fitted FWHM lands
/// within 10% in at least 95 of 100 seeds.
#[test]
fn criterion_6_gaussian_peak_recovery() {
    let start = Instant::now();
    let fwhm = 1.2e-9;
    let sigma = fwhm / FWHM_PER_SIGMA;
    let total = 1500.0;
    let baseline = 0.5;
    let n_bins = 200;
    let bin_w = 0.1e-9;
    let origin = -10e-9;

    let mut ok = 0;
    let mut total_counts_min = u64::MAX;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC6 + seed);
        let mut h = Histogram::new(origin, bin_w, n_bins).unwrap();
        for i in 0..n_bins {
            let lo = origin + i as f64 * bin_w;
            let p = pairchar::math::gaussian_interval_prob(lo, lo + bin_w, 0.0, sigma);
            let lam = total * p + baseline;
            let draw: f64 = Poisson::new(lam).unwrap().sample(&mut rng);
            h.add_to_bin(i, draw as u64);
        }
        total_counts_min = total_counts_min.min(h.total());
        let fit = fit_gaussian_peak(&h, 0.0).unwrap();
        if (fit.fwhm_s() - fwhm).abs() <= 0.10 * fwhm {
            ok += 1;
        }
    }
    assert!(total_counts_min >= 1000, "fixture too sparse: {total_counts_min}");
    assert!(ok >= 95, "only {ok}/100 fits within 10% of the true FWHM");
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 10.0, "criterion 6 took {dt:?} (budget 10 s)");
    println!("PASS criterion 6: Gaussian FWHM recovery {ok}/100 within 10% ({dt:.2?})");
}

/// Criterion 7 — oracle equivalence on a 3-power grid at 1e7 pulses:
/// aggregate and per-pulse means agree within 3 combined standard errors,
/// and both agree with the analytic rate model (|z| < 4), for signal
/// singles, idler singles, and central-peak counts.
#[test]
fn criterion_7_oracle_equivalence() {
    let start = Instant::now();
    let params = device_fixture(14.7);
    let config = IoConfig::A;
    let tagger = TaggerSpec::default();
    let n_pulses: u64 = 10_000_000;
    let duration = n_pulses as f64 / params.rep_rate_hz;
    let period = params.rep_period_s();
    let n_seeds = 50;

    for power in [0.3, 1.0, 3.0] {
        let s_s = expected_singles_rate(&params, config, Channel::Signal, power).unwrap();
        let s_i = expected_singles_rate(&params, config, Channel::Idler, power).unwrap();
        let cc = expected_coincidence_rate(&params, config, power).unwrap();
        let acc = expected_accidental_rate(&params, config, power).unwrap();
        let analytic = [s_s * duration, s_i * duration, (cc + acc) * duration];

        let mut agg = [Vec::new(), Vec::new(), Vec::new()];
        let mut pp = [Vec::new(), Vec::new(), Vec::new()];
        for seed in 0..n_seeds {
            let ra = simulate_point_aggregate(
                &params,
                config,
                power,
                duration,
                0x7A00 + seed,
                &tagger,
            )
            .unwrap();
            let rp = simulate_point_perpulse(
                &params,
                config,
                power,
                n_pulses,
                0x7B00 + seed,
                &tagger,
            )
            .unwrap();
            for (stats, rec) in [(&mut agg, &ra), (&mut pp, &rp)] {
                stats[0].push(rec.singles_s as f64);
                stats[1].push(rec.singles_i as f64);
                stats[2].push(window_counts(&rec.histogram, 0.0, period).unwrap() as f64);
            }
        }

        for (k, name) in ["singles_s", "singles_i", "central"].iter().enumerate() {
            let (ma, ea) = (mean(&agg[k]), standard_error(&agg[k]));
            let (mp, ep) = (mean(&pp[k]), standard_error(&pp[k]));
            let z_modes = (ma - mp) / (ea * ea + ep * ep).sqrt();
            assert!(
                z_modes.abs() < 3.0,
                "{name} at {power} mW: aggregate {ma:.1} vs per-pulse {mp:.1} (z = {z_modes:.2})"
            );
            let z_a = (ma - analytic[k]) / ea;
            let z_p = (mp - analytic[k]) / ep;
            assert!(
                z_a.abs() < 4.0,
                "{name} at {power} mW: aggregate z vs analytic = {z_a:.2}"
            );
            assert!(
                z_p.abs() < 4.0,
                "{name} at {power} mW: per-pulse z vs analytic = {z_p:.2}"
            );
        }
    }
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 120.0, "criterion 7 took {dt:?} (budget 2 min)");
    println!(
        "PASS criterion 7: aggregate and per-pulse modes agree with each other \
         and the rate model on the 3-power grid ({dt:.2?})"
    );
}
