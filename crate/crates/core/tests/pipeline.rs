use std::f64::consts::PI;

use cwhom::analysis::{beat_psd, fit_hom, FitModel, Freedom};
use cwhom::cli::preset_config;
use cwhom::correlator::{correlate, correlate_segmented, normalize, singles_stats, HistogramSpec, NormalizedFringe, Wing};
use cwhom::lasersim::{run_experiment, synthesize_field, DetectorSpec, ExperimentConfig, SourceSpec};
use cwhom::Lineshape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const LOR: Lineshape = Lineshape::Lorentzian { fwhm: 2.2e6 };

fn lorentzian_config(rates: (f64, f64), overlap: f64, duration: f64, seed: u64) -> ExperimentConfig {
    let source = |rate, s| SourceSpec { detuning: 0.0, lineshape: LOR, mean_rate: rate, extra_delay: 0.0, rng_seed: s };
    ExperimentConfig {
        source_1: source(rates.0, 2 * seed + 1),
        source_2: source(rates.1, 2 * seed + 2),
        detector_a: DetectorSpec::default(),
        detector_b: DetectorSpec::default(),
        mode_overlap: overlap,
        duration,
        sample_dt: 2e-9,
    }
}

fn synthetic(v: f64, tau_c: f64, dw: f64, noise: f64, seed: u64) -> NormalizedFringe {
    let spec = HistogramSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<f64> = (0..spec.bin_count()).map(|i| spec.bin_center(i)).collect();
    let values = centers
        .iter()
        .map(|&t| 1.0 - v * (-t.abs() / tau_c).exp() * (dw * t).cos() + noise * rng.sample::<f64, _>(StandardNormal))
        .collect();
    NormalizedFringe {
        errors: vec![noise.max(1e-3); centers.len()],
        centers,
        values,
        counts: None,
        baseline: 1.0,
        bin_width: spec.bin_width(),
    }
}

#[test]
fn noiseless_round_trip_grid() {
    let model = FitModel::effective_lorentzian().with_delta_omega(Freedom::Free);
    for v in [0.2, 0.35, 0.5] {
        for tau_c in [150e-9, 296e-9, 500e-9] {
            for df in [1.5e6, 3.5e6, 6.0e6] {
                let dw = 2.0 * PI * df;
                let fit = fit_hom(&synthetic(v, tau_c, dw, 0.0, 0), &model, None)
                    .unwrap_or_else(|e| panic!("V={v} tau={tau_c} df={df}: {e}"));
                let rel = |got: f64, want: f64| ((got - want) / want).abs();
                assert!(rel(fit.visibility().value, v) < 1e-4, "V {v} {tau_c} {df}: {}", fit.visibility().value);
                assert!(rel(fit.tau_c().unwrap().value, tau_c) < 1e-4, "tau {v} {tau_c} {df}");
                assert!(rel(fit.delta_omega().unwrap().value, dw) < 1e-4, "dw {v} {tau_c} {df}");
            }
        }
    }
}

#[test]
fn mirrored_fringe_gives_same_beat() {
    let fringe = synthetic(0.4, 250e-9, 2.0 * PI * 3.5e6, 0.02, 9);
    let mut mirrored = fringe.clone();
    mirrored.values.reverse();
    mirrored.errors.reverse();
    let model = FitModel::effective_lorentzian().with_delta_omega(Freedom::Free);
    let a = fit_hom(&fringe, &model, None).unwrap();
    let b = fit_hom(&mirrored, &model, None).unwrap();
    let (wa, wb) = (a.delta_omega().unwrap().value, b.delta_omega().unwrap().value);
    assert!(((wa - wb) / wa).abs() < 1e-3, "{wa} vs {wb}");
    assert!((wa / (2.0 * PI) - 3.5e6).abs() < 0.05e6);
}

#[test]
fn rank_deficiency_is_reported_not_guessed() {
    let flat = synthetic(0.0, 250e-9, 0.0, 0.01, 3);
    let model = FitModel::effective_lorentzian().with_delta_omega(Freedom::Free);
    let err = fit_hom(&flat, &model, None).unwrap_err();
    assert!(err.is_convergence(), "{err}");
}

#[test]
fn uncertainties_shrink_with_duration() {
    let spec = HistogramSpec::new(2000, 2_000_000).unwrap();
    let model = FitModel::physical(LOR, LOR);
    let sigma = |duration: f64, seed: u64| {
        let run = run_experiment(&lorentzian_config((1e6, 1e6), 1.0, duration, seed)).unwrap();
        let h = correlate(&run.events_a, &run.events_b, &spec).unwrap();
        let f = normalize(&h, Wing::outer_half(&spec)).unwrap();
        fit_hom(&f, &model, None).unwrap().visibility().sigma
    };
    let seeds = 0..10u64;
    let short: f64 = seeds.clone().map(|s| sigma(0.02, s)).sum::<f64>() / 10.0;
    let long: f64 = seeds.map(|s| sigma(0.04, 100 + s)).sum::<f64>() / 10.0;
    let ratio = short / long;
    assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "sigma ratio {ratio}");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let config = lorentzian_config((5e5, 5e5), 0.9, 0.01, 5);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_experiment(&config)).unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(|| run_experiment(&config)).unwrap();
    assert_eq!(one.events_a, three.events_a);
    assert_eq!(one.events_b, three.events_b);
    let spec = HistogramSpec::default();
    let h1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| correlate_segmented(&one.events_a, &one.events_b, &spec, 1_000_000_000)).unwrap();
    let h3 = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(|| correlate_segmented(&one.events_a, &one.events_b, &spec, 1_000_000_000)).unwrap();
    assert_eq!(h1.counts, h3.counts);
}

#[test]
fn preset_singles_rate_and_dead_time() {
    let mut config = preset_config("fig3").unwrap().experiment.unwrap();
    config.duration = 0.05;
    let run = run_experiment(&config).unwrap();
    for (events, det) in [(&run.events_a, &config.detector_a), (&run.events_b, &config.detector_b)] {
        let stats = singles_stats(events, det, run.metadata.duration);
        assert!((stats.rate / 5e5 - 1.0).abs() < 0.02, "singles {}", stats.rate);
        assert_eq!(stats.dead_time_violations, 0);
        assert!(stats.min_gap.unwrap() >= 22e-9 - 1e-12);
    }
}

#[test]
fn fitted_visibility_tracks_overlap_and_balance() {
    let mut config = lorentzian_config((3e5, 7e5), 0.8, 0.1, 21);
    config.detector_a = DetectorSpec::ideal();
    config.detector_b = DetectorSpec::ideal();
    let expected = config.expected_visibility();
    assert!((expected - 2.0 * 0.64 * 0.21).abs() < 1e-12);
    let run = run_experiment(&config).unwrap();
    let spec = HistogramSpec::new(1000, 2_000_000).unwrap();
    let f = normalize(&correlate(&run.events_a, &run.events_b, &spec).unwrap(), Wing::outer_half(&spec)).unwrap();
    let v = fit_hom(&f, &FitModel::physical(LOR, LOR), None).unwrap();
    let est = v.visibility();
    assert!((est.value - expected).abs() < 3.0 * est.sigma + 0.005, "{} +/- {} vs {expected}", est.value, est.sigma);
}

#[test]
fn beat_psd_has_unit_area() {
    let laser = SourceSpec { detuning: 1e6, lineshape: LOR, mean_rate: 1.0, extra_delay: 0.0, rng_seed: 3 };
    let reference = SourceSpec { lineshape: Lineshape::Lorentzian { fwhm: 0.0 }, detuning: 0.0, ..laser.clone() };
    let dt = 2e-9;
    let psd = beat_psd(
        synthesize_field(&laser, 20e-3, dt, 1).unwrap(),
        synthesize_field(&reference, 20e-3, dt, 2).unwrap(),
        dt,
        4096,
        0.5,
    )
    .unwrap();
    assert!((psd.area() - 1.0).abs() < 0.02, "area {}", psd.area());
    assert!((psd.peak_frequency() - 1e6).abs() < 0.5e6);
}
