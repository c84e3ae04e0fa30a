//! Independent oracles shared by the property suites and the acceptance run.
#![allow(dead_code)]

use cwhom::correlator::HistogramSpec;
use cwhom::lasersim::{synthesize_field, SourceSpec};
use cwhom::spectral::{g1, psd_to_g1_numeric, Lineshape, PsdGrid};
use num_complex::Complex64;
use rustfft::FftPlanner;

/// All-pairs reference: delay `tb - ta` within `[-W, W]` lands in bin
/// `floor(delay / w + 1/2) + K`, computed in exact integer arithmetic.
pub fn brute_force(a: &[u64], b: &[u64], spec: &HistogramSpec) -> Vec<u64> {
    let w = spec.bin_width_ps as i128;
    let big_w = spec.window_ps as i128;
    let k = big_w / w;
    let mut counts = vec![0u64; (2 * k + 1) as usize];
    for &ta in a {
        for &tb in b {
            let d = tb as i128 - ta as i128;
            if d.abs() > big_w {
                continue;
            }
            // floor((2d + w) / 2w)
            let q = (2 * d + w).div_euclid(2 * w);
            counts[(q + k) as usize] += 1;
        }
    }
    counts
}

/// Pairs with `|tb - ta| <= window`.
pub fn pairs_in_window(a: &[u64], b: &[u64], window_ps: u64) -> u64 {
    a.iter()
        .flat_map(|&x| b.iter().map(move |&y| (y as i64 - x as i64).unsigned_abs()))
        .filter(|&d| d <= window_ps)
        .count() as u64
}

pub const FOURIER_POINTS: usize = 1 << 20;

/// Max deviation between closed-form `g1` and the inverse transform of the
/// sampled spectrum, over `|tau| <= tau_max`.
pub fn fourier_error(shape: &Lineshape, half_span: f64, tau_max: f64) -> f64 {
    let grid = PsdGrid::sample(shape, half_span, FOURIER_POINTS);
    let numeric = psd_to_g1_numeric(&grid).unwrap();
    numeric
        .iter()
        .filter(|(tau, _)| tau.abs() <= tau_max)
        .map(|(tau, z)| (z.re - g1(shape, tau).unwrap()).abs().max(z.im.abs()))
        .fold(0.0, f64::max)
}

/// One representative of each family with the grid half-span it needs:
/// Lorentzian tails call for a wide span, compact spectra do not.
pub fn fourier_cases() -> Vec<(&'static str, Lineshape, f64)> {
    vec![
        ("lorentzian", Lineshape::Lorentzian { fwhm: 2.2e6 }, 2.2e9),
        ("rectangular", Lineshape::Rectangular { width: 5.2e6 }, 110e6),
        ("gaussian", Lineshape::Gaussian { fwhm: 3.0e6 }, 110e6),
        ("fm_triangle", Lineshape::FmTriangle { intrinsic_fwhm: 1.2e6, mod_rate: 1e3, deviation: 5.0e6 }, 2.2e9),
    ]
}

pub const PHASE_DT: f64 = 2e-9;

/// `|<e*(t) e(t + k dt)>|` for `k < max_lag`, from blocks of `block`
/// samples zero-padded to avoid wrap-around. Each lag is normalized by its
/// own pair count.
pub fn autocorrelation(samples: &[Complex64], block: usize, max_lag: usize) -> Vec<f64> {
    let n = (2 * block).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut acc = vec![Complex64::new(0.0, 0.0); max_lag];
    let mut pairs = vec![0usize; max_lag];
    for chunk in samples.chunks_exact(block) {
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[..block].copy_from_slice(chunk);
        fwd.process(&mut buf);
        for z in buf.iter_mut() {
            *z = Complex64::new(z.norm_sqr(), 0.0);
        }
        inv.process(&mut buf);
        for k in 0..max_lag {
            // inverse of |X|^2 gives sum_t x(t + k) conj(x(t)), unscaled
            acc[k] += buf[k] / n as f64;
            pairs[k] += block - k;
        }
    }
    acc.iter().zip(&pairs).map(|(a, &p)| a.norm() / p as f64).collect()
}

/// Max deviation of a 40 ms synthesized field's autocorrelation from
/// `exp(-pi fwhm |tau|)` out to three coherence times.
pub fn phase_noise_error(fwhm: f64) -> f64 {
    let tau_c = 1.0 / (std::f64::consts::PI * fwhm);
    let max_lag = (3.0 * tau_c / PHASE_DT).ceil() as usize + 1;
    let block = (8 * max_lag).next_power_of_two();
    let spec = SourceSpec {
        detuning: 0.0,
        lineshape: Lineshape::Lorentzian { fwhm },
        mean_rate: 1.0,
        extra_delay: 0.0,
        rng_seed: 0,
    };
    let samples: Vec<Complex64> = synthesize_field(&spec, 40e-3, PHASE_DT, fwhm as u64).unwrap().collect();
    let measured = autocorrelation(&samples, block, max_lag);
    measured
        .iter()
        .enumerate()
        .map(|(k, m)| (m - (-std::f64::consts::PI * fwhm * k as f64 * PHASE_DT).exp()).abs())
        .fold(0.0, f64::max)
}
