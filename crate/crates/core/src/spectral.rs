//! Lineshapes, first-order field correlations and the two-source
//! coincidence fringe model.
//!
//! Every source is described by a zero-centred, unit-area power spectral
//! density. Its normalized first-order autocorrelation `g1` is the Fourier
//! transform of that density; the mutual coherence of two independent sources
//! is the magnitude of the product of their `g1`s, and the time-resolved
//! coincidence probability is
//!
//! ```text
//! P(dT) = 1 - V * Gamma12(dT) * cos(dw * dT)
//! ```
//!
//! normalized so the large-delay baseline is 1.

use std::f64::consts::{LN_2, PI};
use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ratio between FM deviation and modulation rate below which the
/// quasi-static spectrum is accepted.
pub const ADIABATIC_RATIO: f64 = 100.0;

/// Bisection tolerance used by [`fringe_metrics`], seconds.
pub const METRIC_TOLERANCE: f64 = 1e-12;

/// Search window for fringe widths, seconds.
pub const METRIC_SEARCH_WINDOW: f64 = 10e-6;

/// Optical power spectrum of a single source, centred on its carrier.
///
/// All frequencies are in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Lineshape {
    Lorentzian { fwhm: f64 },
    Rectangular { width: f64 },
    Gaussian { fwhm: f64 },
    /// Triangular frequency sweep of peak-to-peak `deviation` at `mod_rate`,
    /// on top of a Lorentzian of width `intrinsic_fwhm`.
    FmTriangle { intrinsic_fwhm: f64, mod_rate: f64, deviation: f64 },
}

impl Lineshape {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be finite and > 0, got {v}")))
            }
        };
        match *self {
            Lineshape::Lorentzian { fwhm } => positive("fwhm", fwhm),
            Lineshape::Rectangular { width } => positive("width", width),
            Lineshape::Gaussian { fwhm } => positive("fwhm", fwhm),
            Lineshape::FmTriangle { intrinsic_fwhm, mod_rate, deviation } => {
                positive("intrinsic_fwhm", intrinsic_fwhm)?;
                positive("mod_rate", mod_rate)?;
                positive("deviation", deviation)
            }
        }
    }

    /// Like [`validate`](Self::validate) but also checks that the closed-form
    /// `g1` applies (quasi-static FM).
    pub fn validate_closed_form(&self) -> Result<()> {
        self.validate()?;
        if let Lineshape::FmTriangle { mod_rate, deviation, .. } = *self {
            let limit = deviation / ADIABATIC_RATIO;
            if mod_rate > limit {
                return Err(Error::AdiabaticInvalid { mod_rate, limit });
            }
        }
        Ok(())
    }

    /// Width of the region carrying most of the power, Hz. Used for sampling
    /// and duration checks, not as a precise linewidth.
    pub fn spectral_extent(&self) -> f64 {
        match *self {
            Lineshape::Lorentzian { fwhm } => fwhm,
            Lineshape::Rectangular { width } => width,
            Lineshape::Gaussian { fwhm } => fwhm,
            Lineshape::FmTriangle { intrinsic_fwhm, deviation, .. } => deviation + intrinsic_fwhm,
        }
    }

    /// Lineshape with every width parameter multiplied by `factor`.
    /// The FM modulation rate is left alone.
    pub fn scaled(&self, factor: f64) -> Lineshape {
        match *self {
            Lineshape::Lorentzian { fwhm } => Lineshape::Lorentzian { fwhm: fwhm * factor },
            Lineshape::Rectangular { width } => Lineshape::Rectangular { width: width * factor },
            Lineshape::Gaussian { fwhm } => Lineshape::Gaussian { fwhm: fwhm * factor },
            Lineshape::FmTriangle { intrinsic_fwhm, mod_rate, deviation } => Lineshape::FmTriangle {
                intrinsic_fwhm: intrinsic_fwhm * factor,
                mod_rate,
                deviation: deviation * factor,
            },
        }
    }

    /// The width parameter that [`scaled`](Self::scaled) treats as primary.
    pub fn primary_width(&self) -> f64 {
        match *self {
            Lineshape::Lorentzian { fwhm } | Lineshape::Gaussian { fwhm } => fwhm,
            Lineshape::Rectangular { width } => width,
            Lineshape::FmTriangle { deviation, .. } => deviation,
        }
    }

    pub(crate) fn g1_raw(&self, tau: f64) -> f64 {
        match *self {
            Lineshape::Lorentzian { fwhm } => (-PI * fwhm * tau.abs()).exp(),
            Lineshape::Rectangular { width } => sinc(PI * width * tau),
            Lineshape::Gaussian { fwhm } => {
                let x = PI * fwhm * tau;
                (-(x * x) / (4.0 * LN_2)).exp()
            }
            Lineshape::FmTriangle { intrinsic_fwhm, deviation, .. } => {
                sinc(PI * deviation * tau) * (-PI * intrinsic_fwhm * tau.abs()).exp()
            }
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Normalized first-order field autocorrelation of a zero-centred lineshape.
///
/// Real and even in `tau`; the rectangular and FM forms change sign.
pub fn g1(lineshape: &Lineshape, tau: f64) -> Result<f64> {
    if !tau.is_finite() {
        return Err(Error::invalid("tau", "must be finite"));
    }
    lineshape.validate_closed_form()?;
    Ok(lineshape.g1_raw(tau))
}

/// Unit-area power spectral density at offset `f` from the carrier, 1/Hz.
pub fn lineshape_psd(lineshape: &Lineshape, f: f64) -> f64 {
    match *lineshape {
        Lineshape::Lorentzian { fwhm } => {
            let hw = 0.5 * fwhm;
            hw / (PI * (f * f + hw * hw))
        }
        Lineshape::Rectangular { width } => {
            if f.abs() < 0.5 * width {
                1.0 / width
            } else if f.abs() == 0.5 * width {
                0.5 / width
            } else {
                0.0
            }
        }
        Lineshape::Gaussian { fwhm } => {
            let sigma = fwhm / (2.0 * (2.0 * LN_2).sqrt());
            (-(f * f) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())
        }
        Lineshape::FmTriangle { intrinsic_fwhm, deviation, .. } => {
            // uniform dwell over the sweep, convolved with the intrinsic Lorentzian
            let hw = 0.5 * intrinsic_fwhm;
            let upper = ((f + 0.5 * deviation) / hw).atan();
            let lower = ((f - 0.5 * deviation) / hw).atan();
            (upper - lower) / (PI * deviation)
        }
    }
}

/// How the sign of the product of two `g1`s enters the fringe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSign {
    /// `|g1 * g1|`.
    #[default]
    Envelope,
    /// `g1 * g1`, keeping the sinc lobes' sign flips.
    Signed,
}

/// Mutual coherence `|g1(l1, tau) * g1(l2, tau)|`.
pub fn mutual_coherence(l1: &Lineshape, l2: &Lineshape, tau: f64) -> Result<f64> {
    mutual_coherence_with(l1, l2, tau, GammaSign::Envelope)
}

pub fn mutual_coherence_with(l1: &Lineshape, l2: &Lineshape, tau: f64, sign: GammaSign) -> Result<f64> {
    let product = g1(l1, tau)? * g1(l2, tau)?;
    Ok(match sign {
        GammaSign::Envelope => product.abs(),
        GammaSign::Signed => product,
    })
}

/// Parameters of the coincidence fringe of two independent sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeModel {
    pub visibility: f64,
    pub lineshape_1: Lineshape,
    pub lineshape_2: Lineshape,
    /// Centre-frequency difference, rad/s.
    pub delta_omega: f64,
    /// When set, visibilities above the classical limit of 0.5 are rejected.
    #[serde(default)]
    pub classical: bool,
    #[serde(default)]
    pub gamma_sign: GammaSign,
}

impl FringeModel {
    pub fn new(visibility: f64, lineshape_1: Lineshape, lineshape_2: Lineshape, delta_omega: f64) -> Result<Self> {
        let model = FringeModel {
            visibility,
            lineshape_1,
            lineshape_2,
            delta_omega,
            classical: false,
            gamma_sign: GammaSign::Envelope,
        };
        model.validate()?;
        Ok(model)
    }

    /// Model restricted to classical light: `visibility` must not exceed 0.5.
    pub fn classical(visibility: f64, lineshape_1: Lineshape, lineshape_2: Lineshape, delta_omega: f64) -> Result<Self> {
        let mut model = Self::new(visibility, lineshape_1, lineshape_2, delta_omega)?;
        model.classical = true;
        model.validate()?;
        Ok(model)
    }

    pub fn with_sign(mut self, sign: GammaSign) -> Self {
        self.gamma_sign = sign;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(Error::invalid("visibility", format!("must lie in [0, 1], got {}", self.visibility)));
        }
        if self.classical && self.visibility > 0.5 {
            return Err(Error::invalid(
                "visibility",
                format!("{} exceeds the classical limit 0.5", self.visibility),
            ));
        }
        if !self.delta_omega.is_finite() {
            return Err(Error::invalid("delta_omega", "must be finite"));
        }
        self.lineshape_1.validate_closed_form()?;
        self.lineshape_2.validate_closed_form()
    }

    /// Mutual coherence under this model's sign convention.
    pub fn gamma(&self, tau: f64) -> f64 {
        let product = self.lineshape_1.g1_raw(tau) * self.lineshape_2.g1_raw(tau);
        match self.gamma_sign {
            GammaSign::Envelope => product.abs(),
            GammaSign::Signed => product,
        }
    }
}

/// Normalized coincidence probability at delay `delta_t` (seconds).
pub fn coincidence_probability(model: &FringeModel, delta_t: f64) -> f64 {
    1.0 - model.visibility * model.gamma(delta_t) * (model.delta_omega * delta_t).cos()
}

/// Shape descriptors of a fringe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeMetrics {
    /// `1 - P(0)`.
    pub depth: f64,
    /// Full width of the dip envelope at half depth, seconds.
    pub dip_fwhm: f64,
    /// Delay at which the envelope `|Gamma|` first falls to 1/e, seconds.
    pub half_width_1e: f64,
    /// First positive zeros of `cos(dw * dT)`, seconds. Empty when `dw = 0`.
    pub beat_nodes: Vec<f64>,
    /// `1 / dip_fwhm`, Hz.
    pub bandwidth_inverse_fwhm: f64,
    /// `1 / half_width_1e`, Hz.
    pub bandwidth_inverse_1e: f64,
}

pub fn fringe_metrics(model: &FringeModel) -> Result<FringeMetrics> {
    model.validate()?;
    if model.visibility <= 0.0 {
        return Err(Error::MetricUnavailable("visibility is zero; the fringe is flat".into()));
    }
    let envelope = |tau: f64| model.gamma(tau).abs();
    let half = first_crossing(envelope, 0.5)
        .ok_or_else(|| Error::MetricUnavailable("dip half-depth not reached within 10 us".into()))?;
    let e_fold = first_crossing(envelope, (-1.0f64).exp())
        .ok_or_else(|| Error::MetricUnavailable("1/e point not reached within 10 us".into()))?;
    let beat_nodes = if model.delta_omega != 0.0 {
        (0..3).map(|k| (k as f64 + 0.5) * PI / model.delta_omega.abs()).collect()
    } else {
        Vec::new()
    };
    Ok(FringeMetrics {
        depth: 1.0 - coincidence_probability(model, 0.0),
        dip_fwhm: 2.0 * half,
        half_width_1e: e_fold,
        beat_nodes,
        bandwidth_inverse_fwhm: 1.0 / (2.0 * half),
        bandwidth_inverse_1e: 1.0 / e_fold,
    })
}

/// First `tau > 0` where `f` drops below `level`: coarse scan, then bisection.
fn first_crossing(f: impl Fn(f64) -> f64, level: f64) -> Option<f64> {
    const SCAN_STEP: f64 = 0.5e-9;
    let mut lo = 0.0;
    let mut hi = None;
    let mut t = SCAN_STEP;
    while t <= METRIC_SEARCH_WINDOW {
        if f(t) < level {
            hi = Some(t);
            break;
        }
        lo = t;
        t += SCAN_STEP;
    }
    let mut hi = hi?;
    while hi - lo > METRIC_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if f(mid) < level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Power spectral density sampled on a uniform frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdGrid {
    /// Frequency of the first sample, Hz.
    pub f_start: f64,
    /// Grid spacing, Hz.
    pub df: f64,
    pub density: Vec<f64>,
}

impl PsdGrid {
    /// Default oracle grid: 2^20 points over +-110 MHz.
    pub const DEFAULT_POINTS: usize = 1 << 20;
    pub const DEFAULT_HALF_SPAN: f64 = 110e6;

    /// Samples `lineshape` at `points` frequencies covering `[-half_span, half_span)`.
    pub fn sample(lineshape: &Lineshape, half_span: f64, points: usize) -> Self {
        let df = 2.0 * half_span / points as f64;
        let f_start = -half_span;
        let density = (0..points).map(|k| lineshape_psd(lineshape, f_start + k as f64 * df)).collect();
        PsdGrid { f_start, df, density }
    }

    pub fn frequency(&self, k: usize) -> f64 {
        self.f_start + k as f64 * self.df
    }

    pub fn area(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.df
    }

    pub fn span(&self) -> f64 {
        self.df * self.density.len() as f64
    }

    /// Two-column CSV: `frequency_Hz,density_per_Hz`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "frequency_Hz,density_per_Hz")?;
        for (k, d) in self.density.iter().enumerate() {
            writeln!(out, "{},{}", self.frequency(k), d)?;
        }
        Ok(())
    }
}

/// `g1` sampled on the time grid conjugate to a [`PsdGrid`].
#[derive(Debug, Clone)]
pub struct CoherenceGrid {
    pub dtau: f64,
    /// Values at `tau = (i - n/2) * dtau`.
    pub values: Vec<Complex64>,
}

impl CoherenceGrid {
    pub fn tau(&self, i: usize) -> f64 {
        (i as f64 - (self.values.len() / 2) as f64) * self.dtau
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, Complex64)> + '_ {
        self.values.iter().enumerate().map(|(i, v)| (self.tau(i), *v))
    }
}

/// Numeric Wiener-Khinchin transform of a sampled PSD.
///
/// Rejects grids whose area differs from 1 by more than 1e-3 or that span
/// less than 20 times the density's half-maximum width.
pub fn psd_to_g1_numeric(grid: &PsdGrid) -> Result<CoherenceGrid> {
    let n = grid.density.len();
    if n < 2 || !(grid.df > 0.0) {
        return Err(Error::InsufficientSpan("grid needs at least two points and df > 0".into()));
    }
    let area = grid.area();
    if (area - 1.0).abs() > 1e-3 {
        return Err(Error::InsufficientSpan(format!("grid area {area:.6} differs from 1 by more than 1e-3")));
    }
    let peak = grid.density.iter().cloned().fold(f64::MIN, f64::max);
    let above_half = grid.density.iter().filter(|&&d| d >= 0.5 * peak).count().max(1);
    let width = above_half as f64 * grid.df;
    if grid.span() < 20.0 * width {
        return Err(Error::InsufficientSpan(format!(
            "grid span {:.3e} Hz is below 20x the {:.3e} Hz density width",
            grid.span(),
            width
        )));
    }

    let mut buffer: Vec<Complex64> = grid.density.iter().map(|&d| Complex64::new(d * grid.df, 0.0)).collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buffer);

    let dtau = 1.0 / (n as f64 * grid.df);
    let half = n / 2;
    let values = (0..n)
        .map(|i| {
            // output index i holds lag m = i - n/2, stored at FFT bin m mod n
            let m = i as isize - half as isize;
            let bin = m.rem_euclid(n as isize) as usize;
            let tau = m as f64 * dtau;
            buffer[bin] * Complex64::from_polar(1.0, 2.0 * PI * grid.f_start * tau)
        })
        .collect();
    Ok(CoherenceGrid { dtau, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOR: Lineshape = Lineshape::Lorentzian { fwhm: 2.2e6 };
    const RECT: Lineshape = Lineshape::Rectangular { width: 5.2e6 };

    #[test]
    fn g1_closed_form_values() {
        assert_eq!(g1(&LOR, 0.0).unwrap(), 1.0);
        let tau = 1.0 / (PI * 2.2e6);
        assert!((g1(&LOR, tau).unwrap() - (-1.0f64).exp()).abs() < 1e-12);
        assert!(g1(&RECT, 1.0 / 5.2e6).unwrap().abs() < 1e-12);
        // 144.69 ns as quoted
        assert!((g1(&LOR, 144.69e-9).unwrap() - 0.3679).abs() < 1e-4);
    }

    #[test]
    fn g1_rejects_fast_modulation() {
        let fm = Lineshape::FmTriangle { intrinsic_fwhm: 1e6, mod_rate: 100e3, deviation: 4e6 };
        assert!(matches!(g1(&fm, 1e-7), Err(Error::AdiabaticInvalid { .. })));
        assert!(g1(&LOR, f64::NAN).is_err());
    }

    #[test]
    fn psd_peaks_and_area() {
        assert!((lineshape_psd(&LOR, 0.0) - 2.0 / (PI * 2.2e6)).abs() < 1e-15);
        assert!((lineshape_psd(&RECT, 0.0) - 1.0 / 5.2e6).abs() < 1e-18);
        // the rectangle's hard edges cost up to half a grid step each; the
        // FM line keeps Lorentzian tails of width 0.2 MHz beyond the grid
        for (shape, tol) in [
            (RECT, 1e-4),
            (Lineshape::Gaussian { fwhm: 3e6 }, 1e-6),
            (Lineshape::FmTriangle { intrinsic_fwhm: 0.2e6, mod_rate: 1e3, deviation: 4e6 }, 0.2e6 / (PI * 45e6)),
        ] {
            let grid = PsdGrid::sample(&shape, 50e6, 1 << 18);
            assert!((grid.area() - 1.0).abs() < tol, "{shape:?}: {}", grid.area());
        }
        // Lorentzian tails beyond +-50 MHz hold 2.2/(pi*50) of the area
        let grid = PsdGrid::sample(&LOR, 50e6, 1 << 18);
        let missing = 2.2e6 / (PI * 50e6);
        assert!((grid.area() - (1.0 - missing)).abs() < 1e-5);
    }

    #[test]
    fn mutual_coherence_values() {
        assert_eq!(mutual_coherence(&LOR, &RECT, 0.0).unwrap(), 1.0);
        let tau = 1.0 / (PI * 2.2e6);
        assert!((mutual_coherence(&LOR, &LOR, tau).unwrap() - (-2.0f64).exp()).abs() < 1e-12);
        assert!(mutual_coherence(&RECT, &LOR, 1.0 / 5.2e6).unwrap() < 1e-12);
        // second sinc lobe is negative
        let t = 1.5 / 5.2e6;
        assert!(mutual_coherence_with(&RECT, &LOR, t, GammaSign::Signed).unwrap() < 0.0);
        assert!(mutual_coherence(&RECT, &LOR, t).unwrap() > 0.0);
    }

    #[test]
    fn coincidence_probability_values() {
        let m = FringeModel::new(0.432, RECT, LOR, 0.0).unwrap();
        assert!((coincidence_probability(&m, 0.0) - 0.568).abs() < 1e-12);
        assert!((coincidence_probability(&m, 10e-6) - 1.0).abs() < 1e-6);
        assert!((coincidence_probability(&m, -10e-6) - 1.0).abs() < 1e-6);

        let beat = FringeModel::new(0.5, RECT, LOR, 2.0 * PI * 3.5e6).unwrap();
        let half_period = 0.5 / 3.5e6;
        let gamma = beat.gamma(half_period);
        assert!((gamma - 0.1155).abs() < 5e-4, "gamma {gamma}");
        assert!((coincidence_probability(&beat, half_period) - 1.0578).abs() < 5e-4);
    }

    #[test]
    fn classical_flag_rejects_excess_visibility() {
        assert!(FringeModel::classical(0.6, LOR, LOR, 0.0).is_err());
        assert!(FringeModel::classical(0.5, LOR, LOR, 0.0).is_ok());
        assert!(FringeModel::new(0.6, LOR, LOR, 0.0).is_ok());
        assert!(FringeModel::new(1.2, LOR, LOR, 0.0).is_err());
    }

    #[test]
    fn metrics_two_lorentzians() {
        let m = FringeModel::new(0.5, LOR, LOR, 0.0).unwrap();
        let metrics = fringe_metrics(&m).unwrap();
        assert!((metrics.half_width_1e - 72.34e-9).abs() < 0.01e-9);
        assert!((metrics.depth - 0.5).abs() < 1e-12);
        assert!(metrics.beat_nodes.is_empty());
        // exp(-pi * 4.4 MHz * t) = 1/2
        let expected_fwhm = 2.0 * LN_2 / (PI * 4.4e6);
        assert!((metrics.dip_fwhm - expected_fwhm).abs() < 4e-12);
    }

    #[test]
    fn metrics_rect_lorentzian_against_dense_scan() {
        let m = FringeModel::new(0.5, RECT, LOR, 2.0 * PI * 3.5e6).unwrap();
        let metrics = fringe_metrics(&m).unwrap();
        // dense scan oracle at 1 ps resolution
        let mut t = 0.0;
        while m.gamma(t).abs() >= 0.5 {
            t += 1e-12;
        }
        assert!((metrics.dip_fwhm - 2.0 * t).abs() < 4e-12);
        assert!((metrics.dip_fwhm - 137e-9).abs() < 0.5e-9);
        assert_eq!(metrics.beat_nodes.len(), 3);
        assert!((metrics.beat_nodes[0] - 0.25 / 3.5e6).abs() < 1e-15);
    }

    #[test]
    fn metrics_flat_fringe_unavailable() {
        let m = FringeModel::new(0.0, RECT, LOR, 0.0).unwrap();
        assert!(matches!(fringe_metrics(&m), Err(Error::MetricUnavailable(_))));
    }

    #[test]
    fn numeric_oracle_rejects_truncated_grid() {
        let grid = PsdGrid::sample(&LOR, 110e6, 1 << 16);
        assert!(matches!(psd_to_g1_numeric(&grid), Err(Error::InsufficientSpan(_))));
        // narrow span relative to the width
        let grid = PsdGrid::sample(&Lineshape::Rectangular { width: 20e6 }, 110e6, 1 << 16);
        assert!(matches!(psd_to_g1_numeric(&grid), Err(Error::InsufficientSpan(_))));
    }

    #[test]
    fn numeric_oracle_delta_like() {
        let n = 1 << 16;
        let half_span = 110e6;
        let df = 2.0 * half_span / n as f64;
        let mut density = vec![0.0; n];
        density[n / 2] = 1.0 / df;
        let grid = PsdGrid { f_start: -half_span, df, density };
        let g = psd_to_g1_numeric(&grid).unwrap();
        assert!(g.values.iter().all(|v| (v.re - 1.0).abs() < 1e-9 && v.im.abs() < 1e-9));
    }

    #[test]
    fn psd_csv_dump() {
        let grid = PsdGrid::sample(&RECT, 10e6, 8);
        let mut out = Vec::new();
        grid.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("frequency_Hz,density_per_Hz\n"));
        assert_eq!(text.lines().count(), 9);
    }
}
