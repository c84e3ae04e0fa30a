//! Monte Carlo synthesis of two phase-diffusing laser fields, 50:50
//! beamsplitter mixing and single-photon detection.
//!
//! Fields are complex baseband samples relative to a shared reference
//! frequency. Long runs are cut into fixed-length segments, each driven by
//! its own derived seed, so results do not depend on the thread count.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::Lineshape;

/// Samples per shortest spectral period required by the sampling check.
pub const OVERSAMPLING: f64 = 50.0;

/// Minimum run length in units of the expected fringe width.
pub const MIN_DURATION_FRINGES: f64 = 1000.0;

/// Length of one independently seeded simulation segment, seconds.
pub const SEGMENT_DURATION: f64 = 2e-3;

pub const PS_PER_S: f64 = 1e12;

/// One laser arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    /// Carrier offset from the shared reference, Hz.
    pub detuning: f64,
    pub lineshape: Lineshape,
    /// Expected detected-photon flux contributed by this arm, counts/s.
    pub mean_rate: f64,
    /// Additional optical delay before the beamsplitter, seconds.
    #[serde(default)]
    pub extra_delay: f64,
    pub rng_seed: u64,
}

impl SourceSpec {
    pub fn validate(&self, name: &str) -> Result<()> {
        if !self.detuning.is_finite() {
            return Err(Error::invalid(format!("{name}.detuning"), "must be finite"));
        }
        if !(self.mean_rate.is_finite() && self.mean_rate > 0.0) {
            return Err(Error::invalid(format!("{name}.mean_rate"), "must be > 0"));
        }
        if !(self.extra_delay.is_finite() && self.extra_delay >= 0.0) {
            return Err(Error::invalid(format!("{name}.extra_delay"), "must be >= 0"));
        }
        validate_source_lineshape(&self.lineshape)
            .map_err(|e| Error::invalid(format!("{name}.lineshape"), e.to_string()))
    }

    /// Spectral extent including the carrier offset, Hz.
    pub fn extent(&self) -> f64 {
        self.lineshape.spectral_extent() + self.detuning.abs()
    }
}

/// A zero-width Lorentzian is a noiseless tone, which sources accept.
fn validate_source_lineshape(lineshape: &Lineshape) -> Result<()> {
    match *lineshape {
        Lineshape::Lorentzian { fwhm } if fwhm == 0.0 => Ok(()),
        other => other.validate(),
    }
}

/// Non-paralyzable single-photon detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSpec {
    pub efficiency: f64,
    /// Seconds.
    pub dead_time: f64,
    /// Counts/s.
    pub dark_rate: f64,
    /// Gaussian timing spread, seconds.
    pub jitter_sigma: f64,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        DetectorSpec { efficiency: 0.5, dead_time: 22e-9, dark_rate: 100.0, jitter_sigma: 0.35e-9 }
    }
}

impl DetectorSpec {
    pub fn ideal() -> Self {
        DetectorSpec { efficiency: 1.0, dead_time: 0.0, dark_rate: 0.0, jitter_sigma: 0.0 }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::invalid(format!("{name}.efficiency"), "must lie in [0, 1]"));
        }
        for (field, v) in [("dead_time", self.dead_time), ("dark_rate", self.dark_rate), ("jitter_sigma", self.jitter_sigma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name}.{field}"), "must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn dead_time_ps(&self) -> u64 {
        (self.dead_time * PS_PER_S).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source_1: SourceSpec,
    pub source_2: SourceSpec,
    #[serde(default)]
    pub detector_a: DetectorSpec,
    #[serde(default)]
    pub detector_b: DetectorSpec,
    /// Power fraction of each field in the common interfering mode.
    pub mode_overlap: f64,
    /// Seconds.
    pub duration: f64,
    /// Seconds.
    #[serde(default = "default_sample_dt")]
    pub sample_dt: f64,
}

pub fn default_sample_dt() -> f64 {
    2e-9
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.source_1.validate("source_1")?;
        self.source_2.validate("source_2")?;
        self.detector_a.validate("detector_a")?;
        self.detector_b.validate("detector_b")?;
        if !(0.0..=1.0).contains(&self.mode_overlap) {
            return Err(Error::invalid("mode_overlap", "must lie in [0, 1]"));
        }
        if !(self.sample_dt.is_finite() && self.sample_dt > 0.0) {
            return Err(Error::invalid("sample_dt", "must be > 0"));
        }
        let max_dt = self.max_sample_dt();
        if self.sample_dt > max_dt {
            return Err(Error::Config(format!(
                "sample_dt {:.3e} s exceeds 1/(50 * spectral extent) = {:.3e} s",
                self.sample_dt, max_dt
            )));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::invalid("duration", "must be >= 0"));
        }
        let min_duration = MIN_DURATION_FRINGES * self.expected_fringe_width();
        if self.duration > 0.0 && self.duration < min_duration {
            return Err(Error::Config(format!(
                "duration {:.3e} s is shorter than 1000 fringe widths ({:.3e} s)",
                self.duration, min_duration
            )));
        }
        Ok(())
    }

    /// Largest admissible sample interval, seconds.
    pub fn max_sample_dt(&self) -> f64 {
        let extent = self.source_1.lineshape.spectral_extent().max(self.source_2.lineshape.spectral_extent())
            + (self.source_1.detuning - self.source_2.detuning).abs();
        if extent > 0.0 {
            1.0 / (OVERSAMPLING * extent)
        } else {
            f64::INFINITY
        }
    }

    /// Rough coherence-limited fringe width `1 / (extent_1 + extent_2)`, seconds.
    pub fn expected_fringe_width(&self) -> f64 {
        let sum = self.source_1.lineshape.spectral_extent() + self.source_2.lineshape.spectral_extent();
        if sum > 0.0 {
            1.0 / sum
        } else {
            0.0
        }
    }

    fn mean_efficiency(&self) -> f64 {
        0.5 * (self.detector_a.efficiency + self.detector_b.efficiency)
    }

    /// Photon fluxes entering the beamsplitter, counts/s. `mean_rate` is a
    /// detected flux, so it is divided by the mean detector efficiency.
    pub fn input_fluxes(&self) -> (f64, f64) {
        let eta = self.mean_efficiency();
        let scale = if eta > 0.0 { 1.0 / eta } else { 1.0 };
        (self.source_1.mean_rate * scale, self.source_2.mean_rate * scale)
    }

    /// Fringe visibility this configuration should produce: overlap and
    /// rate balance, diluted by dark counts, and reduced to first order by
    /// detector dead time.
    pub fn expected_visibility(&self) -> f64 {
        let (r1, r2) = self.input_fluxes();
        let m = self.mode_overlap;
        let mut v = 2.0 * m * m * r1 * r2 / ((r1 + r2) * (r1 + r2));
        for det in [&self.detector_a, &self.detector_b] {
            let signal = det.efficiency * 0.5 * (r1 + r2);
            let total = signal + det.dark_rate;
            if total > 0.0 {
                v *= signal / total;
                v /= 1.0 + total * det.dead_time;
            }
        }
        v
    }
}

/// Detector channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    A,
    B,
}

impl Channel {
    pub fn code(self) -> u8 {
        match self {
            Channel::A => 0,
            Channel::B => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Channel> {
        match code {
            0 => Some(Channel::A),
            1 => Some(Channel::B),
            _ => None,
        }
    }
}

/// One detection: integer picoseconds since run start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhotonEvent {
    pub timestamp: u64,
    pub channel: Channel,
}

/// Instantaneous frequency offset of a triangular FM sweep, Hz.
///
/// Starts at zero rising, peaks at `+deviation/2` after a quarter period.
pub fn instantaneous_detuning(lineshape: &Lineshape, t: f64) -> Result<f64> {
    match *lineshape {
        Lineshape::FmTriangle { mod_rate, deviation, .. } => Ok(triangle(t * mod_rate) * 0.5 * deviation),
        _ => Err(Error::WrongVariant { expected: "fm_triangle" }),
    }
}

/// Unit-amplitude triangle wave with period 1, zero at the origin, rising.
fn triangle(cycles: f64) -> f64 {
    let p = cycles.rem_euclid(1.0);
    if p < 0.25 {
        4.0 * p
    } else if p < 0.75 {
        2.0 - 4.0 * p
    } else {
        4.0 * p - 4.0
    }
}

/// Lazily generated complex field `exp(i * phi(t))`.
///
/// The phase advances by `2 pi (detuning + f_fm(t)) dt` plus a Wiener
/// increment of variance `2 pi fwhm dt`, which gives `|<e*(t) e(t+tau)>| =
/// exp(-pi fwhm |tau|)`.
#[derive(Debug, Clone)]
pub struct FieldStream {
    rng: ChaCha8Rng,
    phase: f64,
    index: u64,
    len: u64,
    dt: f64,
    /// Process time of the first sample, seconds.
    t0: f64,
    detuning: f64,
    diffusion_sigma: f64,
    fm: Option<(f64, f64)>,
}

impl FieldStream {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn collect_samples(self) -> FieldSamples {
        let dt = self.dt;
        let t_start = self.t0;
        FieldSamples { dt, t_start, samples: self.collect() }
    }
}

impl Iterator for FieldStream {
    type Item = Complex64;

    #[inline]
    fn next(&mut self) -> Option<Complex64> {
        if self.index >= self.len {
            return None;
        }
        let (s, c) = self.phase.sin_cos();
        let mut freq = self.detuning;
        if let Some((rate, deviation)) = self.fm {
            let t_mid = self.t0 + (self.index as f64 + 0.5) * self.dt;
            freq += triangle(t_mid * rate) * 0.5 * deviation;
        }
        let noise: f64 = if self.diffusion_sigma > 0.0 {
            self.rng.sample::<f64, _>(StandardNormal) * self.diffusion_sigma
        } else {
            0.0
        };
        self.phase += 2.0 * PI * freq * self.dt + noise;
        if self.phase.abs() > 1e3 {
            self.phase = self.phase.rem_euclid(2.0 * PI);
        }
        self.index += 1;
        Some(Complex64::new(c, s))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.len - self.index) as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for FieldStream {}

/// Field samples starting at `t = 0`. See [`synthesize_segment`].
pub fn synthesize_field(spec: &SourceSpec, duration: f64, dt: f64, seed: u64) -> Result<FieldStream> {
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::invalid("duration", "must be >= 0"));
    }
    let n = samples_for(duration, dt)?;
    synthesize_segment(spec, 0.0, n, dt, seed)
}

/// `len` field samples starting at run time `t_start`. The initial phase is
/// drawn uniformly from the seeded generator.
pub fn synthesize_segment(spec: &SourceSpec, t_start: f64, len: u64, dt: f64, seed: u64) -> Result<FieldStream> {
    spec.validate("source")?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", "must be > 0"));
    }
    let extent = spec.extent();
    if extent > 0.0 && dt > 1.0 / (OVERSAMPLING * extent) {
        return Err(Error::Config(format!(
            "dt {:.3e} s exceeds 1/(50 * {:.3e} Hz) for this source",
            dt, extent
        )));
    }
    let (fwhm, fm) = match spec.lineshape {
        Lineshape::Lorentzian { fwhm } => (fwhm, None),
        Lineshape::FmTriangle { intrinsic_fwhm, mod_rate, deviation } => (intrinsic_fwhm, Some((mod_rate, deviation))),
        _ => {
            return Err(Error::Config(
                "only Lorentzian and FM-triangle sources can be synthesized by phase diffusion".into(),
            ))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = rng.random::<f64>() * 2.0 * PI;
    Ok(FieldStream {
        rng,
        phase,
        index: 0,
        len,
        dt,
        t0: t_start - spec.extra_delay,
        detuning: spec.detuning,
        diffusion_sigma: (2.0 * PI * fwhm * dt).sqrt(),
        fm,
    })
}

fn samples_for(duration: f64, dt: f64) -> Result<u64> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", "must be > 0"));
    }
    Ok((duration / dt).round() as u64)
}

/// Materialized field samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSamples {
    pub dt: f64,
    pub t_start: f64,
    pub samples: Vec<Complex64>,
}

/// Photon flux samples, counts/s, piecewise constant over `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensitySamples {
    pub dt: f64,
    /// Run time of the first sample, seconds.
    pub t_start: f64,
    pub values: Vec<f64>,
}

/// Mixes two fields on a lossless 50:50 beamsplitter.
///
/// The interfering fraction `mode_overlap` of each input combines as
/// `out_a = (a1 + i a2)/sqrt(2)`, `out_b = (i a1 + a2)/sqrt(2)` with
/// `a_k = sqrt(r_k) e_k`; the remainder splits evenly without interference.
pub fn beamsplit(
    field_1: &FieldSamples,
    field_2: &FieldSamples,
    mode_overlap: f64,
    rates: (f64, f64),
) -> Result<(IntensitySamples, IntensitySamples)> {
    if field_1.samples.len() != field_2.samples.len() {
        return Err(Error::StreamMismatch(format!(
            "field lengths differ: {} vs {}",
            field_1.samples.len(),
            field_2.samples.len()
        )));
    }
    if field_1.dt != field_2.dt {
        return Err(Error::StreamMismatch(format!("sample intervals differ: {} vs {}", field_1.dt, field_2.dt)));
    }
    if !(0.0..=1.0).contains(&mode_overlap) {
        return Err(Error::invalid("mode_overlap", "must lie in [0, 1]"));
    }
    let (r1, r2) = rates;
    if !(r1 >= 0.0 && r2 >= 0.0) {
        return Err(Error::invalid("rates", "must be >= 0"));
    }
    let cross = mode_overlap * (r1 * r2).sqrt();
    let n = field_1.samples.len();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for (&e1, &e2) in field_1.samples.iter().zip(&field_2.samples) {
        let (ia, ib) = split_sample(e1, e2, r1, r2, cross);
        a.push(ia);
        b.push(ib);
    }
    let t_start = field_1.t_start;
    let dt = field_1.dt;
    Ok((IntensitySamples { dt, t_start, values: a }, IntensitySamples { dt, t_start, values: b }))
}

#[inline]
fn split_sample(e1: Complex64, e2: Complex64, r1: f64, r2: f64, cross: f64) -> (f64, f64) {
    let mean = 0.5 * (r1 * e1.norm_sqr() + r2 * e2.norm_sqr());
    let beat = cross * (e1.conj() * e2).im;
    (mean - beat, mean + beat)
}

/// Single-photon detection by time-rescaled Poisson thinning.
///
/// The detection rate `efficiency * intensity + dark_rate` is integrated
/// sample by sample; each unit-exponential threshold crossing is an event,
/// placed by linear interpolation inside its sample (uniform given the
/// count). Gaussian jitter is added, events before `t = 0` dropped, and a
/// non-paralyzable dead-time filter applied. Returns sorted picosecond
/// timestamps.
pub fn detect(intensity: &IntensitySamples, spec: &DetectorSpec, seed: u64) -> Result<Vec<u64>> {
    spec.validate("detector")?;
    if let Some(i) = intensity.values.iter().position(|&v| !(v >= 0.0)) {
        return Err(Error::invalid("intensity", format!("negative or NaN at sample {i}")));
    }
    let mut detector = Thinning::new(spec, intensity.t_start, intensity.dt, seed);
    for (i, &value) in intensity.values.iter().enumerate() {
        detector.push(i, value);
    }
    Ok(detector.finish())
}

/// Streaming form of [`detect`], fed one intensity sample at a time.
struct Thinning {
    rng: ChaCha8Rng,
    remaining: f64,
    efficiency: f64,
    dark_rate: f64,
    dt: f64,
    dt_ps: f64,
    t0_ps: f64,
    jitter_ps: f64,
    dead_ps: u64,
    times: Vec<f64>,
}

impl Thinning {
    fn new(spec: &DetectorSpec, t_start: f64, dt: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let remaining = rng.sample(Exp1);
        Thinning {
            rng,
            remaining,
            efficiency: spec.efficiency,
            dark_rate: spec.dark_rate,
            dt,
            dt_ps: dt * PS_PER_S,
            t0_ps: t_start * PS_PER_S,
            jitter_ps: spec.jitter_sigma * PS_PER_S,
            dead_ps: spec.dead_time_ps(),
            times: Vec::new(),
        }
    }

    #[inline]
    fn push(&mut self, i: usize, value: f64) {
        let mass = (self.efficiency * value + self.dark_rate) * self.dt;
        if mass <= 0.0 {
            return;
        }
        let mut consumed = 0.0;
        while self.remaining <= mass - consumed {
            consumed += self.remaining;
            self.times.push(self.t0_ps + (i as f64 + consumed / mass) * self.dt_ps);
            self.remaining = self.rng.sample(Exp1);
        }
        self.remaining -= mass - consumed;
    }

    fn finish(mut self) -> Vec<u64> {
        let jitter_ps = self.jitter_ps;
        let rng = &mut self.rng;
        let mut stamps: Vec<u64> = self
            .times
            .iter()
            .filter_map(|&t| {
                let t = if jitter_ps > 0.0 { t + jitter_ps * rng.sample::<f64, _>(StandardNormal) } else { t };
                (t >= 0.0).then(|| t.round() as u64)
            })
            .collect();
        stamps.sort_unstable();
        apply_dead_time(&mut stamps, self.dead_ps);
        stamps
    }
}

/// Non-paralyzable dead-time filter on a sorted stream: an event is kept
/// only if it is at least `dead_ps` after, and strictly later than, the
/// previous kept event.
pub fn apply_dead_time(stamps: &mut Vec<u64>, dead_ps: u64) {
    let mut last: Option<u64> = None;
    stamps.retain(|&t| match last {
        Some(prev) if t <= prev || t - prev < dead_ps => false,
        _ => {
            last = Some(t);
            true
        }
    });
}

/// Summary recorded alongside a simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub singles_rate_a: f64,
    pub singles_rate_b: f64,
    /// Seconds.
    pub duration: f64,
    pub segments: usize,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub events_a: Vec<u64>,
    pub events_b: Vec<u64>,
    pub metadata: RunMetadata,
}

impl ExperimentRun {
    /// Both channels merged in time order (A before B on ties).
    pub fn events(&self) -> Vec<PhotonEvent> {
        merge_channels(&self.events_a, &self.events_b)
    }
}

pub fn merge_channels(a: &[u64], b: &[u64]) -> Vec<PhotonEvent> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j >= b.len() || (i < a.len() && a[i] <= b[j]) {
            out.push(PhotonEvent { timestamp: a[i], channel: Channel::A });
            i += 1;
        } else {
            out.push(PhotonEvent { timestamp: b[j], channel: Channel::B });
            j += 1;
        }
    }
    out
}

/// SplitMix64 finalizer over a (base, stream, index) triple.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_FIELD: u64 = 1;
const STREAM_DETECTOR_A: u64 = 2;
const STREAM_DETECTOR_B: u64 = 3;

struct SegmentEvents {
    a: Vec<u64>,
    b: Vec<u64>,
}

/// Full pipeline: synthesize both arms, mix, detect on both channels.
///
/// Deterministic in `(config, seeds)` and independent of the rayon pool
/// size: segment `k` always uses the same derived seeds, and segments are
/// concatenated by index.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun> {
    config.validate()?;
    let dt = config.sample_dt;
    let total = samples_for(config.duration, dt)?;
    let per_segment = ((SEGMENT_DURATION / dt).round() as u64).max(1);
    let segments = total.div_ceil(per_segment);
    let rates = config.input_fluxes();
    let detector_base = derive_seed(config.source_1.rng_seed, config.source_2.rng_seed, u64::MAX);

    let parts: Vec<SegmentEvents> = (0..segments)
        .into_par_iter()
        .map(|k| {
            let start = k * per_segment;
            let len = per_segment.min(total - start);
            let t_start = start as f64 * dt;
            let f1 = synthesize_segment(
                &config.source_1,
                t_start,
                len,
                dt,
                derive_seed(config.source_1.rng_seed, STREAM_FIELD, k),
            )?;
            let f2 = synthesize_segment(
                &config.source_2,
                t_start,
                len,
                dt,
                derive_seed(config.source_2.rng_seed, STREAM_FIELD, k),
            )?;
            let mut det_a = Thinning::new(&config.detector_a, t_start, dt, derive_seed(detector_base, STREAM_DETECTOR_A, k));
            let mut det_b = Thinning::new(&config.detector_b, t_start, dt, derive_seed(detector_base, STREAM_DETECTOR_B, k));
            let (r1, r2) = rates;
            let cross = config.mode_overlap * (r1 * r2).sqrt();
            for (i, (e1, e2)) in f1.zip(f2).enumerate() {
                let (ia, ib) = split_sample(e1, e2, r1, r2, cross);
                det_a.push(i, ia.max(0.0));
                det_b.push(i, ib.max(0.0));
            }
            let (a, b) = (det_a.finish(), det_b.finish());
            Ok(SegmentEvents { a, b })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut events_a: Vec<u64> = Vec::with_capacity(parts.iter().map(|p| p.a.len()).sum());
    let mut events_b: Vec<u64> = Vec::with_capacity(parts.iter().map(|p| p.b.len()).sum());
    for part in parts {
        events_a.extend(part.a);
        events_b.extend(part.b);
    }
    // jitter can carry events across segment boundaries
    events_a.sort_unstable();
    events_b.sort_unstable();
    apply_dead_time(&mut events_a, config.detector_a.dead_time_ps());
    apply_dead_time(&mut events_b, config.detector_b.dead_time_ps());

    let duration = total as f64 * dt;
    let rate = |n: usize| if duration > 0.0 { n as f64 / duration } else { 0.0 };
    let metadata = RunMetadata {
        singles_rate_a: rate(events_a.len()),
        singles_rate_b: rate(events_b.len()),
        duration,
        segments: segments as usize,
        config: config.clone(),
    };
    Ok(ExperimentRun { events_a, events_b, metadata })
}
