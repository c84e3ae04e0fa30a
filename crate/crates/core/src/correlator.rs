//! Multi-stop coincidence histogramming of two timestamp streams.
//!
//! Every pair `(a, b)` with `|t_b - t_a| <= window` is counted, binned by
//! `dT = t_b - t_a` into half-open bins `[c - w/2, c + w/2)` centred on
//! integer multiples of the bin width. All arithmetic is in integer
//! picoseconds.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasersim::{DetectorSpec, PS_PER_S};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bin_width_ps: u64,
    /// Half-range, an exact multiple of the bin width.
    pub window_ps: u64,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        HistogramSpec { bin_width_ps: 500, window_ps: 2_000_000 }
    }
}

impl HistogramSpec {
    pub fn new(bin_width_ps: u64, window_ps: u64) -> Result<Self> {
        let spec = HistogramSpec { bin_width_ps, window_ps };
        spec.validate()?;
        Ok(spec)
    }

    /// From seconds; both values must land on whole picoseconds.
    pub fn from_seconds(bin_width: f64, window: f64) -> Result<Self> {
        let to_ps = |name: &str, v: f64| -> Result<u64> {
            let ps = v * PS_PER_S;
            if !(ps.is_finite() && ps >= 0.0) || (ps - ps.round()).abs() > 1e-6 * ps.max(1.0) {
                return Err(Error::invalid(name, format!("{v} s is not a whole number of picoseconds")));
            }
            Ok(ps.round() as u64)
        };
        Self::new(to_ps("bin_width", bin_width)?, to_ps("window", window)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bin_width_ps == 0 {
            return Err(Error::invalid("bin_width", "must be > 0"));
        }
        if self.window_ps % self.bin_width_ps != 0 {
            return Err(Error::Config(format!(
                "window ({} ps) is not an exact multiple of bin_width ({} ps)",
                self.window_ps, self.bin_width_ps
            )));
        }
        Ok(())
    }

    /// Bins on each side of zero.
    pub fn half_bins(&self) -> usize {
        (self.window_ps / self.bin_width_ps) as usize
    }

    /// Always odd.
    pub fn bin_count(&self) -> usize {
        2 * self.half_bins() + 1
    }

    pub fn bin_center(&self, index: usize) -> f64 {
        (index as f64 - self.half_bins() as f64) * self.bin_width_ps as f64 / PS_PER_S
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width_ps as f64 / PS_PER_S
    }

    /// Fraction of the bin's integer-picosecond delays that lie inside
    /// `[-window, window]`: 1 for interior bins, about 1/2 for the two
    /// outermost bins.
    pub fn bin_exposure(&self, index: usize) -> f64 {
        let w = self.bin_width_ps as i128;
        let big_w = self.window_ps as i128;
        let k = index as i128 - self.half_bins() as i128;
        // delays d with floor((2d + w) / 2w) = k, i.e. 2kw - w <= 2d < 2kw + w
        let lo = (2 * k * w - w + 1).div_euclid(2).max(-big_w);
        let hi = (2 * k * w + w + 1).div_euclid(2).min(big_w + 1);
        (hi - lo).max(0) as f64 / w as f64
    }

    pub fn window(&self) -> f64 {
        self.window_ps as f64 / PS_PER_S
    }

    /// Bin holding delay `delta_ps`, assuming `|delta_ps| <= window_ps`.
    #[inline]
    fn bin_of(&self, delta_ps: i64) -> usize {
        let w = self.bin_width_ps as i64;
        // floor((delta + w/2) / w) without fractional picoseconds
        let k = (2 * delta_ps + w).div_euclid(2 * w);
        (k + self.half_bins() as i64) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub spec: HistogramSpec,
    pub counts: Vec<u64>,
    pub singles_a: u64,
    pub singles_b: u64,
    /// Seconds.
    pub duration: f64,
}

impl CoincidenceHistogram {
    pub fn zeros(spec: HistogramSpec) -> Self {
        CoincidenceHistogram { spec, counts: vec![0; spec.bin_count()], singles_a: 0, singles_b: 0, duration: 0.0 }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.counts.len()).map(|i| self.spec.bin_center(i))
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }

    /// Histogram with `dT` negated, as produced by swapping the channels.
    pub fn mirrored(&self) -> Self {
        let mut counts = self.counts.clone();
        counts.reverse();
        CoincidenceHistogram { counts, singles_a: self.singles_b, singles_b: self.singles_a, ..self.clone() }
    }

    /// JSON sidecar: spec, singles and duration.
    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::json!({
            "bin_width_ps": self.spec.bin_width_ps,
            "window_ps": self.spec.window_ps,
            "bins": self.counts.len(),
            "singles_a": self.singles_a,
            "singles_b": self.singles_b,
            "duration_s": self.duration,
            "total_coincidences": self.total(),
        })
    }
}

fn check_sorted(stream: &[u64], channel: char) -> Result<()> {
    match stream.windows(2).position(|w| w[1] <= w[0]) {
        Some(i) => Err(Error::Unsorted { channel, index: i + 1 }),
        None => Ok(()),
    }
}

/// Exact all-pairs correlation in one sliding-window pass,
/// `O(N_a + N_b + pairs)`.
///
/// `duration` is set to the span of the events; callers that know the
/// acquisition time should override it with
/// [`with_duration`](CoincidenceHistogram::with_duration).
pub fn correlate(events_a: &[u64], events_b: &[u64], spec: &HistogramSpec) -> Result<CoincidenceHistogram> {
    spec.validate()?;
    check_sorted(events_a, 'A')?;
    check_sorted(events_b, 'B')?;
    let mut hist = CoincidenceHistogram::zeros(*spec);
    accumulate(events_a, events_b, spec, &mut hist.counts);
    hist.singles_a = events_a.len() as u64;
    hist.singles_b = events_b.len() as u64;
    hist.duration = span_seconds(events_a, events_b);
    Ok(hist)
}

fn accumulate(events_a: &[u64], events_b: &[u64], spec: &HistogramSpec, counts: &mut [u64]) {
    let window = spec.window_ps;
    let mut lo = 0usize;
    for &ta in events_a {
        let start = ta.saturating_sub(window);
        while lo < events_b.len() && events_b[lo] < start {
            lo += 1;
        }
        let end = ta.saturating_add(window);
        for &tb in &events_b[lo..] {
            if tb > end {
                break;
            }
            counts[spec.bin_of(tb as i64 - ta as i64)] += 1;
        }
    }
}

fn span_seconds(a: &[u64], b: &[u64]) -> f64 {
    let first = a.first().into_iter().chain(b.first()).min();
    let last = a.last().into_iter().chain(b.last()).max();
    match (first, last) {
        (Some(f), Some(l)) => (l - f) as f64 / PS_PER_S,
        _ => 0.0,
    }
}

/// Correlates disjoint time segments of length `segment_ps` in parallel and
/// merges them. Pairs straddling a segment boundary are dropped.
pub fn correlate_segmented(
    events_a: &[u64],
    events_b: &[u64],
    spec: &HistogramSpec,
    segment_ps: u64,
) -> Result<CoincidenceHistogram> {
    spec.validate()?;
    if segment_ps == 0 {
        return Err(Error::invalid("segment", "must be > 0"));
    }
    check_sorted(events_a, 'A')?;
    check_sorted(events_b, 'B')?;
    let last = events_a.last().copied().max(events_b.last().copied()).unwrap_or(0);
    let segments = last / segment_ps + 1;
    fn slice(stream: &[u64], k: u64, segment_ps: u64) -> &[u64] {
        let lo = stream.partition_point(|&t| t < k * segment_ps);
        let hi = stream.partition_point(|&t| t < (k + 1).saturating_mul(segment_ps));
        &stream[lo..hi]
    }
    let partials: Vec<CoincidenceHistogram> = (0..segments)
        .into_par_iter()
        .map(|k| {
            let (a, b) = (slice(events_a, k, segment_ps), slice(events_b, k, segment_ps));
            let mut h = CoincidenceHistogram::zeros(*spec);
            accumulate(a, b, spec, &mut h.counts);
            h.singles_a = a.len() as u64;
            h.singles_b = b.len() as u64;
            h
        })
        .collect();
    let mut merged = CoincidenceHistogram::zeros(*spec);
    for h in &partials {
        merged = merge(&merged, h)?;
    }
    merged.duration = span_seconds(events_a, events_b);
    Ok(merged)
}

/// Element-wise sum; singles and durations add.
pub fn merge(h1: &CoincidenceHistogram, h2: &CoincidenceHistogram) -> Result<CoincidenceHistogram> {
    if h1.spec != h2.spec || h1.counts.len() != h2.counts.len() {
        return Err(Error::SpecMismatch);
    }
    Ok(CoincidenceHistogram {
        spec: h1.spec,
        counts: h1.counts.iter().zip(&h2.counts).map(|(a, b)| a + b).collect(),
        singles_a: h1.singles_a + h2.singles_a,
        singles_b: h1.singles_b + h2.singles_b,
        duration: h1.duration + h2.duration,
    })
}

/// Wing-normalized fringe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedFringe {
    /// Bin centres, seconds.
    pub centers: Vec<f64>,
    pub values: Vec<f64>,
    /// `sqrt(counts) / baseline` (one count minimum).
    pub errors: Vec<f64>,
    /// Raw counts behind each value, when known.
    pub counts: Option<Vec<u64>>,
    /// Mean counts per wing bin.
    pub baseline: f64,
    /// Bin width, seconds.
    pub bin_width: f64,
}

impl NormalizedFringe {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Canonical CSV: `bin_center_ns,counts,normalized,error`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "bin_center_ns,counts,normalized,error")?;
        for i in 0..self.len() {
            let counts = match &self.counts {
                Some(c) => c[i] as f64,
                None => self.values[i] * self.baseline,
            };
            writeln!(out, "{},{},{},{}", fmt_ns(self.centers[i]), counts, self.values[i], self.errors[i])?;
        }
        Ok(())
    }

    /// Parses the CSV written by [`write_csv`](Self::write_csv).
    pub fn read_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Format("empty fringe file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let find = |name: &str| {
            cols.iter().position(|c| *c == name).ok_or_else(|| Error::Format(format!("missing column `{name}`")))
        };
        let (ic, in_, iv, ie) = (find("bin_center_ns")?, find("counts")?, find("normalized")?, find("error")?);
        let mut centers = Vec::new();
        let mut counts = Vec::new();
        let mut values = Vec::new();
        let mut errors = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let get = |i: usize| -> Result<f64> {
                fields
                    .get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::Format(format!("bad value in row {}", lineno + 2)))
            };
            centers.push(get(ic)? * 1e-9);
            counts.push(get(in_)?);
            values.push(get(iv)?);
            errors.push(get(ie)?);
        }
        if centers.len() < 2 {
            return Err(Error::Format("fringe needs at least two rows".into()));
        }
        let bin_width = (centers[1] - centers[0]).abs();
        // interior rows only: the outermost bins are partially exposed
        let interior = 1..counts.len().saturating_sub(1);
        let baseline = counts[interior.clone()]
            .iter()
            .zip(&values[interior])
            .filter(|(_, &v)| v > 0.0)
            .map(|(c, v)| c / v)
            .next()
            .unwrap_or(1.0);
        let integral = counts.iter().all(|c| c.fract() == 0.0 && *c >= 0.0);
        Ok(NormalizedFringe {
            centers,
            values,
            errors,
            counts: integral.then(|| counts.iter().map(|&c| c as u64).collect()),
            baseline,
            bin_width,
        })
    }
}

fn fmt_ns(seconds: f64) -> String {
    // centres are whole picoseconds
    let ps = (seconds * PS_PER_S).round() as i64;
    let ns = ps as f64 / 1000.0;
    format!("{ns}")
}

/// Raw histogram CSV with the same columns as the fringe, unnormalized.
pub fn write_histogram_csv<W: Write>(hist: &CoincidenceHistogram, fringe: Option<&NormalizedFringe>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "bin_center_ns,counts,normalized,error")?;
    for (i, &c) in hist.counts.iter().enumerate() {
        let (v, e) = match fringe {
            Some(f) => (f.values[i], f.errors[i]),
            None => (c as f64, (c as f64).sqrt()),
        };
        writeln!(out, "{},{},{},{}", fmt_ns(hist.spec.bin_center(i)), c, v, e)?;
    }
    Ok(())
}

/// Range of `|dT|` used as the normalization wing, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wing {
    pub start: f64,
    pub end: f64,
}

impl Wing {
    /// Outer half of the window.
    pub fn outer_half(spec: &HistogramSpec) -> Self {
        Wing { start: 0.5 * spec.window(), end: spec.window() }
    }
}

/// Scales a histogram so its wing mean is 1, after dividing each bin by its
/// exposure.
pub fn normalize(hist: &CoincidenceHistogram, wing: Wing) -> Result<NormalizedFringe> {
    let window = hist.spec.window();
    let slack = 1e-12;
    if !(wing.start >= 0.5 * window - slack && wing.end <= window + slack && wing.start < wing.end) {
        return Err(Error::Normalization(format!(
            "wing [{:.3e}, {:.3e}] s must lie within [window/2, window] = [{:.3e}, {:.3e}] s",
            wing.start,
            wing.end,
            0.5 * window,
            window
        )));
    }
    let in_wing: Vec<usize> = (0..hist.counts.len())
        .filter(|&i| {
            let c = hist.spec.bin_center(i).abs();
            c >= wing.start - slack && c <= wing.end + slack
        })
        .collect();
    if in_wing.len() < 100 {
        return Err(Error::Normalization(format!("wing holds {} bins, need at least 100", in_wing.len())));
    }
    let exposure: Vec<f64> = (0..hist.counts.len()).map(|i| hist.spec.bin_exposure(i)).collect();
    let baseline = in_wing.iter().map(|&i| hist.counts[i] as f64 / exposure[i]).sum::<f64>() / in_wing.len() as f64;
    if baseline <= 0.0 {
        return Err(Error::Normalization("zero baseline".into()));
    }
    Ok(NormalizedFringe {
        centers: hist.centers().collect(),
        values: hist.counts.iter().zip(&exposure).map(|(&c, e)| c as f64 / (baseline * e)).collect(),
        errors: hist.counts.iter().zip(&exposure).map(|(&c, e)| (c.max(1) as f64).sqrt() / (baseline * e)).collect(),
        counts: Some(hist.counts.clone()),
        baseline,
        bin_width: hist.spec.bin_width(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinglesStats {
    /// Counts/s.
    pub rate: f64,
    /// Smallest inter-event gap, seconds (`None` with fewer than two events).
    pub min_gap: Option<f64>,
    pub dead_time_violations: usize,
}

/// Count rate and dead-time diagnostics of one sorted channel.
pub fn singles_stats(events: &[u64], spec: &DetectorSpec, duration: f64) -> SinglesStats {
    let dead = spec.dead_time_ps();
    let gaps = events.windows(2).map(|w| w[1].saturating_sub(w[0]));
    let min_gap = gaps.clone().min().map(|g| g as f64 / PS_PER_S);
    let dead_time_violations = gaps.filter(|&g| g < dead).count();
    let rate = if duration > 0.0 { events.len() as f64 / duration } else { 0.0 };
    SinglesStats { rate, min_gap, dead_time_violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_ns(bin: u64, window: u64) -> HistogramSpec {
        HistogramSpec::new(bin * 1000, window * 1000).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(HistogramSpec::new(0, 10).is_err());
        let err = HistogramSpec::new(300, 1000).unwrap_err().to_string();
        assert!(err.contains("window") && err.contains("bin_width"), "{err}");
        let s = HistogramSpec::default();
        assert_eq!(s.bin_count(), 8001);
        assert_eq!(s.bin_center(4000), 0.0);
        assert!(HistogramSpec::from_seconds(0.5e-9, 2e-6).unwrap() == s);
    }

    #[test]
    fn half_open_bins() {
        let s = spec_ns(1, 5);
        // [-0.5, 0.5) ns -> zero bin
        assert_eq!(s.bin_of(-500), 5);
        assert_eq!(s.bin_of(499), 5);
        assert_eq!(s.bin_of(500), 6);
        assert_eq!(s.bin_of(-501), 4);
        assert_eq!(s.bin_of(5000), 10);
        assert_eq!(s.bin_of(-5000), 0);
    }

    #[test]
    fn empty_channel() {
        let h = correlate(&[0], &[], &spec_ns(1, 5)).unwrap();
        assert_eq!(h.total(), 0);
        assert_eq!(h.counts.len(), 11);
    }

    #[test]
    fn small_example() {
        let a = [0, 10_000, 20_000];
        let b = [1_000, 12_000];
        let h = correlate(&a, &b, &spec_ns(1, 5)).unwrap();
        assert_eq!(h.total(), 2);
        assert_eq!(h.counts[6], 1);
        assert_eq!(h.counts[7], 1);
    }

    #[test]
    fn unsorted_input_reports_index() {
        let err = correlate(&[0, 5, 5], &[1], &spec_ns(1, 5)).unwrap_err();
        assert!(matches!(err, Error::Unsorted { channel: 'A', index: 2 }));
        let err = correlate(&[0], &[3, 1], &spec_ns(1, 5)).unwrap_err();
        assert!(matches!(err, Error::Unsorted { channel: 'B', index: 1 }));
    }

    #[test]
    fn merge_rules() {
        let s = spec_ns(1, 5);
        let h = correlate(&[0, 10_000], &[1_000, 9_000], &s).unwrap();
        assert_eq!(merge(&h, &CoincidenceHistogram::zeros(s)).unwrap(), h);
        let other = correlate(&[3_000], &[3_000, 4_000], &s).unwrap();
        assert_eq!(merge(&h, &other).unwrap(), merge(&other, &h).unwrap());
        assert!(matches!(merge(&h, &CoincidenceHistogram::zeros(spec_ns(1, 6))), Err(Error::SpecMismatch)));
    }

    #[test]
    fn normalize_rules() {
        let s = spec_ns(1, 400);
        let mut h = CoincidenceHistogram::zeros(s);
        h.counts.iter_mut().for_each(|c| *c = 100);
        h.counts[400] = 50;
        // outermost bins see 500 and 501 of their 1000 ps of delay
        h.counts[0] = 50;
        h.counts[800] = 50;
        let f = normalize(&h, Wing::outer_half(&s)).unwrap();
        assert!((f.baseline - 100.0).abs() < 1e-3);
        assert!((f.values[400] - 0.5).abs() < 1e-5);
        assert!((f.errors[1] - 0.1).abs() < 1e-5);
        assert!((f.values[0] - 1.0).abs() < 1e-5);
        assert!((f.values[800] - 1.0).abs() < 3e-3);
        // wing reaching inside window/2
        assert!(normalize(&h, Wing { start: 1e-7, end: 4e-7 }).is_err());
        // too few bins
        let small = CoincidenceHistogram::zeros(spec_ns(1, 50));
        assert!(normalize(&small, Wing::outer_half(&small.spec)).is_err());
        // zero baseline
        let zero = CoincidenceHistogram::zeros(s);
        assert!(matches!(normalize(&zero, Wing::outer_half(&s)), Err(Error::Normalization(_))));
    }

    #[test]
    fn singles_diagnostics() {
        let d = DetectorSpec { dead_time: 22e-9, ..DetectorSpec::default() };
        let empty = singles_stats(&[], &d, 1.0);
        assert_eq!(empty.rate, 0.0);
        assert_eq!(empty.dead_time_violations, 0);
        let s = singles_stats(&[0, 30_000, 40_000, 100_000], &d, 1e-6);
        assert_eq!(s.dead_time_violations, 1);
        assert!((s.min_gap.unwrap() - 10e-9).abs() < 1e-18);
        assert!((s.rate - 4e6).abs() < 1e-6);
    }

    #[test]
    fn fringe_csv_round_trip() {
        let s = spec_ns(1, 200);
        let mut h = CoincidenceHistogram::zeros(s);
        for (i, c) in h.counts.iter_mut().enumerate() {
            *c = 90 + (i % 7) as u64;
        }
        let f = normalize(&h, Wing::outer_half(&s)).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = NormalizedFringe::read_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.counts, f.counts);
        assert!((back.baseline - f.baseline).abs() < 1e-9 * f.baseline);
        assert!((back.bin_width - 1e-9).abs() < 1e-18);
        assert!(back.centers.iter().zip(&f.centers).all(|(x, y)| (x - y).abs() < 1e-15));
    }
}
