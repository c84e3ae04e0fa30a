//! Presets, TOML configuration and the command-line driver.
//!
//! Every run writes its artifacts plus a `manifest.json` listing each
//! artifact's SHA-256, so two runs of the same configuration can be
//! compared byte for byte.

use std::f64::consts::PI;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{beat_psd, fit_hom, psd_width, FitModel, Freedom, GammaForm, HomFit, PsdEstimate};
use crate::correlator::{correlate, normalize, write_histogram_csv, CoincidenceHistogram, HistogramSpec, NormalizedFringe, Wing};
use crate::error::{Error, Result};
use crate::events::EventFile;
use crate::lasersim::{
    derive_seed, merge_channels, run_experiment, synthesize_field, DetectorSpec, ExperimentConfig, RunMetadata,
    SourceSpec, PS_PER_S,
};
use crate::spectral::Lineshape;
use crate::svg::{line_plot, Series};

/// Swept external-cavity laser: 5 MHz triangular sweep at 1 kHz.
pub const ECDL1: Lineshape = Lineshape::FmTriangle { intrinsic_fwhm: 1.2e6, mod_rate: 1e3, deviation: 5.0e6 };
/// Free-running external-cavity laser.
pub const ECDL2: Lineshape = Lineshape::Lorentzian { fwhm: 2.2e6 };
/// Noiseless reference tone.
pub const REFERENCE: Lineshape = Lineshape::Lorentzian { fwhm: 0.0 };

pub const PRESETS: [&str; 8] =
    ["fig3", "fig4-plus", "fig4-zero", "fig4-minus", "fig5-0m", "fig5-200m", "fig5-400m", "fig5-600m"];
pub const BEAT_PRESETS: [&str; 2] = ["ecdl1", "ecdl2"];

pub const DEFAULT_SEED: u64 = 1;
pub const PRESET_RATE: f64 = 5e5;
pub const PRESET_DURATION: f64 = 2.0;
/// Refractive index of the fibre spools.
pub const FIBER_INDEX: f64 = 1.468;
const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Pipeline stages to execute.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Simulate, correlate and fit.
    #[default]
    All,
    /// Write the photon event file only.
    Simulate,
    /// Histogram an event file.
    Correlate,
    /// Fit a fringe CSV.
    Fit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistogramSection {
    /// Seconds.
    pub bin_width: f64,
    /// Half-range of `dT`, seconds.
    pub window: f64,
}

impl Default for HistogramSection {
    fn default() -> Self {
        HistogramSection { bin_width: 0.5e-9, window: 2e-6 }
    }
}

impl HistogramSection {
    pub fn spec(&self) -> Result<HistogramSpec> {
        HistogramSpec::from_seconds(self.bin_width, self.window)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    /// Model for the primary fit. Unset: the physical model built from the
    /// experiment's lineshapes, or the effective Lorentzian without one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<FitModel>,
    /// Also report an effective-Lorentzian fit (`bandwidth = 1 / tau_c`).
    pub effective_lorentzian: bool,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection { model: None, effective_lorentzian: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeatSection {
    /// Seconds of field to synthesize.
    pub duration: f64,
    pub segment_length: usize,
    pub overlap: f64,
}

impl Default for BeatSection {
    fn default() -> Self {
        BeatSection { duration: 0.05, segment_length: 8192, overlap: 0.5 }
    }
}

/// Top-level configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub stage: Stage,
    /// Event file for `stage = "correlate"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<PathBuf>,
    /// Fringe CSV for `stage = "fit"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fringe: Option<PathBuf>,
    #[serde(default)]
    pub histogram: HistogramSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub beat: BeatSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentConfig>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string() + &span_note(&e)))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative input paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.events, &mut config.fringe].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    fn experiment(&self) -> Result<&ExperimentConfig> {
        self.experiment.as_ref().ok_or_else(|| Error::Config("missing [experiment] section".into()))
    }

    pub fn validate(&self) -> Result<()> {
        self.histogram.spec()?;
        if let Some(e) = &self.experiment {
            e.validate()?;
        }
        match self.stage {
            Stage::All | Stage::Simulate => {
                self.experiment()?;
            }
            Stage::Correlate if self.events.is_none() => {
                return Err(Error::Config("stage `correlate` needs `events`".into()))
            }
            Stage::Fit if self.fringe.is_none() => return Err(Error::Config("stage `fit` needs `fringe`".into())),
            _ => {}
        }
        Ok(())
    }

    /// Seeds of the two sources, when an experiment is configured.
    pub fn seeds(&self) -> Vec<u64> {
        self.experiment.iter().flat_map(|e| [e.source_1.rng_seed, e.source_2.rng_seed]).collect()
    }

    /// Replaces both source seeds with ones derived from `base`, kept
    /// below 2^63 so they survive a TOML round trip.
    pub fn reseed(&mut self, base: u64) {
        if let Some(e) = &mut self.experiment {
            e.source_1.rng_seed = derive_seed(base, 0, 1) >> 1;
            e.source_2.rng_seed = derive_seed(base, 0, 2) >> 1;
        }
    }

    /// Primary fit model.
    pub fn fit_model(&self) -> FitModel {
        if let Some(model) = &self.fit.model {
            return model.clone();
        }
        match &self.experiment {
            Some(e) => {
                let model = FitModel::physical(e.source_1.lineshape, e.source_2.lineshape);
                if e.source_1.detuning != e.source_2.detuning {
                    model.with_delta_omega(Freedom::Free)
                } else {
                    model
                }
            }
            None => FitModel::effective_lorentzian(),
        }
    }

    /// Applies `key=value` overrides addressed by dotted TOML paths, e.g.
    /// `experiment.mode_overlap=1`.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
            set_path(&mut root, key.trim(), parse_value(raw.trim()))?;
        }
        root.try_into::<PipelineConfig>().map_err(|e| Error::Config(e.message().to_string()))
    }
}

fn span_note(e: &toml::de::Error) -> String {
    e.span().map(|s| format!(" (at byte {})", s.start)).unwrap_or_default()
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn set_path(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = root;
    for (i, part) in parts.iter().enumerate() {
        let table = node.as_table_mut().ok_or_else(|| Error::Config(format!("`{}` is not a table", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            // keep floats floats when an integer literal overrides a float field
            let value = match (table.get(*part), value) {
                (Some(toml::Value::Float(_)), toml::Value::Integer(n)) => toml::Value::Float(n as f64),
                (_, v) => v,
            };
            table.insert(part.to_string(), value);
            return Ok(());
        }
        node = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(Error::Config("empty override key".into()))
}

fn source(lineshape: Lineshape, detuning: f64, seed: u64) -> SourceSpec {
    SourceSpec { detuning, lineshape, mean_rate: PRESET_RATE, extra_delay: 0.0, rng_seed: seed }
}

/// Mode overlap giving the reported fringe visibility of 0.432 with
/// balanced rates.
pub fn fig3_mode_overlap() -> f64 {
    (0.432f64 / 0.5).sqrt()
}

/// Optical delay of a fibre spool, seconds.
pub fn spool_delay(length_m: f64) -> f64 {
    FIBER_INDEX * length_m / SPEED_OF_LIGHT
}

/// Configuration of a named reproduction preset.
pub fn preset_config(name: &str) -> Result<PipelineConfig> {
    let (detuning, spool) = match name {
        "fig3" | "fig4-zero" | "fig5-0m" => (0.0, 0.0),
        "fig4-plus" => (3.5e6, 0.0),
        "fig4-minus" => (-3.5e6, 0.0),
        "fig5-200m" => (0.0, 200.0),
        "fig5-400m" => (0.0, 400.0),
        "fig5-600m" => (0.0, 600.0),
        other => {
            return Err(Error::Config(format!("unknown preset `{other}`; expected one of {}", PRESETS.join(", "))))
        }
    };
    let mut source_1 = source(ECDL1, detuning, 0);
    source_1.extra_delay = spool_delay(spool);
    let experiment = ExperimentConfig {
        source_1,
        source_2: source(ECDL2, 0.0, 0),
        detector_a: DetectorSpec::default(),
        detector_b: DetectorSpec::default(),
        mode_overlap: fig3_mode_overlap(),
        duration: PRESET_DURATION,
        sample_dt: 2e-9,
    };
    let mut config = PipelineConfig {
        stage: Stage::All,
        events: None,
        fringe: None,
        histogram: HistogramSection::default(),
        fit: FitSection::default(),
        beat: BeatSection::default(),
        experiment: Some(experiment),
    };
    config.reseed(DEFAULT_SEED);
    Ok(config)
}

/// Beat-note presets: a laser against a noiseless reference.
pub fn beat_preset_config(name: &str) -> Result<PipelineConfig> {
    let lineshape = match name {
        "ecdl1" => ECDL1,
        "ecdl2" => ECDL2,
        other => {
            return Err(Error::Config(format!(
                "unknown beat preset `{other}`; expected a config file or one of {}",
                BEAT_PRESETS.join(", ")
            )))
        }
    };
    let mut config = preset_config("fig3")?;
    if let Some(e) = &mut config.experiment {
        e.source_1.lineshape = lineshape;
        e.source_2.lineshape = REFERENCE;
    }
    Ok(config)
}

/// Output encoding for tabular artifacts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Preset name or config path.
    pub source: String,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub artifacts: Vec<Artifact>,
}

impl RunManifest {
    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.path == name)
    }
}

struct ArtifactWriter {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl ArtifactWriter {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(ArtifactWriter { dir: dir.to_path_buf(), artifacts: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.artifacts.push(Artifact { path: name.into(), sha256: hex::encode(Sha256::digest(bytes)), bytes: bytes.len() as u64 });
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_vec_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
        text.push(b'\n');
        self.write(name, &text)
    }

    fn finish(self, source: &str, seeds: Vec<u64>) -> Result<RunManifest> {
        let manifest = RunManifest { source: source.into(), seeds, output_dir: self.dir.clone(), artifacts: self.artifacts };
        let text = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(self.dir.join("manifest.json"), text)?;
        Ok(manifest)
    }
}

/// In-memory products of a pipeline run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub manifest: RunManifest,
    pub run: Option<RunMetadata>,
    pub histogram: Option<CoincidenceHistogram>,
    pub fringe: Option<NormalizedFringe>,
    pub fit: Option<HomFit>,
    /// Effective-Lorentzian companion fit, or the reason it failed.
    pub effective_fit: Option<std::result::Result<HomFit, String>>,
}

/// Runs the configured stages and writes artifacts into `out`.
pub fn execute(config: &PipelineConfig, source: &str, out: &Path, format: Format) -> Result<Outcome> {
    config.validate()?;
    let mut writer = ArtifactWriter::new(out)?;
    writer.write("config.toml", config.to_toml()?.as_bytes())?;
    let mut outcome = Outcome {
        manifest: RunManifest { source: source.into(), seeds: config.seeds(), output_dir: out.into(), artifacts: vec![] },
        run: None,
        histogram: None,
        fringe: None,
        fit: None,
        effective_fit: None,
    };

    let fringe = match config.stage {
        Stage::Fit => {
            let path = config.fringe.as_ref().expect("validated");
            let text = std::fs::read_to_string(path)?;
            NormalizedFringe::read_csv(&text)?
        }
        Stage::All | Stage::Simulate | Stage::Correlate => {
            let (a, b, duration) = match config.stage {
                Stage::Correlate => {
                    let file = EventFile::load(config.events.as_ref().expect("validated"))?;
                    let (a, b) = file.split();
                    (a, b, file.duration_ps as f64 / PS_PER_S)
                }
                _ => {
                    let run = run_experiment(config.experiment()?)?;
                    writer.json("run.json", &run.metadata)?;
                    if config.stage == Stage::Simulate {
                        let file = EventFile { duration_ps: ps(run.metadata.duration), events: merge_channels(&run.events_a, &run.events_b) };
                        let mut bytes = Vec::new();
                        file.write_binary(&mut bytes)?;
                        writer.write("events.bin", &bytes)?;
                        outcome.run = Some(run.metadata);
                        outcome.manifest = writer.finish(source, config.seeds())?;
                        return Ok(outcome);
                    }
                    let duration = run.metadata.duration;
                    outcome.run = Some(run.metadata);
                    (run.events_a, run.events_b, duration)
                }
            };
            let spec = config.histogram.spec()?;
            let hist = correlate(&a, &b, &spec)?.with_duration(duration);
            let fringe = normalize(&hist, Wing::outer_half(&spec))?;
            write_tables(&mut writer, &hist, &fringe, format)?;
            outcome.histogram = Some(hist);
            if config.stage == Stage::Correlate {
                outcome.fringe = Some(fringe);
                outcome.manifest = writer.finish(source, config.seeds())?;
                return Ok(outcome);
            }
            fringe
        }
    };

    let model = config.fit_model();
    let fit = fit_hom(&fringe, &model, None)?;
    let effective = config.fit.effective_lorentzian.then(|| {
        let eff = FitModel { gamma_form: GammaForm::EffectiveLorentzian, ..model.clone() };
        fit_hom(&fringe, &eff, None).map_err(|e| e.to_string())
    });
    let mut report = serde_json::json!({ "fit": fit.report() });
    if let Some(eff) = &effective {
        report["effective_lorentzian"] = match eff {
            Ok(f) => f.report(),
            Err(msg) => serde_json::json!({ "error": msg }),
        };
    }
    if let Some(e) = &config.experiment {
        report["expected_visibility"] = serde_json::json!(e.expected_visibility());
        report["true_delta_omega"] = serde_json::json!(2.0 * PI * (e.source_1.detuning - e.source_2.detuning));
    }
    writer.json("fit.json", &report)?;
    writer.write("fringe.svg", fringe_svg(&fringe, &fit, source).as_bytes())?;
    outcome.fringe = Some(fringe);
    outcome.fit = Some(fit);
    outcome.effective_fit = effective;
    outcome.manifest = writer.finish(source, config.seeds())?;
    Ok(outcome)
}

fn ps(seconds: f64) -> u64 {
    (seconds * PS_PER_S).round() as u64
}

fn write_tables(writer: &mut ArtifactWriter, hist: &CoincidenceHistogram, fringe: &NormalizedFringe, format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            let mut h = Vec::new();
            write_histogram_csv(hist, None, &mut h)?;
            writer.write("histogram.csv", &h)?;
            writer.json("histogram_meta.json", &hist.metadata_json())?;
            let mut f = Vec::new();
            fringe.write_csv(&mut f)?;
            writer.write("fringe.csv", &f)?;
        }
        Format::Json => {
            let mut meta = hist.metadata_json();
            meta["counts"] = serde_json::json!(hist.counts);
            writer.json("histogram.json", &meta)?;
            writer.json("fringe.json", fringe)?;
        }
    }
    Ok(())
}

fn fringe_svg(fringe: &NormalizedFringe, fit: &HomFit, title: &str) -> String {
    let data: Vec<(f64, f64)> = fringe.centers.iter().zip(&fringe.values).map(|(&t, &v)| (t * 1e9, v)).collect();
    let model: Vec<(f64, f64)> = fringe.centers.iter().map(|&t| (t * 1e9, fit.evaluate(t))).collect();
    line_plot(
        title,
        "delay (ns)",
        "normalized coincidences",
        &[
            Series { label: "data", color: "#1f77b4", points: &data },
            Series { label: "fit", color: "#d62728", points: &model },
        ],
    )
}

/// Width diagnostics and spectrum of a simulated beat note.
#[derive(Debug)]
pub struct BeatOutcome {
    pub manifest: RunManifest,
    pub psd: PsdEstimate,
    pub width: Result<crate::analysis::PsdWidth>,
}

/// Synthesizes both sources' fields and writes the beat spectrum.
pub fn execute_beat(config: &PipelineConfig, source: &str, out: &Path, format: Format) -> Result<BeatOutcome> {
    let e = config.experiment()?;
    e.source_1.validate("source_1")?;
    e.source_2.validate("source_2")?;
    let beat = &config.beat;
    if !(beat.duration > 0.0 && beat.duration.is_finite()) {
        return Err(Error::invalid("beat.duration", "must be > 0"));
    }
    let dt = e.sample_dt;
    if dt > e.max_sample_dt() {
        return Err(Error::Config(format!("sample_dt {dt:.3e} s is too coarse for these sources")));
    }
    let f1 = synthesize_field(&e.source_1, beat.duration, dt, derive_seed(e.source_1.rng_seed, 1, 0))?;
    let f2 = synthesize_field(&e.source_2, beat.duration, dt, derive_seed(e.source_2.rng_seed, 1, 0))?;
    let psd = beat_psd(f1, f2, dt, beat.segment_length, beat.overlap)?;
    let width = psd_width(&psd);

    let mut writer = ArtifactWriter::new(out)?;
    writer.write("config.toml", config.to_toml()?.as_bytes())?;
    match format {
        Format::Csv => {
            let mut bytes = Vec::new();
            psd.write_csv(&mut bytes)?;
            writer.write("psd.csv", &bytes)?;
        }
        Format::Json => writer.json("psd.json", &psd)?,
    }
    let summary = serde_json::json!({
        "segments": psd.segments,
        "resolution_Hz": psd.df(),
        "area": psd.area(),
        "peak_frequency_Hz": psd.peak_frequency(),
        "width": match &width {
            Ok(w) => serde_json::json!({
                "fwhm_Hz": w.fwhm,
                "width_10_Hz": w.width_10,
                "edge_steepness": w.edge_steepness,
                "flat_top": w.is_flat_top(),
                "lorentzian_like": w.is_lorentzian_like(),
            }),
            Err(err) => serde_json::json!({ "error": err.to_string() }),
        },
    });
    writer.json("beat.json", &summary)?;
    let points: Vec<(f64, f64)> = psd.frequencies.iter().zip(&psd.density).map(|(&f, &d)| (f * 1e-6, d)).collect();
    let svg = line_plot(source, "beat frequency (MHz)", "density (1/Hz)", &[Series { label: "beat PSD", color: "#1f77b4", points: &points }]);
    writer.write("psd.svg", svg.as_bytes())?;
    let manifest = writer.finish(source, config.seeds())?;
    Ok(BeatOutcome { manifest, psd, width })
}

#[derive(Debug, Parser)]
#[command(name = "cwhom", version, about = "Two-photon interference of independent CW lasers: simulate, correlate, fit")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Base seed; both source seeds are derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Acquisition time, seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Override any config field, e.g. `--set experiment.mode_overlap=1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a reproduction preset end to end.
    Preset {
        /// fig3, fig4-plus, fig4-zero, fig4-minus, fig5-0m, fig5-200m, fig5-400m, fig5-600m
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run the pipeline described by a TOML config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Histogram and normalize an event file.
    Correlate {
        events: PathBuf,
        /// Bin width, picoseconds.
        #[arg(long, default_value_t = 500)]
        bin_width_ps: u64,
        /// Half-range of the delay axis, picoseconds.
        #[arg(long, default_value_t = 2_000_000)]
        window_ps: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Fit a normalized fringe CSV.
    Fit {
        fringe: PathBuf,
        /// Config whose [fit] (and optional [experiment]) sections choose the model.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Beat-note spectrum of two sources (config file, or `ecdl1` / `ecdl2`
    /// against a noiseless reference).
    Beat {
        config: String,
        #[command(flatten)]
        common: Common,
    },
}

fn prepare(mut config: PipelineConfig, common: &Common) -> Result<PipelineConfig> {
    if let Some(seed) = common.seed {
        config.reseed(seed);
    }
    if let (Some(d), Some(e)) = (common.duration, config.experiment.as_mut()) {
        e.duration = d;
    }
    config.with_overrides(&common.overrides)
}

fn binning_label(config: &PipelineConfig) -> String {
    format!("{:.1} ns bins", config.histogram.bin_width * 1e9)
}

fn dispatch(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Preset { name, common } => {
            let config = prepare(preset_config(&name)?, &common)?;
            let outcome = execute(&config, &name, &common.out, common.format)?;
            Ok(summarize(&outcome, &binning_label(&config)))
        }
        Command::Run { config: path, common } => {
            let config = prepare(PipelineConfig::load(&path)?, &common)?;
            let outcome = execute(&config, &path.display().to_string(), &common.out, common.format)?;
            Ok(summarize(&outcome, &binning_label(&config)))
        }
        Command::Correlate { events, bin_width_ps, window_ps, common } => {
            let spec = HistogramSpec::new(bin_width_ps, window_ps)?;
            let mut config = PipelineConfig {
                stage: Stage::Correlate,
                events: Some(events.clone()),
                fringe: None,
                histogram: HistogramSection { bin_width: spec.bin_width(), window: spec.window() },
                fit: FitSection::default(),
                beat: BeatSection::default(),
                experiment: None,
            };
            config = config.with_overrides(&common.overrides)?;
            let outcome = execute(&config, &events.display().to_string(), &common.out, common.format)?;
            Ok(summarize(&outcome, &binning_label(&config)))
        }
        Command::Fit { fringe, config, common } => {
            let mut cfg = match config {
                Some(p) => PipelineConfig::load(&p)?,
                None => PipelineConfig::from_toml("")?,
            };
            cfg.stage = Stage::Fit;
            cfg.fringe = Some(fringe.clone());
            let cfg = cfg.with_overrides(&common.overrides)?;
            let outcome = execute(&cfg, &fringe.display().to_string(), &common.out, common.format)?;
            Ok(summarize(&outcome, ""))
        }
        Command::Beat { config, common } => {
            let path = Path::new(&config);
            let base = if path.exists() { PipelineConfig::load(path)? } else { beat_preset_config(&config)? };
            let mut cfg = prepare(base, &common)?;
            if let Some(d) = common.duration {
                cfg.beat.duration = d;
            }
            let outcome = execute_beat(&cfg, &config, &common.out, common.format)?;
            let mut text = format!("{} Welch segments, resolution {:.3e} Hz\n", outcome.psd.segments, outcome.psd.df());
            match &outcome.width {
                Ok(w) => text += &format!("FWHM {:.4} MHz, edge steepness {:.3}\n", w.fwhm * 1e-6, w.edge_steepness),
                Err(e) => text += &format!("width unavailable: {e}\n"),
            }
            text += &format!("artifacts in {}\n", outcome.manifest.output_dir.display());
            Ok(text)
        }
    }
}

fn summarize(outcome: &Outcome, binning: &str) -> String {
    let mut text = String::new();
    if let Some(run) = &outcome.run {
        text += &format!("singles: A {:.4e} cps, B {:.4e} cps over {} s\n", run.singles_rate_a, run.singles_rate_b, run.duration);
    }
    if let Some(h) = &outcome.histogram {
        text += &format!("coincidences: {} in {} bins ({binning})\n", h.total(), h.counts.len());
    }
    if let Some(fit) = &outcome.fit {
        for p in &fit.parameters {
            text += &format!("{:>12} = {:.6e} +/- {:.2e}\n", p.name, p.value, p.sigma);
        }
        text += &format!("reduced chi2 = {:.4}\n", fit.reduced_chi2);
    }
    if let Some(Ok(eff)) = &outcome.effective_fit {
        if let (Some(t), Some(bw)) = (eff.tau_c(), eff.effective_bandwidth()) {
            text += &format!("effective Lorentzian: tau_c = {:.2} ns, 1/tau_c = {:.3} MHz\n", t.value * 1e9, bw.value * 1e-6);
        }
    }
    text += &format!("artifacts in {}\n", outcome.manifest.output_dir.display());
    text
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_convergence() {
        3
    } else if err.is_validation() {
        2
    } else {
        1
    }
}

/// Entry point shared by the binary and tests.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let threads = cli.threads;
    let run = || dispatch(cli);
    let result = match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => Err(Error::Config(format!("thread pool: {e}"))),
        },
        None => run(),
    };
    match result {
        Ok(text) => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
