//! Simulation and analysis of time-resolved Hong-Ou-Mandel interference
//! between two independent continuous-wave laser sources.
//!
//! The crate is organised as a pipeline:
//!
//! - [`spectral`]: lineshapes, field correlations and the analytic fringe model
//! - [`lasersim`]: phase-noise field synthesis, beamsplitter and detectors
//! - [`correlator`]: coincidence histogramming of photon timestamps
//! - [`analysis`]: fringe fitting, beat spectra and model comparison
//! - [`cli`]: presets, configuration files and artifact output

pub mod analysis;
pub mod cli;
pub mod correlator;
pub mod error;
pub mod events;
pub mod lasersim;
pub mod spectral;
mod svg;

pub use correlator::{correlate, merge, normalize, CoincidenceHistogram, HistogramSpec, NormalizedFringe, Wing};
pub use error::{Error, Result};
pub use lasersim::{run_experiment, DetectorSpec, ExperimentConfig, ExperimentRun, SourceSpec};
pub use spectral::{coincidence_probability, g1, mutual_coherence, FringeModel, GammaSign, Lineshape};
