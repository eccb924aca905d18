//! Heart-rate estimation from remote photoplethysmography traces.
//!
//! The baseline estimator detrends and smooths each sliding window, takes a
//! Hann-tapered periodogram restricted to 0.7–3 Hz and reads the heart rate
//! at the spectral peak. The quality-gated estimator splits every window into
//! shorter subwindows, scores each one from its spectrum (SNR, 99% bandwidth,
//! peak ratio) and reads the heart rate from the best-scoring subwindow only.
//!
//! A seeded simulator supplies labelled traces for calibration and testing,
//! and [`evaluation`] reproduces the per-video MAE protocol.

pub mod cli;
pub mod dsp;
pub mod error;
pub mod estimator;
pub mod evaluation;
mod fsio;
pub mod par;
pub mod quality;
pub mod simulator;
pub mod trace;

pub use dsp::{PipelineConfig, PowerSpectrum};
pub use error::{Error, Result};
pub use estimator::{EstimateRow, EstimatorOptions, HrEstimate, Method, MethodSelection, WindowSpec};
pub use evaluation::EvaluationReport;
pub use fsio::write_atomic;
pub use par::Execution;
pub use quality::{CalibrationParams, QualityFeatures, QualityScore};
pub use simulator::{ArtifactKind, ArtifactSpec, CorpusRecord, SimulationConfig};
pub use trace::{FrameStream, RoiBox, SampleTrace};
