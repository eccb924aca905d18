//! Deterministic synthetic pulse traces, artifact injection, calibration of
//! the quality normalization, and seeded corpora.
//!
//! Randomness comes from ChaCha8 seeded with a 64-bit integer, so every
//! output is a pure function of its configuration and seed on any platform.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dsp::{self, PipelineConfig, PowerSpectrum};
use crate::error::{Error, Result};
use crate::estimator::{enumerate_subwindows, enumerate_windows, WindowSpec};
use crate::fsio;
use crate::par::Execution;
use crate::quality::{CalibrationParams, QualityFeatures};
use crate::trace::{self, SampleTrace};

pub const MIN_BPM: f64 = 42.0;
pub const MAX_BPM: f64 = 180.0;

/// Heart rate knot: `(time_s, bpm)`. Rates are linear between knots and
/// constant outside them.
pub type HrKnot = (f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub fs: f64,
    pub duration: f64,
    pub hr_trajectory: Vec<HrKnot>,
    /// Amplitude of the fundamental followed by its overtones.
    pub pulse_harmonics: Vec<f64>,
    #[serde(default)]
    pub drift_amplitude: f64,
    #[serde(default = "default_drift_period")]
    pub drift_period: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    pub seed: u64,
}

fn default_drift_period() -> f64 {
    20.0
}

impl SimulationConfig {
    /// Constant heart rate, fundamental plus overtones, no drift.
    pub fn constant(bpm: f64, duration: f64, harmonics: Vec<f64>, noise_sigma: f64, seed: u64) -> Self {
        Self {
            fs: 20.0,
            duration,
            hr_trajectory: vec![(0.0, bpm)],
            pulse_harmonics: harmonics,
            drift_amplitude: 0.0,
            drift_period: default_drift_period(),
            noise_sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadConfig(m));
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return bad(format!("fs must be > 0, got {}", self.fs));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration must be > 0, got {}", self.duration));
        }
        if self.hr_trajectory.is_empty() {
            return bad("empty heart-rate trajectory".into());
        }
        if self.hr_trajectory.windows(2).any(|w| w[1].0 <= w[0].0) {
            return bad("trajectory knot times must be strictly increasing".into());
        }
        if let Some(&(_, b)) = self
            .hr_trajectory
            .iter()
            .find(|&&(_, b)| !(MIN_BPM..=MAX_BPM).contains(&b))
        {
            return bad(format!("heart rate {b} bpm outside [{MIN_BPM}, {MAX_BPM}]"));
        }
        if self.pulse_harmonics.iter().any(|&a| !(a >= 0.0)) {
            return bad("harmonic amplitudes must be >= 0".into());
        }
        let max_hz = self
            .hr_trajectory
            .iter()
            .map(|&(_, b)| b / 60.0)
            .fold(0.0, f64::max);
        if !(self.fs > 2.0 * max_hz) {
            return bad(format!("fs {} Hz must exceed twice the max rate {max_hz} Hz", self.fs));
        }
        if !(self.drift_amplitude >= 0.0 && self.drift_period > 0.0) {
            return bad("drift needs amplitude >= 0 and period > 0".into());
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise sigma must be >= 0".into());
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.duration * self.fs).round() as usize
    }

    pub fn bpm_at(&self, t: f64) -> f64 {
        let knots = &self.hr_trajectory;
        if t <= knots[0].0 {
            return knots[0].1;
        }
        for w in knots.windows(2) {
            let ((t0, b0), (t1, b1)) = (w[0], w[1]);
            if t <= t1 {
                return b0 + (b1 - b0) * (t - t0) / (t1 - t0);
            }
        }
        knots[knots.len() - 1].1
    }

    /// Number of heart cycles elapsed at time `t`, the exact integral of the
    /// piecewise-linear rate.
    pub fn cycles_at(&self, t: f64) -> f64 {
        // trapezoids are exact for a rate that is linear between the points
        let mut points = vec![0.0];
        points.extend(self.hr_trajectory.iter().map(|k| k.0).filter(|&kt| kt > 0.0 && kt < t));
        points.push(t);
        points
            .windows(2)
            .map(|w| 0.5 * (self.bpm_at(w[0]) + self.bpm_at(w[1])) / 60.0 * (w[1] - w[0]))
            .sum()
    }
}

/// Synthesized pulse plus the true heart rate sampled once per second.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPulse {
    pub trace: SampleTrace,
    pub hr_per_second: Vec<f64>,
}

/// Harmonic pulse with integrated-frequency phase, sinusoidal drift and
/// seeded white Gaussian noise.
pub fn synth_pulse(cfg: &SimulationConfig) -> Result<SyntheticPulse> {
    cfg.validate()?;
    let n = cfg.sample_count();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::BadConfig(e.to_string()))?;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / cfg.fs;
            let phase = cfg.cycles_at(t);
            let pulse: f64 = cfg
                .pulse_harmonics
                .iter()
                .enumerate()
                .map(|(k, &a)| a * (2.0 * PI * (k + 1) as f64 * phase).sin())
                .sum();
            let drift = cfg.drift_amplitude * (2.0 * PI * t / cfg.drift_period).sin();
            let eps = if cfg.noise_sigma > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            pulse + drift + eps
        })
        .collect();
    let hr_per_second = (0..cfg.duration.floor() as usize)
        .map(|s| cfg.bpm_at(s as f64))
        .collect();
    Ok(SyntheticPulse {
        trace: SampleTrace::new(samples, cfg.fs)?,
        hr_per_second,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArtifactKind {
    MotionBurst,
    IlluminationStep,
    Vibration,
    Dropout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArtifactSpec {
    pub kind: ArtifactKind,
    /// Seconds from the trace start.
    pub start: f64,
    pub length: f64,
    /// In units of the clean-signal amplitude.
    #[serde(default)]
    pub magnitude: f64,
}

impl ArtifactSpec {
    pub fn new(kind: ArtifactKind, start: f64, length: f64, magnitude: f64) -> Self {
        Self {
            kind,
            start,
            length,
            magnitude,
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.length
    }

    pub fn overlaps(&self, start: f64, end: f64) -> bool {
        self.start < end && start < self.end()
    }
}

/// Amplitude unit for artifact magnitudes: √2 × standard deviation of the
/// finite samples, i.e. the amplitude of an equivalent sinusoid. Flat traces
/// use 1.
pub fn amplitude_unit(trace: &SampleTrace) -> f64 {
    let vals: Vec<f64> = trace
        .samples()
        .iter()
        .zip(trace.gap_mask())
        .filter(|(v, &g)| v.is_finite() && !g)
        .map(|(&v, _)| v)
        .collect();
    if vals.is_empty() {
        return 1.0;
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
    let unit = (2.0 * var).sqrt();
    if unit > 0.0 { unit } else { 1.0 }
}

/// Cosine fade length at each end of a motion burst.
pub const BURST_RAMP_S: f64 = 0.25;

fn burst_envelope(j: usize, len: usize, fs: f64) -> f64 {
    let ramp = (BURST_RAMP_S * fs).min(len as f64 / 2.0);
    let edge = (j as f64 + 0.5).min(len as f64 - j as f64 - 0.5);
    if edge >= ramp {
        1.0
    } else {
        (0.5 * PI * edge / ramp).sin().powi(2)
    }
}

/// Adds seeded artifacts to a trace. Magnitudes are scaled by
/// [`amplitude_unit`] of the input.
pub fn inject_artifacts(trace: &SampleTrace, artifacts: &[ArtifactSpec], seed: u64) -> Result<SampleTrace> {
    if artifacts.is_empty() {
        return Ok(trace.clone());
    }
    let fs = trace.fs();
    let n = trace.len();
    let unit = amplitude_unit(trace);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut samples, mut gaps) = trace.clone().into_parts();
    for a in artifacts {
        let i0 = (a.start * fs).round();
        let i1 = (a.end() * fs).round();
        if !(a.start >= 0.0 && a.length >= 0.0 && a.magnitude >= 0.0) || i1 > n as f64 || i0 > i1 {
            return Err(Error::ArtifactOutOfRange {
                start: a.start,
                end: a.end(),
            });
        }
        let (i0, i1) = (i0 as usize, i1 as usize);
        let len = i1 - i0;
        let amp = a.magnitude * unit;
        match a.kind {
            ArtifactKind::MotionBurst => {
                // slow sway of three random sub-0.5 Hz components, faded in and out
                // over BURST_RAMP_S
                let parts: Vec<(f64, f64)> = (0..3)
                    .map(|_| (rng.random_range(0.1..0.5), rng.random_range(0.0..2.0 * PI)))
                    .collect();
                let shape: Vec<f64> = (0..len)
                    .map(|j| {
                        let t = j as f64 / fs;
                        let env = burst_envelope(j, len, fs);
                        env * parts
                            .iter()
                            .map(|&(f, ph)| (2.0 * PI * f * t + ph).sin())
                            .sum::<f64>()
                    })
                    .collect();
                let peak = shape.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if peak > 0.0 {
                    for (s, v) in samples[i0..i1].iter_mut().zip(&shape) {
                        *s += amp * v / peak;
                    }
                }
            }
            ArtifactKind::IlluminationStep => {
                for s in &mut samples[i0..i1] {
                    *s += amp;
                }
            }
            ArtifactKind::Vibration => {
                let f = rng.random_range(4.0..8.0);
                let ph = rng.random_range(0.0..2.0 * PI);
                for (j, s) in samples[i0..i1].iter_mut().enumerate() {
                    *s += amp * (2.0 * PI * f * (i0 + j) as f64 / fs + ph).sin();
                }
            }
            ArtifactKind::Dropout => {
                for (s, g) in samples[i0..i1].iter_mut().zip(&mut gaps[i0..i1]) {
                    *s = f64::NAN;
                    *g = true;
                }
            }
        }
    }
    SampleTrace::with_gaps(samples, gaps, fs, trace.t0())
}

/// Calibration statistics over a reference set of subwindow spectra.
/// Spectra without in-band power are skipped.
pub fn calibrate(reference: &[PowerSpectrum]) -> Result<CalibrationParams> {
    let values: Vec<[f64; 3]> = reference
        .iter()
        .filter_map(|s| QualityFeatures::from_spectrum(s).ok())
        .map(|f| f.calibration_space())
        .collect();
    if values.is_empty() {
        return Err(Error::EmptyReference);
    }
    let n = values.len() as f64;
    let mut stats = [(0.0, 0.0); 3];
    for (k, stat) in stats.iter_mut().enumerate() {
        let mean = values.iter().map(|v| v[k]).sum::<f64>() / n;
        let var = values.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / n;
        *stat = (mean, var.sqrt());
    }
    Ok(CalibrationParams::from_stats(stats))
}

/// Spectra of every subwindow of every usable window of the given traces.
pub fn subwindow_spectra(
    traces: &[SampleTrace],
    spec: &WindowSpec,
    cfg: &PipelineConfig,
    exec: Execution,
) -> Result<Vec<PowerSpectrum>> {
    let per_trace = exec.try_map(traces, |t| -> Result<Vec<PowerSpectrum>> {
        let repaired = trace::interpolate_gaps(t)?;
        let mut out = Vec::new();
        for w in enumerate_windows(&repaired, spec)? {
            let gaps = &repaired.gap_mask()[w.range.clone()];
            if gaps.iter().filter(|&&g| g).count() as f64 / gaps.len() as f64 > trace::MAX_GAP_FRACTION {
                continue;
            }
            let x = &repaired.samples()[w.range.clone()];
            for sub in enumerate_subwindows(x.len(), spec, cfg.fs) {
                out.push(dsp::process_window(&x[sub.range], cfg)?);
            }
        }
        Ok(out)
    })?;
    Ok(per_trace.into_iter().flatten().collect())
}

/// One corpus entry. `seed` drives artifact injection; `config.seed` drives
/// the pulse noise. Paths are relative to the corpus directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub seed: u64,
    pub config: SimulationConfig,
    #[serde(default)]
    pub artifacts: Vec<ArtifactSpec>,
    #[serde(default = "default_groundtruth_fs")]
    pub groundtruth_fs: f64,
    pub trace_path: PathBuf,
    pub groundtruth_path: PathBuf,
}

fn default_groundtruth_fs() -> f64 {
    500.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedRecord {
    /// Camera-rate trace with artifacts.
    pub trace: SampleTrace,
    /// Clean contact pulse at `groundtruth_fs`.
    pub groundtruth: SampleTrace,
    pub hr_per_second: Vec<f64>,
}

/// Synthesizes the camera trace and its clean ground-truth pulse.
pub fn simulate_record(record: &CorpusRecord) -> Result<SimulatedRecord> {
    let clean = synth_pulse(&record.config)?;
    let trace = inject_artifacts(&clean.trace, &record.artifacts, record.seed)?;
    let gt_cfg = SimulationConfig {
        fs: record.groundtruth_fs,
        noise_sigma: 0.0,
        drift_amplitude: 0.0,
        ..record.config.clone()
    };
    let groundtruth = synth_pulse(&gt_cfg)?.trace;
    Ok(SimulatedRecord {
        trace,
        groundtruth,
        hr_per_second: clean.hr_per_second,
    })
}

pub fn parse_manifest(text: &str) -> Result<Vec<CorpusRecord>> {
    Ok(serde_json::from_str(text)?)
}

pub fn read_manifest(path: &Path) -> Result<Vec<CorpusRecord>> {
    parse_manifest(&fsio::read_string(path)?)
}

pub fn format_manifest(records: &[CorpusRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(records)? + "\n")
}

/// Simulates every record and writes its trace and ground-truth CSVs under `dir`.
pub fn write_corpus(records: &[CorpusRecord], dir: &Path, exec: Execution) -> Result<()> {
    exec.try_map(records, |r| {
        let sim = simulate_record(r)?;
        trace::write_csv_trace(&dir.join(&r.trace_path), &sim.trace)?;
        trace::write_csv_trace(&dir.join(&r.groundtruth_path), &sim.groundtruth)
    })?;
    Ok(())
}

fn record(id: String, seed: u64, config: SimulationConfig, artifacts: Vec<ArtifactSpec>) -> CorpusRecord {
    CorpusRecord {
        trace_path: format!("{id}.trace.csv").into(),
        groundtruth_path: format!("{id}.ppg.csv").into(),
        id,
        seed,
        config,
        artifacts,
        groundtruth_fs: default_groundtruth_fs(),
    }
}

/// Harmonic amplitudes used by the built-in corpora.
pub const DEFAULT_HARMONICS: [f64; 3] = [1.0, 0.5, 0.25];

/// Corpus of one-minute traces, each with three 2 s motion bursts of
/// magnitude 10 at random non-overlapping positions and one illumination step.
pub fn motion_corpus(count: usize, seed: u64) -> Vec<CorpusRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let bpm = rng.random_range(50.0..160.0);
            let cfg = SimulationConfig {
                noise_sigma: 0.05,
                drift_amplitude: 0.3,
                ..SimulationConfig::constant(bpm, 60.0, DEFAULT_HARMONICS.to_vec(), 0.0, rng.random())
            };
            let mut artifacts = Vec::new();
            // one burst per 20 s third of the trace
            for third in 0..3 {
                let start = 20.0 * third as f64 + rng.random_range(1.0..17.0f64).round();
                artifacts.push(ArtifactSpec::new(ArtifactKind::MotionBurst, start, 2.0, 10.0));
            }
            let step_at = rng.random_range(5.0..55.0f64).round();
            artifacts.push(ArtifactSpec::new(ArtifactKind::IlluminationStep, step_at, 60.0 - step_at, 3.0));
            record(format!("m{i:02}"), rng.random(), cfg, artifacts)
        })
        .collect()
}

/// Seed of the built-in calibration reference corpus.
pub const REFERENCE_SEED: u64 = 0x5EED_CA11;

/// Reference corpus behind the shipped calibration: clean traces across the
/// heart-rate band plus traces carrying each artifact kind.
pub fn reference_corpus() -> Vec<CorpusRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(REFERENCE_SEED);
    let mut out = Vec::new();
    for i in 0..24 {
        let bpm = rng.random_range(45.0..175.0);
        let noise = rng.random_range(0.02..0.2);
        let cfg = SimulationConfig {
            drift_amplitude: rng.random_range(0.0..0.5),
            ..SimulationConfig::constant(bpm, 30.0, DEFAULT_HARMONICS.to_vec(), noise, rng.random())
        };
        let artifacts = match i % 4 {
            0 | 1 => Vec::new(),
            2 => vec![
                ArtifactSpec::new(ArtifactKind::MotionBurst, rng.random_range(2.0..12.0f64).round(), 2.0, 10.0),
                ArtifactSpec::new(ArtifactKind::MotionBurst, rng.random_range(16.0..26.0f64).round(), 2.0, 10.0),
            ],
            _ => vec![
                ArtifactSpec::new(ArtifactKind::IlluminationStep, rng.random_range(5.0..25.0f64).round(), 3.0, 3.0),
                ArtifactSpec::new(ArtifactKind::Vibration, 0.0, 30.0, rng.random_range(0.5..2.0)),
            ],
        };
        out.push(record(format!("ref{i:02}"), rng.random(), cfg, artifacts));
    }
    out
}

/// Calibration over every subwindow of the given corpus.
pub fn calibrate_corpus(
    records: &[CorpusRecord],
    spec: &WindowSpec,
    cfg: &PipelineConfig,
    exec: Execution,
) -> Result<CalibrationParams> {
    let traces = exec.try_map(records, |r| simulate_record(r).map(|s| s.trace))?;
    calibrate(&subwindow_spectra(&traces, spec, cfg, exec)?)
}

/// Recomputes the shipped calibration from the built-in reference corpus.
pub fn reference_calibration(exec: Execution) -> Result<CalibrationParams> {
    calibrate_corpus(&reference_corpus(), &WindowSpec::default(), &PipelineConfig::default(), exec)
}
