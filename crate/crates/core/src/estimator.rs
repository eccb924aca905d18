//! Sliding-window orchestration for the baseline and quality-gated
//! heart-rate estimators.

use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::{self, PipelineConfig, PowerSpectrum};
use crate::error::{Error, Result};
use crate::fsio;
use crate::par::Execution;
use crate::quality::{self, CalibrationParams, QualityFeatures, QualityScore};
use crate::trace::{self, SampleTrace, MAX_GAP_FRACTION};

pub const ESTIMATES_HEADER: &str = "window_start_s,method,hr_bpm,q,sub_start_s,sub_len_s";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    /// Window length in seconds.
    pub window_s: f64,
    pub stride_s: f64,
    /// Candidate subwindow lengths in seconds.
    pub subwindow_s: Vec<f64>,
    pub substride_s: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            window_s: 7.0,
            stride_s: 1.0,
            subwindow_s: vec![5.0, 6.0, 7.0],
            substride_s: 2.0,
        }
    }
}

fn seconds_to_samples(s: f64, fs: f64) -> usize {
    (s * fs).round() as usize
}

impl WindowSpec {
    pub fn validate(&self, fs: f64) -> Result<()> {
        let bad = |m: String| Err(Error::BadWindowSpec(m));
        if !(self.window_s > 0.0 && seconds_to_samples(self.window_s, fs) >= 1) {
            return bad(format!("window length {} s", self.window_s));
        }
        if !(self.stride_s > 0.0 && seconds_to_samples(self.stride_s, fs) >= 1) {
            return bad(format!("window stride {} s", self.stride_s));
        }
        if !(self.substride_s > 0.0 && seconds_to_samples(self.substride_s, fs) >= 1) {
            return bad(format!("subwindow stride {} s", self.substride_s));
        }
        if self.subwindow_s.is_empty() {
            return bad("no subwindow lengths".into());
        }
        for &t in &self.subwindow_s {
            if !(t > 0.0 && t <= self.window_s + 1e-9) {
                return bad(format!("subwindow length {t} s must lie in (0, {}]", self.window_s));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Baseline,
    Quality,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Baseline => "baseline",
            Method::Quality => "quality",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Method::Baseline),
            "quality" => Ok(Method::Quality),
            other => Err(Error::Usage(format!("unknown method {other:?}"))),
        }
    }
}

/// One heart-rate estimate for a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrEstimate {
    pub window_start: f64,
    pub hr_bpm: f64,
    pub method: Method,
    pub q: Option<f64>,
    pub sub_start: Option<f64>,
    pub sub_len: Option<f64>,
}

/// A window of a trace, addressed by sample range.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start_s: f64,
    pub range: Range<usize>,
}

/// A candidate subwindow, relative to its parent window.
#[derive(Debug, Clone, PartialEq)]
pub struct Subwindow {
    pub len_s: f64,
    pub offset_s: f64,
    pub range: Range<usize>,
}

/// Windows of `window_s` seconds starting every `stride_s` seconds while the
/// window still fits in the trace.
pub fn enumerate_windows(trace: &SampleTrace, spec: &WindowSpec) -> Result<Vec<Window>> {
    spec.validate(trace.fs())?;
    let fs = trace.fs();
    let len = seconds_to_samples(spec.window_s, fs);
    let step = seconds_to_samples(spec.stride_s, fs);
    if trace.len() < len {
        return Err(Error::TraceTooShort {
            duration: trace.duration(),
            window: spec.window_s,
        });
    }
    Ok((0..=(trace.len() - len) / step)
        .map(|i| {
            let start = i * step;
            Window {
                start_s: trace.t0() + start as f64 / fs,
                range: start..start + len,
            }
        })
        .collect())
}

/// Subwindows ordered by ascending length, then ascending offset.
pub fn enumerate_subwindows(window_len: usize, spec: &WindowSpec, fs: f64) -> Vec<Subwindow> {
    let mut lengths = spec.subwindow_s.clone();
    lengths.sort_by(f64::total_cmp);
    lengths.dedup();
    let step = seconds_to_samples(spec.substride_s, fs).max(1);
    let mut out = Vec::new();
    for len_s in lengths {
        let len = seconds_to_samples(len_s, fs);
        if len == 0 || len > window_len {
            continue;
        }
        let mut off = 0;
        while off + len <= window_len {
            out.push(Subwindow {
                len_s,
                offset_s: off as f64 / fs,
                range: off..off + len,
            });
            off += step;
        }
    }
    out
}

pub fn estimate_baseline(window: &[f64], start_s: f64, cfg: &PipelineConfig) -> Result<HrEstimate> {
    let spectrum = dsp::process_window(window, cfg)?;
    let hr_bpm = dsp::peak_hr(&spectrum).map_err(|e| match e {
        Error::EmptySpectrum => Error::UnusableWindow { start: start_s },
        other => other,
    })?;
    Ok(HrEstimate {
        window_start: start_s,
        hr_bpm,
        method: Method::Baseline,
        q: None,
        sub_start: None,
        sub_len: None,
    })
}

/// Quality assessment of one candidate subwindow. `assessment` is `None` when
/// the subwindow carries no in-band power.
#[derive(Debug, Clone)]
pub struct ScoredSubwindow {
    pub subwindow: Subwindow,
    pub spectrum: PowerSpectrum,
    pub assessment: Option<(QualityFeatures, QualityScore)>,
}

impl ScoredSubwindow {
    pub fn q(&self) -> Option<f64> {
        self.assessment.map(|(_, s)| s.q)
    }
}

/// Runs the baseline pipeline on every subwindow and scores its spectrum.
pub fn score_subwindows(
    window: &[f64],
    spec: &WindowSpec,
    cfg: &PipelineConfig,
    cal: &CalibrationParams,
) -> Result<Vec<ScoredSubwindow>> {
    enumerate_subwindows(window.len(), spec, cfg.fs)
        .into_iter()
        .map(|subwindow| {
            let spectrum = dsp::process_window(&window[subwindow.range.clone()], cfg)?;
            let assessment = match quality::assess(&spectrum, cal) {
                Ok(a) => Some(a),
                Err(Error::EmptySpectrum) => None,
                Err(e) => return Err(e),
            };
            Ok(ScoredSubwindow {
                subwindow,
                spectrum,
                assessment,
            })
        })
        .collect()
}

/// Picks the subwindow with the highest Q (earliest in enumeration order on
/// ties) and reads the heart rate from its spectrum.
pub fn estimate_quality_based(
    window: &[f64],
    start_s: f64,
    spec: &WindowSpec,
    cfg: &PipelineConfig,
    cal: &CalibrationParams,
) -> Result<HrEstimate> {
    let scored = score_subwindows(window, spec, cfg, cal)?;
    let mut best: Option<(&ScoredSubwindow, f64)> = None;
    for s in &scored {
        if let Some(q) = s.q() {
            if best.is_none_or(|(_, bq)| q > bq) {
                best = Some((s, q));
            }
        }
    }
    let (chosen, q) = best.ok_or(Error::UnusableWindow { start: start_s })?;
    Ok(HrEstimate {
        window_start: start_s,
        hr_bpm: dsp::peak_hr(&chosen.spectrum)?,
        method: Method::Quality,
        q: Some(q),
        sub_start: Some(start_s + chosen.subwindow.offset_s),
        sub_len: Some(chosen.subwindow.len_s),
    })
}

/// Which estimators to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MethodSelection {
    Baseline,
    Quality,
    #[default]
    Both,
}

impl MethodSelection {
    pub fn methods(self) -> &'static [Method] {
        match self {
            MethodSelection::Baseline => &[Method::Baseline],
            MethodSelection::Quality => &[Method::Quality],
            MethodSelection::Both => &[Method::Baseline, Method::Quality],
        }
    }
}

impl FromStr for MethodSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(MethodSelection::Baseline),
            "quality" => Ok(MethodSelection::Quality),
            "both" => Ok(MethodSelection::Both),
            other => Err(Error::Usage(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimatorOptions {
    pub spec: WindowSpec,
    pub pipeline: PipelineConfig,
    pub calibration: CalibrationParams,
    pub methods: MethodSelection,
    pub execution: Execution,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            spec: WindowSpec::default(),
            pipeline: PipelineConfig::default(),
            calibration: CalibrationParams::shipped(),
            methods: MethodSelection::Both,
            execution: Execution::Parallel,
        }
    }
}

/// One line of the estimates file. Empty `hr_bpm` marks an unusable window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub window_start_s: f64,
    pub method: Method,
    pub hr_bpm: Option<f64>,
    pub q: Option<f64>,
    pub sub_start_s: Option<f64>,
    pub sub_len_s: Option<f64>,
}

impl EstimateRow {
    pub fn unusable(window_start_s: f64, method: Method) -> Self {
        Self {
            window_start_s,
            method,
            hr_bpm: None,
            q: None,
            sub_start_s: None,
            sub_len_s: None,
        }
    }
}

impl From<HrEstimate> for EstimateRow {
    fn from(e: HrEstimate) -> Self {
        Self {
            window_start_s: e.window_start,
            method: e.method,
            hr_bpm: Some(e.hr_bpm),
            q: e.q,
            sub_start_s: e.sub_start,
            sub_len_s: e.sub_len,
        }
    }
}

/// Estimates every window of a trace. Rows are ordered by window start, then
/// by method (baseline first) regardless of execution strategy.
pub fn estimate_trace(trace: &SampleTrace, opts: &EstimatorOptions) -> Result<Vec<EstimateRow>> {
    opts.pipeline.validate()?;
    if (trace.fs() - opts.pipeline.fs).abs() > 1e-9 {
        return Err(Error::BadPipelineConfig(format!(
            "trace sampled at {} Hz but pipeline configured for {} Hz",
            trace.fs(),
            opts.pipeline.fs
        )));
    }
    let repaired = trace::interpolate_gaps(trace)?;
    let windows = enumerate_windows(&repaired, &opts.spec)?;
    let samples = repaired.samples();
    let gaps = repaired.gap_mask();
    let per_window = opts.execution.try_map(&windows, |w| {
        let x = &samples[w.range.clone()];
        let gap_fraction =
            gaps[w.range.clone()].iter().filter(|&&g| g).count() as f64 / x.len() as f64;
        opts.methods
            .methods()
            .iter()
            .map(|&method| {
                if gap_fraction > MAX_GAP_FRACTION {
                    return Ok(EstimateRow::unusable(w.start_s, method));
                }
                let est = match method {
                    Method::Baseline => estimate_baseline(x, w.start_s, &opts.pipeline),
                    Method::Quality => estimate_quality_based(
                        x,
                        w.start_s,
                        &opts.spec,
                        &opts.pipeline,
                        &opts.calibration,
                    ),
                };
                match est {
                    Ok(e) => Ok(e.into()),
                    Err(Error::UnusableWindow { .. }) => Ok(EstimateRow::unusable(w.start_s, method)),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(per_window.into_iter().flatten().collect())
}

pub fn format_estimates(rows: &[EstimateRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row)?;
    }
    if rows.is_empty() {
        return Ok(format!("{ESTIMATES_HEADER}\n"));
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::BadEstimates(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::BadEstimates(e.to_string()))
}

pub fn parse_estimates(text: &str) -> Result<Vec<EstimateRow>> {
    let header = text.lines().next().unwrap_or_default().trim();
    if header != ESTIMATES_HEADER {
        return Err(Error::BadEstimates(format!("unexpected header {header:?}")));
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn write_estimates(path: &Path, rows: &[EstimateRow]) -> Result<()> {
    fsio::write_atomic(path, format_estimates(rows)?.as_bytes())
}

pub fn read_estimates(path: &Path) -> Result<Vec<EstimateRow>> {
    parse_estimates(&fsio::read_string(path)?)
}
