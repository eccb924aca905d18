//! Scoring estimate streams against ground truth: per-video MAE and corpus
//! aggregates.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::PipelineConfig;
use crate::error::{Error, Result};
use crate::estimator::{estimate_trace, EstimateRow, EstimatorOptions, Method, MethodSelection, WindowSpec};
use crate::fsio;
use crate::par::Execution;
use crate::quality::CalibrationParams;
use crate::trace::SampleTrace;

/// Ground-truth heart rate per window, read from the contact PPG with the
/// same spectral estimator used for the camera trace. `None` marks windows
/// the estimator could not use.
pub fn groundtruth_hr(ppg: &SampleTrace, spec: &WindowSpec, cfg: &PipelineConfig) -> Result<Vec<Option<f64>>> {
    let opts = EstimatorOptions {
        spec: spec.clone(),
        pipeline: cfg.clone(),
        // unused by the baseline estimator
        calibration: CalibrationParams::from_stats([(0.0, 1.0); 3]),
        methods: MethodSelection::Baseline,
        execution: Execution::Parallel,
    };
    Ok(estimate_trace(ppg, &opts)?
        .into_iter()
        .map(|r| r.hr_bpm)
        .collect())
}

/// Mean absolute error over window pairs where both values are present.
pub fn mae(estimates: &[Option<f64>], groundtruth: &[Option<f64>]) -> Result<f64> {
    if estimates.len() != groundtruth.len() {
        return Err(Error::LengthMismatch {
            left: estimates.len(),
            right: groundtruth.len(),
        });
    }
    let errors: Vec<f64> = estimates
        .iter()
        .zip(groundtruth)
        .filter_map(|(e, g)| Some((e.as_ref()? - g.as_ref()?).abs()))
        .collect();
    if errors.is_empty() {
        return Err(Error::NothingToCompare);
    }
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// Heart-rate column of one method, in window order.
pub fn method_series(rows: &[EstimateRow], method: Method) -> Vec<Option<f64>> {
    let mut picked: Vec<&EstimateRow> = rows.iter().filter(|r| r.method == method).collect();
    picked.sort_by(|a, b| a.window_start_s.total_cmp(&b.window_start_s));
    picked.into_iter().map(|r| r.hr_bpm).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMae {
    pub video_id: String,
    pub mae_baseline: f64,
    pub mae_quality: f64,
}

/// MAE of both methods for one video.
pub fn score_video(video_id: &str, rows: &[EstimateRow], groundtruth: &[Option<f64>]) -> Result<VideoMae> {
    Ok(VideoMae {
        video_id: video_id.to_owned(),
        mae_baseline: mae(&method_series(rows, Method::Baseline), groundtruth)?,
        mae_quality: mae(&method_series(rows, Method::Quality), groundtruth)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub per_video: Vec<VideoMae>,
    pub mean_baseline: f64,
    pub std_baseline: f64,
    pub mean_quality: f64,
    pub std_quality: f64,
    /// Percent.
    pub rel_improvement_mean: f64,
    /// Percent.
    pub rel_improvement_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn relative_improvement(before: f64, after: f64) -> f64 {
    if before == 0.0 {
        0.0
    } else {
        100.0 * (before - after) / before
    }
}

/// Population mean and standard deviation across videos plus the relative
/// improvement of the quality method.
pub fn corpus_report(per_video: Vec<VideoMae>) -> Result<EvaluationReport> {
    if per_video.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let (mean_baseline, std_baseline) = mean_std(per_video.iter().map(|v| v.mae_baseline));
    let (mean_quality, std_quality) = mean_std(per_video.iter().map(|v| v.mae_quality));
    Ok(EvaluationReport {
        rel_improvement_mean: relative_improvement(mean_baseline, mean_quality),
        rel_improvement_std: relative_improvement(std_baseline, std_quality),
        per_video,
        mean_baseline,
        std_baseline,
        mean_quality,
        std_quality,
    })
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<16} {:>14} {:>14}", "video", "baseline [bpm]", "quality [bpm]");
        for v in &self.per_video {
            let _ = writeln!(out, "{:<16} {:>14.2} {:>14.2}", v.video_id, v.mae_baseline, v.mae_quality);
        }
        let _ = writeln!(out, "{:<16} {:>14.2} {:>14.2} ({:.0}%)", "mean", self.mean_baseline, self.mean_quality, self.rel_improvement_mean);
        let _ = writeln!(out, "{:<16} {:>14.2} {:>14.2} ({:.0}%)", "std", self.std_baseline, self.std_quality, self.rel_improvement_std);
        out
    }

    pub fn write(&self, json_path: &Path) -> Result<()> {
        fsio::write_atomic(json_path, self.to_json()?.as_bytes())?;
        fsio::write_atomic(&json_path.with_extension("txt"), self.to_table().as_bytes())
    }
}
