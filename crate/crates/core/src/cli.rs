//! Command-line front end: `extract`, `estimate`, `simulate`, `calibrate`
//! and `evaluate`.
//!
//! Parameters resolve as defaults < `--config` JSON file < flags. Every run
//! writes the resolved configuration next to its output.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dsp::PipelineConfig;
use crate::error::{Error, Result};
use crate::estimator::{self, EstimatorOptions, MethodSelection, WindowSpec};
use crate::evaluation::{self, EvaluationReport};
use crate::fsio::{self, write_atomic};
use crate::par::Execution;
use crate::quality::CalibrationParams;
use crate::simulator::{self, CorpusRecord};
use crate::trace;

#[derive(Debug, Parser)]
#[command(name = "rppg", version, about = "Quality-gated rPPG heart-rate estimation")]
struct Cli {
    /// JSON run configuration, e.g. the `run.json` echo of an earlier run.
    /// Missing fields keep their defaults; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mean ROI intensity trace from an RFS frame container and ROI sidecar.
    Extract {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        rois: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-window heart-rate estimates from a trace CSV, or from every trace
    /// of a simulated corpus.
    Estimate {
        #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
        input: Option<PathBuf>,
        /// Corpus manifest; estimates are written to `<out>/<id>.estimates.csv`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Directory holding the corpus files (defaults to the manifest's directory).
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        params: ParamFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize a corpus from a manifest, or from a built-in preset.
    Simulate {
        #[arg(long, required_unless_present = "preset")]
        manifest: Option<PathBuf>,
        /// Generate the manifest instead: `motion` or `reference`.
        #[arg(long, conflicts_with = "manifest")]
        preset: Option<String>,
        /// Number of traces for the `motion` preset.
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit quality normalization statistics on a corpus.
    Calibrate {
        #[arg(long, required_unless_present = "builtin_reference")]
        manifest: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Use the built-in reference corpus (reproduces the shipped defaults).
        #[arg(long, conflicts_with = "manifest")]
        builtin_reference: bool,
        #[command(flatten)]
        params: ParamFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// MAE report of estimates against ground-truth PPG.
    Evaluate {
        /// Estimates CSVs, paired by position with `--groundtruth`.
        #[arg(long, num_args = 1.., conflicts_with = "manifest")]
        estimates: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        groundtruth: Vec<PathBuf>,
        /// Corpus manifest; estimates are read from `--estimates-dir`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        estimates_dir: Option<PathBuf>,
        /// Sampling rate of the ground-truth CSVs given with `--groundtruth`.
        #[arg(long, default_value_t = 500.0)]
        gt_fs: f64,
        #[command(flatten)]
        params: ParamFlags,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Default, Args)]
struct ParamFlags {
    #[arg(long)]
    fs: Option<f64>,
    /// Window length T in seconds.
    #[arg(long)]
    window: Option<f64>,
    /// Window stride d in seconds.
    #[arg(long)]
    stride: Option<f64>,
    /// Comma-separated subwindow lengths T' in seconds.
    #[arg(long, value_delimiter = ',')]
    subwindows: Option<Vec<f64>>,
    /// Subwindow stride d' in seconds.
    #[arg(long)]
    substride: Option<f64>,
    #[arg(long)]
    band_lo: Option<f64>,
    #[arg(long)]
    band_hi: Option<f64>,
    #[arg(long)]
    ma_size: Option<usize>,
    #[arg(long)]
    detrend_span: Option<f64>,
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// baseline | quality | both
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ParamFlags {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        let p = &mut cfg.pipeline;
        let w = &mut cfg.windows;
        if let Some(v) = self.fs {
            p.fs = v;
        }
        if let Some(v) = self.window {
            w.window_s = v;
        }
        if let Some(v) = self.stride {
            w.stride_s = v;
        }
        if let Some(v) = &self.subwindows {
            w.subwindow_s = v.clone();
        }
        if let Some(v) = self.substride {
            w.substride_s = v;
        }
        if let Some(v) = self.band_lo {
            p.band_lo = v;
        }
        if let Some(v) = self.band_hi {
            p.band_hi = v;
        }
        if let Some(v) = self.ma_size {
            p.ma_size = v;
        }
        if let Some(v) = self.detrend_span {
            p.detrend_span_s = v;
        }
        if let Some(v) = &self.calibration {
            cfg.calibration = Some(v.clone());
        }
        if let Some(v) = &self.method {
            cfg.method = v.parse()?;
        }
        if let Some(v) = self.seed {
            cfg.seed = Some(v);
        }
        Ok(())
    }
}

/// Fully resolved parameters of one run; echoed next to the outputs and
/// accepted back through `--config`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub command: String,
    pub pipeline: PipelineConfig,
    pub windows: WindowSpec,
    pub calibration: Option<PathBuf>,
    pub method: MethodSelection,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub output: PathBuf,
}

impl RunConfig {
    fn resolve(command: &str, file: Option<&RunConfig>, flags: Option<&ParamFlags>) -> Result<Self> {
        let mut cfg = file.cloned().unwrap_or_default();
        cfg.command = command.to_owned();
        cfg.inputs.clear();
        cfg.output = PathBuf::new();
        if let Some(flags) = flags {
            flags.apply(&mut cfg)?;
        }
        cfg.pipeline.validate()?;
        cfg.windows.validate(cfg.pipeline.fs)?;
        Ok(cfg)
    }

    fn load_calibration(&self) -> Result<CalibrationParams> {
        match &self.calibration {
            Some(path) => CalibrationParams::read(path),
            None => Ok(CalibrationParams::shipped()),
        }
    }

    fn estimator_options(&self) -> Result<EstimatorOptions> {
        Ok(EstimatorOptions {
            spec: self.windows.clone(),
            pipeline: self.pipeline.clone(),
            calibration: self.load_calibration()?,
            methods: self.method,
            execution: Execution::Parallel,
        })
    }

    /// Writes the echo to `<dir>/run.json` for directory outputs and to
    /// `<stem>.run.json` beside file outputs.
    fn echo(&self, output_is_dir: bool) -> Result<()> {
        let path = if output_is_dir {
            self.output.join("run.json")
        } else {
            self.output.with_extension("run.json")
        };
        write_atomic(&path, (serde_json::to_string_pretty(self)? + "\n").as_bytes())
    }
}

fn load_config_file(path: Option<&Path>) -> Result<Option<RunConfig>> {
    path.map(|p| Ok(serde_json::from_str(&fsio::read_string(p)?)?))
        .transpose()
}

fn corpus_dir(manifest: &Path, corpus: Option<&PathBuf>) -> PathBuf {
    corpus.cloned().unwrap_or_else(|| {
        manifest
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
    })
}

fn estimates_name(id: &str) -> String {
    format!("{id}.estimates.csv")
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { Error::Usage(String::new()).exit_code() } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let file = load_config_file(cli.config.as_deref())?;
    match cli.command {
        Command::Extract { frames, rois, out } => {
            let mut cfg = RunConfig::resolve("extract", file.as_ref(), None)?;
            let stream = trace::read_frame_stream(&frames)?;
            let boxes = trace::read_roi_csv(&rois)?;
            let t = trace::roi_mean_trace(&stream, &boxes)?;
            trace::write_csv_trace(&out, &t)?;
            cfg.pipeline.fs = stream.fps();
            cfg.inputs = vec![frames, rois];
            cfg.output = out;
            cfg.echo(false)
        }
        Command::Estimate {
            input,
            manifest,
            corpus,
            params,
            out,
        } => {
            let mut cfg = RunConfig::resolve("estimate", file.as_ref(), Some(&params))?;
            let opts = cfg.estimator_options()?;
            cfg.output = out.clone();
            if let Some(input) = input {
                let t = trace::read_csv_trace(&input, cfg.pipeline.fs)?;
                let rows = estimator::estimate_trace(&t, &opts)?;
                estimator::write_estimates(&out, &rows)?;
                cfg.inputs = vec![input];
                cfg.echo(false)
            } else {
                let manifest = manifest.expect("clap enforces --input or --manifest");
                let records = simulator::read_manifest(&manifest)?;
                let dir = corpus_dir(&manifest, corpus.as_ref());
                let per_trace = EstimatorOptions {
                    execution: Execution::Sequential,
                    ..opts
                };
                Execution::Parallel.try_map(&records, |r| {
                    let t = trace::read_csv_trace(&dir.join(&r.trace_path), r.config.fs)?;
                    let rows = estimator::estimate_trace(&t, &per_trace)?;
                    estimator::write_estimates(&out.join(estimates_name(&r.id)), &rows)
                })?;
                cfg.inputs = vec![manifest, dir];
                cfg.echo(true)
            }
        }
        Command::Simulate {
            manifest,
            preset,
            count,
            seed,
            out,
        } => {
            let mut cfg = RunConfig::resolve("simulate", file.as_ref(), None)?;
            if seed.is_some() {
                cfg.seed = seed;
            }
            let records = match (&manifest, preset.as_deref()) {
                (Some(m), _) => simulator::read_manifest(m)?,
                (None, Some("motion")) => simulator::motion_corpus(count, cfg.seed.unwrap_or(0)),
                (None, Some("reference")) => simulator::reference_corpus(),
                (None, Some(other)) => {
                    return Err(Error::Usage(format!("unknown preset {other:?}")));
                }
                (None, None) => unreachable!("clap enforces --manifest or --preset"),
            };
            simulator::write_corpus(&records, &out, Execution::Parallel)?;
            write_atomic(
                &out.join("manifest.json"),
                simulator::format_manifest(&records)?.as_bytes(),
            )?;
            cfg.inputs = manifest.into_iter().collect();
            cfg.output = out;
            cfg.echo(true)
        }
        Command::Calibrate {
            manifest,
            corpus,
            builtin_reference,
            params,
            out,
        } => {
            let mut cfg = RunConfig::resolve("calibrate", file.as_ref(), Some(&params))?;
            let cal = if builtin_reference {
                simulator::reference_calibration(Execution::Parallel)?
            } else {
                let manifest = manifest.expect("clap enforces --manifest or --builtin-reference");
                let records = simulator::read_manifest(&manifest)?;
                let dir = corpus_dir(&manifest, corpus.as_ref());
                let traces = Execution::Parallel.try_map(&records, |r| {
                    trace::read_csv_trace(&dir.join(&r.trace_path), r.config.fs)
                })?;
                cfg.inputs = vec![manifest, dir];
                simulator::calibrate(&simulator::subwindow_spectra(
                    &traces,
                    &cfg.windows,
                    &cfg.pipeline,
                    Execution::Parallel,
                )?)?
            };
            cal.write(&out)?;
            cfg.output = out;
            cfg.echo(false)
        }
        Command::Evaluate {
            estimates,
            groundtruth,
            manifest,
            corpus,
            estimates_dir,
            gt_fs,
            params,
            out,
        } => {
            let mut cfg = RunConfig::resolve("evaluate", file.as_ref(), Some(&params))?;
            // (video id, estimates path, ground-truth path, ground-truth rate)
            let jobs: Vec<(String, PathBuf, PathBuf, f64)> = match &manifest {
                Some(m) => {
                    let records = simulator::read_manifest(m)?;
                    let dir = corpus_dir(m, corpus.as_ref());
                    let est_dir = estimates_dir
                        .clone()
                        .ok_or_else(|| Error::Usage("--manifest needs --estimates-dir".into()))?;
                    records
                        .iter()
                        .map(|r: &CorpusRecord| {
                            (
                                r.id.clone(),
                                est_dir.join(estimates_name(&r.id)),
                                dir.join(&r.groundtruth_path),
                                r.groundtruth_fs,
                            )
                        })
                        .collect()
                }
                None => {
                    if estimates.len() != groundtruth.len() {
                        return Err(Error::Usage(format!(
                            "{} estimates files but {} ground-truth files",
                            estimates.len(),
                            groundtruth.len()
                        )));
                    }
                    estimates
                        .iter()
                        .zip(&groundtruth)
                        .map(|(e, g)| {
                            let id = e
                                .file_name()
                                .and_then(|n| n.to_str())
                                .map(|n| n.trim_end_matches(".csv").trim_end_matches(".estimates"))
                                .unwrap_or_default()
                                .to_owned();
                            (id, e.clone(), g.clone(), gt_fs)
                        })
                        .collect()
                }
            };
            let per_video = Execution::Parallel.try_map(&jobs, |(id, est, gt, fs)| {
                let rows = estimator::read_estimates(est)?;
                let ppg = trace::read_csv_trace(gt, *fs)?;
                let ppg = if (*fs - cfg.pipeline.fs).abs() > 1e-9 {
                    trace::downsample_groundtruth(&ppg, cfg.pipeline.fs)?
                } else {
                    ppg
                };
                let truth = evaluation::groundtruth_hr(&ppg, &cfg.windows, &cfg.pipeline)?;
                evaluation::score_video(id, &rows, &truth)
            })?;
            let report: EvaluationReport = evaluation::corpus_report(per_video)?;
            report.write(&out)?;
            print!("{}", report.to_table());
            cfg.inputs = jobs.iter().flat_map(|j| [j.1.clone(), j.2.clone()]).collect();
            cfg.output = out;
            cfg.echo(false)
        }
    }
}
