//! Acceptance suite. One PASS/FAIL line per criterion; exits nonzero if any
//! criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rppg_core::dsp::{power_spectrum, PipelineConfig};
use rppg_core::estimator::{
    enumerate_subwindows, enumerate_windows, estimate_baseline, estimate_quality_based, estimate_trace,
    format_estimates, parse_estimates, score_subwindows, EstimateRow, EstimatorOptions, Method,
    MethodSelection, WindowSpec,
};
use rppg_core::evaluation::{corpus_report, groundtruth_hr, score_video};
use rppg_core::par::Execution;
use rppg_core::quality::CalibrationParams;
use rppg_core::simulator::{
    inject_artifacts, motion_corpus, simulate_record, synth_pulse, ArtifactKind, ArtifactSpec, SimulationConfig,
    DEFAULT_HARMONICS,
};
use rppg_core::trace::{self, FrameStream, SampleTrace};

const MOTION_SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Band-limited periodogram by direct summation, independent of the FFT path.
fn naive_periodogram(x: &[f64], cfg: &PipelineConfig) -> Vec<f64> {
    let n = x.len();
    let nfft = cfg.fft_len(n);
    let df = cfg.fs / nfft as f64;
    let m = (n - 1) as f64;
    let tapered: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, v)| v * (0.5 - 0.5 * (2.0 * PI * i as f64 / m).cos()))
        .collect();
    (0..=nfft / 2)
        .filter(|&k| {
            let f = k as f64 * df;
            f >= cfg.band_lo - 1e-9 * df && f <= cfg.band_hi + 1e-9 * df
        })
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in tapered.iter().enumerate() {
                let arg = -2.0 * PI * (k * i % nfft) as f64 / nfft as f64;
                re += v * arg.cos();
                im += v * arg.sin();
            }
            re * re + im * im
        })
        .collect()
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let cfg = PipelineConfig::with_fs(8.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut lengths_ok = true;
    for n in [16usize, 64, 141, 256] {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = power_spectrum(&x, &cfg).unwrap();
        let slow = naive_periodogram(&x, &cfg);
        lengths_ok &= fast.power.len() == slow.len();
        let scale = slow.iter().cloned().fold(0.0, f64::max);
        for (a, b) in fast.power.iter().zip(&slow) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        lengths_ok && worst <= 1e-9 && secs < 1.0,
        format!("max relative error {worst:.2e}, {secs:.3} s"),
    )
}

fn clean_accuracy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(45_175);
    let opts = EstimatorOptions {
        methods: MethodSelection::Baseline,
        ..Default::default()
    };
    let (mut within, mut total) = (0usize, 0usize);
    for i in 0..20 {
        let bpm = rng.random_range(45.0..=175.0);
        let sim = SimulationConfig::constant(bpm, 60.0, DEFAULT_HARMONICS.to_vec(), 0.05, 100 + i);
        let t = synth_pulse(&sim).unwrap().trace;
        for row in estimate_trace(&t, &opts).unwrap() {
            total += 1;
            if row.hr_bpm.is_some_and(|hr| (hr - bpm).abs() <= 1.5) {
                within += 1;
            }
        }
    }
    let share = within as f64 / total as f64;
    outcome(
        share >= 0.95,
        format!("{within}/{total} windows within 1.5 bpm ({:.1}%)", 100.0 * share),
    )
}

fn quality_benefit() -> Outcome {
    let start = Instant::now();
    let spec = WindowSpec::default();
    let cfg = PipelineConfig::default();
    let opts = EstimatorOptions::default();
    let records = motion_corpus(20, MOTION_SEED);
    let per_video = Execution::Parallel
        .try_map(&records, |r| {
            let sim = simulate_record(r)?;
            let rows = estimate_trace(&sim.trace, &opts)?;
            let ppg = trace::downsample_groundtruth(&sim.groundtruth, cfg.fs)?;
            let truth = groundtruth_hr(&ppg, &spec, &cfg)?;
            score_video(&r.id, &rows, &truth)
        })
        .unwrap();
    let report = corpus_report(per_video).unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        report.rel_improvement_mean >= 15.0 && report.std_quality <= report.std_baseline && secs < 30.0,
        format!(
            "MAE {:.2} -> {:.2} bpm ({:.1}% lower), std {:.2} -> {:.2}, {secs:.1} s",
            report.mean_baseline,
            report.mean_quality,
            report.rel_improvement_mean,
            report.std_baseline,
            report.std_quality
        ),
    )
}

fn q_separation() -> Outcome {
    let spec = WindowSpec::default();
    let cfg = PipelineConfig::default();
    let cal = CalibrationParams::shipped();
    let (mut clean, mut burst) = (Vec::new(), Vec::new());
    for r in motion_corpus(20, MOTION_SEED) {
        let sim = simulate_record(&r).unwrap();
        for w in enumerate_windows(&sim.trace, &spec).unwrap() {
            let x = &sim.trace.samples()[w.range.clone()];
            for s in score_subwindows(x, &spec, &cfg, &cal).unwrap() {
                let Some(q) = s.q() else { continue };
                let a = w.start_s + s.subwindow.offset_s;
                let b = a + s.subwindow.len_s;
                let hit = |kind: Option<ArtifactKind>| {
                    r.artifacts
                        .iter()
                        .filter(|art| kind.is_none_or(|k| art.kind == k))
                        .any(|art| art.overlaps(a, b))
                };
                if hit(Some(ArtifactKind::MotionBurst)) {
                    burst.push(q);
                } else if !hit(None) {
                    clean.push(q);
                }
            }
        }
    }
    let gap = mean(&clean) - mean(&burst);
    outcome(
        !clean.is_empty() && !burst.is_empty() && gap >= 0.1,
        format!(
            "mean Q {:.3} artifact-free ({}) vs {:.3} burst ({}), separation {gap:.3}",
            mean(&clean),
            clean.len(),
            mean(&burst),
            burst.len()
        ),
    )
}

fn affine_invariance() -> Outcome {
    let spec = WindowSpec::default();
    let cfg = PipelineConfig::default();
    let cal = CalibrationParams::shipped();
    let mut rng = ChaCha8Rng::seed_from_u64(3_7120);
    let mut worst: f64 = 0.0;
    let mut same_selection = true;
    for i in 0..100u64 {
        let bpm = rng.random_range(45.0..175.0);
        let sim = SimulationConfig::constant(bpm, 7.0, DEFAULT_HARMONICS.to_vec(), 0.1, 500 + i);
        let mut t = synth_pulse(&sim).unwrap().trace;
        if i % 2 == 1 {
            let start = rng.random_range(0.0..5.0);
            t = inject_artifacts(&t, &[ArtifactSpec::new(ArtifactKind::MotionBurst, start, 2.0, 5.0)], i).unwrap();
        }
        let x = t.samples();
        let y: Vec<f64> = x.iter().map(|v| 3.7 * v + 120.0).collect();
        let (bx, by) = (estimate_baseline(x, 0.0, &cfg).unwrap(), estimate_baseline(&y, 0.0, &cfg).unwrap());
        let (qx, qy) = (
            estimate_quality_based(x, 0.0, &spec, &cfg, &cal).unwrap(),
            estimate_quality_based(&y, 0.0, &spec, &cfg, &cal).unwrap(),
        );
        worst = worst
            .max((bx.hr_bpm - by.hr_bpm).abs())
            .max((qx.hr_bpm - qy.hr_bpm).abs())
            .max((qx.q.unwrap_or(0.0) - qy.q.unwrap_or(0.0)).abs());
        same_selection &= qx.sub_start == qy.sub_start && qx.sub_len == qy.sub_len;
    }
    outcome(
        same_selection && worst <= 1e-9,
        format!("max change {worst:.2e}, selections identical: {same_selection}"),
    )
}

fn window_counts() -> Outcome {
    let spec = WindowSpec::default();
    let t = SampleTrace::new(vec![0.0; 1200], 20.0).unwrap();
    let windows = enumerate_windows(&t, &spec).unwrap();
    let subs: Vec<usize> = windows
        .iter()
        .map(|w| enumerate_subwindows(w.range.len(), &spec, 20.0).len())
        .collect();
    outcome(
        windows.len() == 54 && subs.iter().all(|&n| n == 4),
        format!("{} windows, subwindows per window {:?}", windows.len(), {
            let mut s = subs.clone();
            s.dedup();
            s
        }),
    )
}

fn round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (w, h, n) = (13u32, 7u32, 9usize);
    let data: Vec<u8> = (0..w as usize * h as usize * n).map(|_| rng.random()).collect();
    let stream = FrameStream::new(w, h, 30000, 1001, data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rfs = dir.path().join("clip.rfs");
    trace::write_frame_stream(&rfs, &stream).unwrap();
    let rfs_ok = trace::read_frame_stream(&rfs).unwrap() == stream;

    let rows: Vec<EstimateRow> = (0..20)
        .map(|i| {
            let start = i as f64;
            if i % 7 == 3 {
                EstimateRow::unusable(start, Method::Quality)
            } else {
                EstimateRow {
                    window_start_s: start,
                    method: if i % 2 == 0 { Method::Baseline } else { Method::Quality },
                    hr_bpm: Some(rng.random_range(40.0..180.0)),
                    q: (i % 2 == 1).then(|| rng.random()),
                    sub_start_s: (i % 2 == 1).then_some(start + 2.0),
                    sub_len_s: (i % 2 == 1).then_some(5.0),
                }
            }
        })
        .collect();
    let csv = dir.path().join("est.csv");
    rppg_core::estimator::write_estimates(&csv, &rows).unwrap();
    let back = rppg_core::estimator::read_estimates(&csv).unwrap();
    let text = format_estimates(&rows).unwrap();
    let csv_ok = back == rows && parse_estimates(&text).unwrap() == rows && format_estimates(&back).unwrap() == text;

    let gt = SampleTrace::new(vec![0.8; 5000], 500.0).unwrap();
    let ds = trace::downsample_groundtruth(&gt, 20.0).unwrap();
    let ds_ok = ds.len() == 200 && ds.samples().iter().all(|&v| v == 0.8);
    outcome(
        rfs_ok && csv_ok && ds_ok,
        format!("rfs {rfs_ok}, estimates csv {csv_ok}, downsample 5000 -> {} samples", ds.len()),
    )
}

fn run_pipeline(bin: &str, manifest: &Path, dir: &Path) -> Option<Vec<u8>> {
    let corpus = dir.join("corpus");
    let est = dir.join("estimates");
    let report = dir.join("report.json");
    let steps: [Vec<&std::ffi::OsStr>; 3] = [
        vec!["simulate".as_ref(), "--manifest".as_ref(), manifest.as_os_str(), "--out".as_ref(), corpus.as_os_str()],
        vec![
            "estimate".as_ref(),
            "--manifest".as_ref(),
            manifest.as_os_str(),
            "--corpus".as_ref(),
            corpus.as_os_str(),
            "--out".as_ref(),
            est.as_os_str(),
        ],
        vec![
            "evaluate".as_ref(),
            "--manifest".as_ref(),
            manifest.as_os_str(),
            "--corpus".as_ref(),
            corpus.as_os_str(),
            "--estimates-dir".as_ref(),
            est.as_os_str(),
            "--out".as_ref(),
            report.as_os_str(),
        ],
    ];
    for args in steps {
        let out = Command::new(bin).args(args).output().ok()?;
        if !out.status.success() {
            eprintln!("{}", String::from_utf8_lossy(&out.stderr));
            return None;
        }
    }
    std::fs::read(report).ok()
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_rppg");
    let root = tempfile::tempdir().unwrap();
    let manifest = root.path().join("manifest.json");
    let text = rppg_core::simulator::format_manifest(&motion_corpus(6, 99)).unwrap();
    std::fs::write(&manifest, text).unwrap();
    let a = run_pipeline(bin, &manifest, &root.path().join("a"));
    let b = run_pipeline(bin, &manifest, &root.path().join("b"));
    match (a, b) {
        (Some(a), Some(b)) => outcome(a == b, format!("reports of {} and {} bytes, identical: {}", a.len(), b.len(), a == b)),
        _ => outcome(false, "a CLI step failed".into()),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("clean-signal accuracy", clean_accuracy),
        ("quality-selection benefit", quality_benefit),
        ("quality score separation", q_separation),
        ("affine invariance", affine_invariance),
        ("window-count arithmetic", window_counts),
        ("format round-trips", round_trips),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        println!("{} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
