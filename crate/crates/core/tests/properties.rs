use proptest::prelude::*;

use rppg_core::dsp::{process_window, PipelineConfig};
use rppg_core::estimator::{estimate_baseline, estimate_quality_based, WindowSpec};
use rppg_core::evaluation::{corpus_report, VideoMae};
use rppg_core::quality::{assess, bandwidth_containing, CalibrationParams, QualityFeatures};
use rppg_core::trace::{interpolate_gaps, FrameStream, SampleTrace};

fn window(len: usize) -> impl Strategy<Value = Vec<f64>> {
    (
        0.8f64..2.8,
        0.0f64..6.3,
        prop::collection::vec(-1.0f64..1.0, len),
        0.0f64..1.0,
    )
        .prop_map(move |(f, phase, noise, noise_gain)| {
            (0..len)
                .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / 20.0 + phase).sin() + noise_gain * noise[i])
                .collect()
        })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn affine_maps_leave_estimates_unchanged(x in window(140), a in 0.01f64..100.0, b in -500.0f64..500.0) {
        let cfg = PipelineConfig::default();
        let spec = WindowSpec::default();
        let cal = CalibrationParams::shipped();
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let (bx, by) = (estimate_baseline(&x, 0.0, &cfg).unwrap(), estimate_baseline(&y, 0.0, &cfg).unwrap());
        prop_assert_eq!(bx.hr_bpm, by.hr_bpm);
        let (qx, qy) = (
            estimate_quality_based(&x, 0.0, &spec, &cfg, &cal).unwrap(),
            estimate_quality_based(&y, 0.0, &spec, &cfg, &cal).unwrap(),
        );
        prop_assert_eq!(qx.sub_start, qy.sub_start);
        prop_assert_eq!(qx.sub_len, qy.sub_len);
        prop_assert!((qx.q.unwrap() - qy.q.unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn features_are_scale_invariant_and_q_bounded(x in window(120), a in 0.001f64..1000.0) {
        let cfg = PipelineConfig::default();
        let cal = CalibrationParams::shipped();
        let y: Vec<f64> = x.iter().map(|v| a * v).collect();
        let fx = QualityFeatures::from_spectrum(&process_window(&x, &cfg).unwrap()).unwrap();
        let fy = QualityFeatures::from_spectrum(&process_window(&y, &cfg).unwrap()).unwrap();
        prop_assert!(close(fx.snr, fy.snr, 1e-9));
        prop_assert!(close(fx.bw, fy.bw, 1e-9));
        prop_assert!(close(fx.rp, fy.rp, 1e-9));
        let (_, score) = assess(&process_window(&x, &cfg).unwrap(), &cal).unwrap();
        prop_assert!((0.0..=1.0).contains(&score.q));
    }

    #[test]
    fn bandwidth_grows_with_threshold(x in window(100), lo in 0.5f64..0.99, extra in 0.0f64..0.0099) {
        let s = process_window(&x, &PipelineConfig::default()).unwrap();
        let narrow = bandwidth_containing(&s, lo).unwrap();
        let wide = bandwidth_containing(&s, (lo + extra).min(0.999)).unwrap();
        prop_assert!(wide >= narrow);
        prop_assert!(bandwidth_containing(&s, 0.999).unwrap() >= bandwidth_containing(&s, 0.99).unwrap());
    }

    #[test]
    fn interpolation_is_identity_without_gaps(x in prop::collection::vec(-1e3f64..1e3, 1..200)) {
        let t = SampleTrace::new(x.clone(), 20.0).unwrap();
        let r = interpolate_gaps(&t).unwrap();
        prop_assert_eq!(r.samples(), &x[..]);
    }

    #[test]
    fn frame_stream_round_trip(w in 1u32..9, h in 1u32..9, n in 0usize..5, num in 1u32..60_000, den in 1u32..2000, seed in any::<u8>()) {
        let data: Vec<u8> = (0..w as usize * h as usize * n).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
        let s = FrameStream::new(w, h, num, den, data).unwrap();
        prop_assert_eq!(FrameStream::from_bytes(&s.to_bytes()).unwrap(), s);
    }

    #[test]
    fn report_ignores_video_order(maes in prop::collection::vec((0.0f64..50.0, 0.0f64..50.0), 1..12), rot in 0usize..12) {
        let videos: Vec<VideoMae> = maes
            .iter()
            .enumerate()
            .map(|(i, &(b, q))| VideoMae { video_id: format!("v{i}"), mae_baseline: b, mae_quality: q })
            .collect();
        let mut rotated = videos.clone();
        rotated.rotate_left(rot % videos.len());
        let (a, b) = (corpus_report(videos).unwrap(), corpus_report(rotated).unwrap());
        prop_assert!((a.mean_baseline - b.mean_baseline).abs() <= 1e-9);
        prop_assert!((a.mean_quality - b.mean_quality).abs() <= 1e-9);
        prop_assert!((a.std_baseline - b.std_baseline).abs() <= 1e-9);
        prop_assert!((a.std_quality - b.std_quality).abs() <= 1e-9);
    }
}
