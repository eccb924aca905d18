//! Per-window postprocessing: detrend, moving average, band-limited
//! periodogram and spectral-peak heart-rate readout.

use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum FFT length before rounding up to a power of two.
const MIN_FFT_LEN: usize = 2048;
/// Zero-padding factor relative to the window length.
const PAD_FACTOR: usize = 16;
/// Minimum spectral window duration in seconds.
const MIN_WINDOW_S: f64 = 2.0;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub fs: f64,
    pub detrend_span_s: f64,
    pub ma_size: usize,
    pub band_lo: f64,
    pub band_hi: f64,
    /// FFT length; `None` picks the smallest power of two
    /// ≥ max(2048, 16 × window length).
    pub fft_pad: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fs: 20.0,
            detrend_span_s: 2.0,
            ma_size: 3,
            band_lo: 0.7,
            band_hi: 3.0,
            fft_pad: None,
        }
    }
}

impl PipelineConfig {
    pub fn with_fs(fs: f64) -> Self {
        Self {
            fs,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadPipelineConfig(m));
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return bad(format!("fs must be > 0, got {}", self.fs));
        }
        if self.ma_size == 0 || self.ma_size.is_multiple_of(2) {
            return bad(format!("ma_size must be odd and >= 1, got {}", self.ma_size));
        }
        if !(self.detrend_span_s > 0.0) {
            return bad(format!("detrend span must be > 0, got {}", self.detrend_span_s));
        }
        if !(self.band_lo >= 0.0 && self.band_lo < self.band_hi && self.band_hi < self.fs / 2.0) {
            return bad(format!(
                "band [{}, {}] must satisfy 0 <= lo < hi < fs/2 = {}",
                self.band_lo,
                self.band_hi,
                self.fs / 2.0
            ));
        }
        Ok(())
    }

    /// Detrending span in samples, rounded to the nearest odd integer (ties up).
    pub fn detrend_span_samples(&self) -> usize {
        let x = self.detrend_span_s * self.fs;
        let half = ((x - 1.0) / 2.0).round().max(0.0);
        2 * half as usize + 1
    }

    pub fn fft_len(&self, window_len: usize) -> usize {
        self.fft_pad
            .unwrap_or_else(|| (PAD_FACTOR * window_len).max(MIN_FFT_LEN).next_power_of_two())
    }

    pub fn min_window_len(&self) -> usize {
        (MIN_WINDOW_S * self.fs - 1e-9).ceil().max(2.0) as usize
    }
}

/// Band-restricted periodogram.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub df: f64,
    pub total_power: f64,
}

impl PowerSpectrum {
    /// Builds a spectrum on the grid `first_bin·df, (first_bin+1)·df, …`.
    pub fn from_bins(first_bin: usize, df: f64, power: Vec<f64>) -> Self {
        let freqs = (0..power.len())
            .map(|i| (first_bin + i) as f64 * df)
            .collect();
        let total_power = power.iter().sum();
        Self {
            freqs,
            power,
            df,
            total_power,
        }
    }

    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    /// Index of the maximum bin; ties go to the lowest frequency.
    pub fn peak_index(&self) -> Result<usize> {
        if !(self.total_power > 0.0) || self.power.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        let mut best = 0;
        for (i, &p) in self.power.iter().enumerate().skip(1) {
            if p > self.power[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

/// Centered mean over `span` samples, shrinking at the edges. Each mean is
/// accumulated relative to the center sample so constant input is reproduced
/// exactly.
fn centered_deviation(window: &[f64], span: usize) -> Vec<f64> {
    let n = window.len();
    let half = span / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            let c = window[i];
            let dev: f64 = window[lo..hi].iter().map(|&v| v - c).sum();
            dev / (hi - lo) as f64
        })
        .collect()
}

/// Subtracts the centered moving mean of `detrend_span_s` seconds.
pub fn detrend(window: &[f64], cfg: &PipelineConfig) -> Result<Vec<f64>> {
    if window.len() < 2 {
        return Err(Error::WindowTooShort {
            len: window.len(),
            min: 2,
        });
    }
    let span = cfg.detrend_span_samples();
    Ok(centered_deviation(window, span)
        .into_iter()
        .map(|d| -d)
        .collect())
}

/// Centered moving average of odd `size`, shrinking at the edges.
pub fn moving_average(window: &[f64], size: usize) -> Result<Vec<f64>> {
    if size == 0 || size.is_multiple_of(2) || size > window.len() {
        return Err(Error::BadSize {
            size,
            len: window.len(),
        });
    }
    Ok(window
        .iter()
        .zip(centered_deviation(window, size))
        .map(|(&v, d)| v + d)
        .collect())
}

/// Symmetric Hann taper of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let m = (n - 1) as f64;
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / m).cos())
        .collect()
}

/// Hann-tapered, zero-padded periodogram restricted to the configured band.
pub fn power_spectrum(window: &[f64], cfg: &PipelineConfig) -> Result<PowerSpectrum> {
    let min = cfg.min_window_len();
    if window.len() < min {
        return Err(Error::WindowTooShort {
            len: window.len(),
            min,
        });
    }
    let nfft = cfg.fft_len(window.len());
    if nfft < window.len() {
        return Err(Error::BadPipelineConfig(format!(
            "fft_pad {nfft} shorter than window of {} samples",
            window.len()
        )));
    }
    let mut buf: Vec<Complex<f64>> = window
        .iter()
        .zip(hann(window.len()))
        .map(|(&x, w)| Complex::new(x * w, 0.0))
        .collect();
    buf.resize(nfft, Complex::new(0.0, 0.0));
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(nfft).process(&mut buf));

    let df = cfg.fs / nfft as f64;
    let (lo, hi) = band_bins(cfg.band_lo, cfg.band_hi, df, nfft);
    let power = buf[lo..=hi].iter().map(|c| c.norm_sqr()).collect();
    Ok(PowerSpectrum::from_bins(lo, df, power))
}

/// Inclusive bin range `[lo, hi]` whose frequencies fall inside the band.
pub(crate) fn band_bins(f_lo: f64, f_hi: f64, df: f64, nfft: usize) -> (usize, usize) {
    let lo = (f_lo / df - 1e-9).ceil().max(0.0) as usize;
    let hi = ((f_hi / df + 1e-9).floor() as usize).min(nfft / 2);
    (lo, hi)
}

/// Heart rate in bpm at the spectral maximum.
pub fn peak_hr(spectrum: &PowerSpectrum) -> Result<f64> {
    let i = spectrum.peak_index()?;
    Ok(60.0 * spectrum.freqs[i])
}

/// Detrend, smooth and transform one window of raw samples.
pub fn process_window(window: &[f64], cfg: &PipelineConfig) -> Result<PowerSpectrum> {
    let detrended = detrend(window, cfg)?;
    let smoothed = moving_average(&detrended, cfg.ma_size)?;
    power_spectrum(&smoothed, cfg)
}
