//! Spectral quality features (SNR, 99% bandwidth, peak ratio), tanh
//! normalization and the combined quality score Q.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::PowerSpectrum;
use crate::error::{Error, Result};
use crate::fsio;

/// Half-width in Hz of the band summed around the peak and each harmonic.
pub const HARMONIC_HALF_WIDTH_HZ: f64 = 0.1;
/// Number of harmonic bands counted as signal (fundamental included).
pub const SNR_HARMONICS: usize = 3;
pub const SNR_EPSILON: f64 = 1e-12;
pub const BW_POWER_FRACTION: f64 = 0.99;
/// Minimum distance between the highest and the second peak.
pub const RP_MIN_SEPARATION_HZ: f64 = 0.2;
/// Peak ratio reported when no second peak qualifies.
pub const RP_CAP: f64 = 1e6;
pub const TANH_SLOPE: f64 = 0.5;
pub const SIGMA_FLOOR: f64 = 1e-6;

const SHIPPED_CALIBRATION: &str = include_str!("../data/calibration.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    HigherBetter,
    LowerBetter,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::HigherBetter => "higher-better",
            Orientation::LowerBetter => "lower-better",
        })
    }
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "higher-better" => Ok(Orientation::HigherBetter),
            "lower-better" => Ok(Orientation::LowerBetter),
            other => Err(Error::BadCalibration(format!("unknown orientation {other:?}"))),
        }
    }
}

/// Raw features of one subwindow spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityFeatures {
    pub snr: f64,
    /// Hz.
    pub bw: f64,
    pub rp: f64,
}

impl QualityFeatures {
    pub fn from_spectrum(spectrum: &PowerSpectrum) -> Result<Self> {
        Ok(Self {
            snr: snr_feature(spectrum)?,
            bw: bw99_feature(spectrum)?,
            rp: ratio_peaks_feature(spectrum)?,
        })
    }

    /// Values in the space the calibration statistics live in (RP as ln RP).
    pub fn calibration_space(&self) -> [f64; 3] {
        [self.snr, self.bw, self.rp.ln()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureCalibration {
    pub mu: f64,
    pub sigma: f64,
    pub orientation: Orientation,
}

/// Normalization statistics per feature. The RP entry describes ln(RP).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub snr: FeatureCalibration,
    pub bw: FeatureCalibration,
    pub rp: FeatureCalibration,
}

const FEATURE_NAMES: [&str; 3] = ["snr", "bw", "rp"];
const ORIENTATIONS: [Orientation; 3] = [
    Orientation::HigherBetter,
    Orientation::LowerBetter,
    Orientation::HigherBetter,
];

impl CalibrationParams {
    /// Builds parameters from (mu, sigma) per feature, in snr, bw, ln rp order.
    /// Sigma is floored at [`SIGMA_FLOOR`].
    pub fn from_stats(stats: [(f64, f64); 3]) -> Self {
        let entry = |i: usize| FeatureCalibration {
            mu: stats[i].0,
            sigma: stats[i].1.max(SIGMA_FLOOR),
            orientation: ORIENTATIONS[i],
        };
        Self {
            snr: entry(0),
            bw: entry(1),
            rp: entry(2),
        }
    }

    /// Defaults produced by the built-in reference corpus.
    pub fn shipped() -> Self {
        Self::parse(SHIPPED_CALIBRATION).expect("shipped calibration file is valid")
    }

    fn entries(&self) -> [&FeatureCalibration; 3] {
        [&self.snr, &self.bw, &self.rp]
    }

    pub fn validate(&self) -> Result<()> {
        for ((name, cal), want) in FEATURE_NAMES.iter().zip(self.entries()).zip(ORIENTATIONS) {
            if !(cal.sigma > 0.0 && cal.sigma.is_finite() && cal.mu.is_finite()) {
                return Err(Error::BadCalibration(format!(
                    "{name}: need finite mu and sigma > 0"
                )));
            }
            if cal.orientation != want {
                return Err(Error::BadCalibration(format!(
                    "{name}: orientation must be {want}"
                )));
            }
        }
        Ok(())
    }

    /// Parses the three-row `feature,mu,sigma,orientation` text format.
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if rows.len() != 3 {
            return Err(Error::BadCalibration(format!(
                "expected 3 rows, found {}",
                rows.len()
            )));
        }
        let mut stats = [(0.0, 0.0); 3];
        for (i, row) in rows.iter().enumerate() {
            let cols: Vec<&str> = row.split(',').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(Error::BadCalibration(format!("row {}: expected 4 columns", i + 1)));
            }
            if cols[0] != FEATURE_NAMES[i] {
                return Err(Error::BadCalibration(format!(
                    "row {}: expected feature {}, found {}",
                    i + 1,
                    FEATURE_NAMES[i],
                    cols[0]
                )));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::BadCalibration(format!("row {}: bad number {s:?}", i + 1)))
            };
            let orientation: Orientation = cols[3].parse()?;
            if orientation != ORIENTATIONS[i] {
                return Err(Error::BadCalibration(format!(
                    "{}: orientation must be {}",
                    FEATURE_NAMES[i], ORIENTATIONS[i]
                )));
            }
            stats[i] = (num(cols[1])?, num(cols[2])?);
        }
        let params = Self {
            snr: FeatureCalibration { mu: stats[0].0, sigma: stats[0].1, orientation: ORIENTATIONS[0] },
            bw: FeatureCalibration { mu: stats[1].0, sigma: stats[1].1, orientation: ORIENTATIONS[1] },
            rp: FeatureCalibration { mu: stats[2].0, sigma: stats[2].1, orientation: ORIENTATIONS[2] },
        };
        params.validate()?;
        Ok(params)
    }

    pub fn to_text(&self) -> String {
        FEATURE_NAMES
            .iter()
            .zip(self.entries())
            .map(|(name, c)| format!("{name},{},{},{}\n", c.mu, c.sigma, c.orientation))
            .collect()
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fsio::read_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fsio::write_atomic(path, self.to_text().as_bytes())
    }
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self::shipped()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityScore {
    pub q: f64,
    /// Normalized snr, bw and rp values.
    pub normalized: [f64; 3],
}

/// Power around the peak and its first two harmonics over the rest of the
/// in-band power. Harmonic bands outside the spectrum contribute nothing.
pub fn snr_feature(spectrum: &PowerSpectrum) -> Result<f64> {
    let peak = spectrum.freqs[spectrum.peak_index()?];
    let signal: f64 = spectrum
        .freqs
        .iter()
        .zip(&spectrum.power)
        .filter(|(&f, _)| {
            (1..=SNR_HARMONICS)
                .any(|k| (f - k as f64 * peak).abs() <= HARMONIC_HALF_WIDTH_HZ + 1e-12)
        })
        .map(|(_, &p)| p)
        .sum();
    Ok(signal / (spectrum.total_power - signal).max(SNR_EPSILON))
}

pub fn bw99_feature(spectrum: &PowerSpectrum) -> Result<f64> {
    bandwidth_containing(spectrum, BW_POWER_FRACTION)
}

/// Width of the bin interval grown symmetrically from the peak until it holds
/// `fraction` of the total power. A side that reaches the band edge stops and
/// the other keeps growing.
pub fn bandwidth_containing(spectrum: &PowerSpectrum, fraction: f64) -> Result<f64> {
    let peak = spectrum.peak_index()?;
    let p = &spectrum.power;
    let target = fraction * spectrum.total_power;
    let (mut lo, mut hi) = (peak, peak);
    let mut acc = p[peak];
    while acc < target && (lo > 0 || hi + 1 < p.len()) {
        if lo > 0 {
            lo -= 1;
            acc += p[lo];
        }
        if hi + 1 < p.len() {
            hi += 1;
            acc += p[hi];
        }
    }
    Ok((hi - lo + 1) as f64 * spectrum.df)
}

/// Highest spectral power over the highest other local maximum at least
/// [`RP_MIN_SEPARATION_HZ`] away. Returns [`RP_CAP`] when no such peak exists.
pub fn ratio_peaks_feature(spectrum: &PowerSpectrum) -> Result<f64> {
    let first = spectrum.peak_index()?;
    let p = &spectrum.power;
    let n = p.len();
    let is_local_max = |i: usize| {
        let left = i == 0 || p[i] > p[i - 1];
        let right = i + 1 == n || p[i] > p[i + 1];
        n > 1 && left && right
    };
    let f1 = spectrum.freqs[first];
    let second = (0..n)
        .filter(|&i| (spectrum.freqs[i] - f1).abs() >= RP_MIN_SEPARATION_HZ - 1e-12)
        .filter(|&i| is_local_max(i))
        .map(|i| p[i])
        .fold(None, |best: Option<f64>, v| Some(best.map_or(v, |b| b.max(v))));
    Ok(match second {
        Some(p2) if p2 > 0.0 => (p[first] / p2).min(RP_CAP),
        _ => RP_CAP,
    })
}

/// Maps `x` into (0, 1), increasing in the direction of better quality.
pub fn tanh_normalize(x: f64, mu: f64, sigma: f64, orientation: Orientation) -> f64 {
    let z = match orientation {
        Orientation::HigherBetter => (x - mu) / sigma,
        Orientation::LowerBetter => (mu - x) / sigma,
    };
    0.5 * ((TANH_SLOPE * z).tanh() + 1.0)
}

pub fn quality_score(features: &QualityFeatures, cal: &CalibrationParams) -> QualityScore {
    let values = features.calibration_space();
    let mut normalized = [0.0; 3];
    for ((out, x), c) in normalized.iter_mut().zip(values).zip(cal.entries()) {
        *out = tanh_normalize(x, c.mu, c.sigma, c.orientation);
    }
    QualityScore {
        q: normalized.iter().sum::<f64>() / 3.0,
        normalized,
    }
}

/// Features and score of one spectrum.
pub fn assess(spectrum: &PowerSpectrum, cal: &CalibrationParams) -> Result<(QualityFeatures, QualityScore)> {
    let features = QualityFeatures::from_spectrum(spectrum)?;
    Ok((features, quality_score(&features, cal)))
}
