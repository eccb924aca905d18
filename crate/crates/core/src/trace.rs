//! Time-series types and ingestion: RFS frame containers, ROI sidecars,
//! trace CSVs, ground-truth downsampling and gap repair.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fsio;

/// Largest tolerated fraction of missing samples in a trace or window.
pub const MAX_GAP_FRACTION: f64 = 0.2;

const RFS_MAGIC: &[u8; 4] = b"RFS1";
const RFS_HEADER_LEN: usize = 4 + 5 * 4;

/// Uniformly sampled scalar series. Missing samples are flagged in the gap mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    samples: Vec<f64>,
    fs: f64,
    t0: f64,
    gap_mask: Vec<bool>,
}

impl SampleTrace {
    /// Gap-free trace starting at t = 0.
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        let gap_mask = vec![false; samples.len()];
        Self::with_gaps(samples, gap_mask, fs, 0.0)
    }

    pub fn with_gaps(samples: Vec<f64>, gap_mask: Vec<bool>, fs: f64, t0: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::BadConfig(format!("sampling rate must be > 0, got {fs}")));
        }
        if samples.len() != gap_mask.len() {
            return Err(Error::LengthMismatch {
                left: samples.len(),
                right: gap_mask.len(),
            });
        }
        Ok(Self {
            samples,
            fs,
            t0,
            gap_mask,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn gap_mask(&self) -> &[bool] {
        &self.gap_mask
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    pub fn gap_count(&self) -> usize {
        self.gap_mask
            .iter()
            .zip(&self.samples)
            .filter(|(&g, v)| g || !v.is_finite())
            .count()
    }

    pub fn gap_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.gap_count() as f64 / self.samples.len() as f64
        }
    }

    /// Applies `f` to every sample, keeping timing and gap mask.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            samples: self.samples.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub(crate) fn into_parts(self) -> (Vec<f64>, Vec<bool>) {
        (self.samples, self.gap_mask)
    }
}

/// Rectangular region of interest for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub struct RoiBox {
    #[serde(rename = "frame")]
    pub frame_index: usize,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl RoiBox {
    fn fits(&self, width: u32, height: u32) -> bool {
        self.w > 0
            && self.h > 0
            && u64::from(self.x) + u64::from(self.w) <= u64::from(width)
            && u64::from(self.y) + u64::from(self.h) <= u64::from(height)
    }
}

/// 8-bit grayscale frames stored back to back, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameStream {
    pub width: u32,
    pub height: u32,
    pub fps_num: u32,
    pub fps_den: u32,
    data: Vec<u8>,
}

impl FrameStream {
    pub fn new(width: u32, height: u32, fps_num: u32, fps_den: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::MalformedHeader("zero frame dimension".into()));
        }
        if fps_num == 0 || fps_den == 0 {
            return Err(Error::MalformedHeader("frame rate must be > 0".into()));
        }
        let frame_len = width as usize * height as usize;
        if !data.len().is_multiple_of(frame_len) {
            return Err(Error::TruncatedPayload {
                expected: (data.len() / frame_len + 1) as u64 * frame_len as u64,
                found: data.len() as u64,
            });
        }
        Ok(Self {
            width,
            height,
            fps_num,
            fps_den,
            data,
        })
    }

    pub fn fps(&self) -> f64 {
        f64::from(self.fps_num) / f64::from(self.fps_den)
    }

    pub fn frame_len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.frame_len()
    }

    pub fn frame(&self, index: usize) -> &[u8] {
        let n = self.frame_len();
        &self.data[index * n..(index + 1) * n]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[u8]> {
        self.data.chunks_exact(self.frame_len())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(RFS_HEADER_LEN + self.data.len());
        out.extend_from_slice(RFS_MAGIC);
        for v in [
            self.width,
            self.height,
            self.fps_num,
            self.fps_den,
            self.count() as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::MalformedHeader("file shorter than magic".into()));
        }
        let magic = &bytes[..4];
        if magic != RFS_MAGIC {
            if &magic[..3] == b"RFS" {
                return Err(Error::UnsupportedVersion(
                    String::from_utf8_lossy(magic).into_owned(),
                ));
            }
            return Err(Error::MalformedHeader("bad magic".into()));
        }
        if bytes.len() < RFS_HEADER_LEN {
            return Err(Error::MalformedHeader("header shorter than 24 bytes".into()));
        }
        let field = |i: usize| {
            let off = 4 + 4 * i;
            u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap())
        };
        let (width, height, fps_num, fps_den, count) =
            (field(0), field(1), field(2), field(3), field(4));
        if width == 0 || height == 0 {
            return Err(Error::MalformedHeader("zero frame dimension".into()));
        }
        if fps_num == 0 || fps_den == 0 {
            return Err(Error::MalformedHeader("frame rate must be > 0".into()));
        }
        let expected = u64::from(width) * u64::from(height) * u64::from(count);
        let found = (bytes.len() - RFS_HEADER_LEN) as u64;
        if found < expected {
            return Err(Error::TruncatedPayload { expected, found });
        }
        if found > expected {
            return Err(Error::MalformedHeader(format!(
                "{} trailing bytes after {count} frames",
                found - expected
            )));
        }
        Self::new(width, height, fps_num, fps_den, bytes[RFS_HEADER_LEN..].to_vec())
    }
}

pub fn read_frame_stream(path: &Path) -> Result<FrameStream> {
    FrameStream::from_bytes(&fsio::read_bytes(path)?)
}

pub fn write_frame_stream(path: &Path, stream: &FrameStream) -> Result<()> {
    fsio::write_atomic(path, &stream.to_bytes())
}

/// Reads an ROI sidecar (`frame,x,y,w,h` header, one row per tracked frame).
pub fn read_roi_csv(path: &Path) -> Result<Vec<RoiBox>> {
    let text = fsio::read_string(path)?;
    parse_roi_csv(&text)
}

pub fn parse_roi_csv(text: &str) -> Result<Vec<RoiBox>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Mean ROI intensity per frame. Frames without an ROI become gaps holding NaN.
pub fn roi_mean_trace(frames: &FrameStream, rois: &[RoiBox]) -> Result<SampleTrace> {
    let count = frames.count();
    let mut samples = vec![f64::NAN; count];
    let mut gap_mask = vec![true; count];
    let mut last: Option<usize> = None;
    for roi in rois {
        if last.is_some_and(|l| roi.frame_index <= l) {
            return Err(Error::RoiOrder(roi.frame_index));
        }
        last = Some(roi.frame_index);
        if roi.frame_index >= count || !roi.fits(frames.width, frames.height) {
            return Err(Error::RoiOutOfBounds(roi.frame_index));
        }
        let frame = frames.frame(roi.frame_index);
        let stride = frames.width as usize;
        let (x, y, w, h) = (
            roi.x as usize,
            roi.y as usize,
            roi.w as usize,
            roi.h as usize,
        );
        let sum: u64 = (y..y + h)
            .map(|row| {
                frame[row * stride + x..row * stride + x + w]
                    .iter()
                    .map(|&p| u64::from(p))
                    .sum::<u64>()
            })
            .sum();
        samples[roi.frame_index] = sum as f64 / (w * h) as f64;
        gap_mask[roi.frame_index] = false;
    }
    SampleTrace::with_gaps(samples, gap_mask, frames.fps(), 0.0)
}

/// Parses a one-value-per-line trace. Blank and `nan` lines are gaps.
pub fn parse_csv_trace(text: &str, fs: f64) -> Result<SampleTrace> {
    let mut samples = Vec::new();
    let mut gap_mask = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.eq_ignore_ascii_case("nan") {
            samples.push(f64::NAN);
            gap_mask.push(true);
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::NonNumericLine(i + 1))?;
        if !v.is_finite() {
            return Err(Error::NonNumericLine(i + 1));
        }
        samples.push(v);
        gap_mask.push(false);
    }
    SampleTrace::with_gaps(samples, gap_mask, fs, 0.0)
}

pub fn read_csv_trace(path: &Path, fs: f64) -> Result<SampleTrace> {
    parse_csv_trace(&fsio::read_string(path)?, fs)
}

pub fn format_csv_trace(trace: &SampleTrace) -> String {
    let mut out = String::with_capacity(trace.len() * 12);
    for (&v, &gap) in trace.samples().iter().zip(trace.gap_mask()) {
        if gap || !v.is_finite() {
            out.push_str("nan\n");
        } else {
            out.push_str(&format!("{v}\n"));
        }
    }
    out
}

pub fn write_csv_trace(path: &Path, trace: &SampleTrace) -> Result<()> {
    fsio::write_atomic(path, format_csv_trace(trace).as_bytes())
}

/// Block-mean downsampling by the integer ratio `fs / target_fs`.
/// A block containing any gap is flagged as a gap. Means are taken relative
/// to the block's first sample, so constant input stays exact.
pub fn downsample_groundtruth(trace: &SampleTrace, target_fs: f64) -> Result<SampleTrace> {
    let ratio = trace.fs() / target_fs;
    let factor = ratio.round();
    if !(target_fs > 0.0) || factor < 1.0 || (ratio - factor).abs() > 1e-9 * ratio {
        return Err(Error::NonIntegerRatio {
            from: trace.fs(),
            to: target_fs,
        });
    }
    let factor = factor as usize;
    let (samples, gap_mask): (Vec<f64>, Vec<bool>) = trace
        .samples()
        .chunks_exact(factor)
        .zip(trace.gap_mask().chunks_exact(factor))
        .map(|(block, gaps)| {
            let base = block[0];
            let dev: f64 = block.iter().map(|&v| v - base).sum();
            (base + dev / factor as f64, gaps.iter().any(|&g| g))
        })
        .unzip();
    SampleTrace::with_gaps(samples, gap_mask, target_fs, trace.t0())
}

/// Linear interpolation across interior gaps; leading and trailing gaps take
/// the nearest valid value. The gap mask is kept for diagnostics.
pub fn interpolate_gaps(trace: &SampleTrace) -> Result<SampleTrace> {
    let fraction = trace.gap_fraction();
    if fraction > MAX_GAP_FRACTION {
        return Err(Error::TooManyGaps { fraction });
    }
    let n = trace.len();
    let valid: Vec<bool> = trace
        .gap_mask()
        .iter()
        .zip(trace.samples())
        .map(|(&g, v)| !g && v.is_finite())
        .collect();
    let mut out = trace.samples().to_vec();
    let mut prev: Option<usize> = None;
    let mut i = 0;
    while i < n {
        if valid[i] {
            prev = Some(i);
            i += 1;
            continue;
        }
        let next = (i..n).find(|&j| valid[j]);
        let end = next.unwrap_or(n);
        for k in i..end {
            out[k] = match (prev, next) {
                (Some(a), Some(b)) => {
                    let frac = (k - a) as f64 / (b - a) as f64;
                    out[a] + frac * (out[b] - out[a])
                }
                (Some(a), None) => out[a],
                (None, Some(b)) => out[b],
                // unreachable when the gap fraction check passed on a non-empty trace
                (None, None) => 0.0,
            };
        }
        i = end;
    }
    SampleTrace::with_gaps(out, trace.gap_mask().to_vec(), trace.fs(), trace.t0())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_stream() -> FrameStream {
        FrameStream::new(2, 2, 20, 1, vec![10, 20, 30, 40]).unwrap()
    }

    #[test]
    fn minimal_rfs_file_parses() {
        let mut bytes = b"RFS1".to_vec();
        for v in [2u32, 2, 20, 1, 1] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&[10, 20, 30, 40]);
        let s = FrameStream::from_bytes(&bytes).unwrap();
        assert_eq!(s.count(), 1);
        assert_eq!(s.frame(0), &[10, 20, 30, 40]);
        assert_eq!(s.fps(), 20.0);
        assert_eq!(s.to_bytes(), bytes);
    }

    #[test]
    fn rfs_truncated_and_bad_magic() {
        let mut bytes = b"RFS1".to_vec();
        for v in [2u32, 2, 20, 1, 2] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&[10, 20, 30, 40]);
        assert!(matches!(
            FrameStream::from_bytes(&bytes),
            Err(Error::TruncatedPayload { expected: 8, found: 4 })
        ));
        bytes[0] = b'X';
        assert!(matches!(
            FrameStream::from_bytes(&bytes),
            Err(Error::MalformedHeader(_))
        ));
        bytes[0] = b'R';
        bytes[3] = b'2';
        assert!(matches!(
            FrameStream::from_bytes(&bytes),
            Err(Error::UnsupportedVersion(_))
        ));
    }

    #[test]
    fn roi_means() {
        let s = tiny_stream();
        let whole = RoiBox { frame_index: 0, x: 0, y: 0, w: 2, h: 2 };
        assert_eq!(roi_mean_trace(&s, &[whole]).unwrap().samples(), &[25.0]);
        let corner = RoiBox { w: 1, h: 1, ..whole };
        assert_eq!(roi_mean_trace(&s, &[corner]).unwrap().samples(), &[10.0]);
        let off = RoiBox { x: 1, ..whole };
        assert!(matches!(roi_mean_trace(&s, &[off]), Err(Error::RoiOutOfBounds(0))));
    }

    #[test]
    fn missing_roi_is_gap() {
        let s = FrameStream::new(2, 2, 20, 1, (0..20).collect()).unwrap();
        let rois: Vec<RoiBox> = [0, 1, 2, 4]
            .iter()
            .map(|&f| RoiBox { frame_index: f, x: 0, y: 0, w: 2, h: 2 })
            .collect();
        let t = roi_mean_trace(&s, &rois).unwrap();
        assert_eq!(t.gap_mask(), &[false, false, false, true, false]);
        let unordered = [rois[1], rois[0]];
        assert!(matches!(roi_mean_trace(&s, &unordered), Err(Error::RoiOrder(0))));
    }

    #[test]
    fn roi_csv_parses() {
        let rois = parse_roi_csv("frame,x,y,w,h\n0,1,2,3,4\n5, 0,0,1,1\n").unwrap();
        assert_eq!(rois.len(), 2);
        assert_eq!(rois[1], RoiBox { frame_index: 5, x: 0, y: 0, w: 1, h: 1 });
    }

    #[test]
    fn csv_trace_parsing() {
        let t = parse_csv_trace("1.0\n2.0\n3.0", 20.0).unwrap();
        assert_eq!(t.samples(), &[1.0, 2.0, 3.0]);
        assert_eq!(t.fs(), 20.0);
        let t = parse_csv_trace("1.0\nnan\n3.0\n", 20.0).unwrap();
        assert_eq!(t.gap_mask(), &[false, true, false]);
        let t = parse_csv_trace("1.0\n\n3.0\n", 20.0).unwrap();
        assert_eq!(t.gap_mask(), &[false, true, false]);
        assert!(matches!(parse_csv_trace("abc", 20.0), Err(Error::NonNumericLine(1))));
    }

    #[test]
    fn downsample_blocks() {
        let t = SampleTrace::new(vec![7.0; 5000], 500.0).unwrap();
        let d = downsample_groundtruth(&t, 20.0).unwrap();
        assert_eq!(d.len(), 200);
        assert!(d.samples().iter().all(|&v| v == 7.0));
        assert_eq!(d.fs(), 20.0);

        let ramp: Vec<f64> = (1..=50).map(f64::from).collect();
        let d = downsample_groundtruth(&SampleTrace::new(ramp, 500.0).unwrap(), 20.0).unwrap();
        assert_eq!(d.samples()[0], 13.0);

        assert!(matches!(
            downsample_groundtruth(&t, 19.0),
            Err(Error::NonIntegerRatio { .. })
        ));
    }

    #[test]
    fn gap_interpolation() {
        let t = SampleTrace::with_gaps(vec![1.0, f64::NAN, 3.0], vec![false, true, false], 20.0, 0.0)
            .unwrap();
        // 1 in 3 exceeds the limit, so exercise the arithmetic on a longer trace
        assert!(matches!(interpolate_gaps(&t), Err(Error::TooManyGaps { .. })));

        let mut samples = vec![1.0, f64::NAN, 3.0];
        samples.extend([3.0; 7]);
        let mut mask = vec![false, true, false];
        mask.extend([false; 7]);
        let t = SampleTrace::with_gaps(samples, mask, 20.0, 0.0).unwrap();
        let r = interpolate_gaps(&t).unwrap();
        assert_eq!(&r.samples()[..3], &[1.0, 2.0, 3.0]);
        assert_eq!(r.gap_mask()[1], true);

        let mut samples = vec![f64::NAN, 5.0, 5.0];
        samples.extend([5.0; 7]);
        let mut mask = vec![true, false, false];
        mask.extend([false; 7]);
        let r = interpolate_gaps(&SampleTrace::with_gaps(samples, mask, 20.0, 0.0).unwrap()).unwrap();
        assert!(r.samples().iter().all(|&v| v == 5.0));

        let mask: Vec<bool> = (0..10).map(|i| i < 3).collect();
        let t = SampleTrace::with_gaps(vec![0.0; 10], mask, 20.0, 0.0).unwrap();
        assert!(matches!(interpolate_gaps(&t), Err(Error::TooManyGaps { .. })));
    }
}
