//! Sliding-window enumeration and IoU labeling.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::Interval;
use crate::temporal_scale::{map_to_scaled, scaled_len, ScaleError};

pub const DEFAULT_WINDOW_LEN: usize = 9;
pub const DEFAULT_EPSILON: f64 = 0.5;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("window of {window} frames does not fit in {frames} frames")]
    WindowTooLong { window: usize, frames: usize },
    #[error("video of {frames} frames is shorter than the {window}-frame window")]
    VideoTooShort { window: usize, frames: usize },
    #[error("window length must be at least 2 and stride at least 1 (got L={window}, s={stride})")]
    BadGeometry { window: usize, stride: usize },
    #[error("IoU threshold must lie in (0, 1], got {0}")]
    BadEpsilon(f64),
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error("sample table: {0}")]
    Csv(#[from] csv::Error),
}

/// Start positions `0, s, 2s, ...` of every `L`-frame window that fits in `T` frames.
///
/// Yields `floor((T - L) / s) + 1` windows; trailing frames that do not fill a
/// whole window are not sampled.
pub fn enumerate_windows(frames: usize, window: usize, stride: usize) -> Result<Vec<Interval>, SamplingError> {
    if window < 2 || stride == 0 {
        return Err(SamplingError::BadGeometry { window, stride });
    }
    if window > frames {
        return Err(SamplingError::WindowTooLong { window, frames });
    }
    Ok((0..=(frames - window))
        .step_by(stride)
        .map(|start| Interval::with_len(start, window))
        .collect())
}

/// Number of windows [`enumerate_windows`] yields, or 0 when none fit.
pub fn window_count(frames: usize, window: usize, stride: usize) -> usize {
    if window > frames || stride == 0 {
        0
    } else {
        (frames - window) / stride + 1
    }
}

/// Intersection over union of two intervals, counted in whole frames.
pub fn iou(a: &Interval, b: &Interval) -> f64 {
    let inter = a.intersection_len(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn sign(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }

    pub fn from_sign(sign: i8) -> Option<Self> {
        match sign {
            1 => Some(Label::Positive),
            -1 => Some(Label::Negative),
            _ => None,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

/// A scanning window in the time base of one pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub video_id: Arc<str>,
    pub scale_factor: f64,
    pub interval: Interval,
}

impl Window {
    pub fn len(&self) -> usize {
        self.interval.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub window: Window,
    pub label: Label,
    pub best_iou: f64,
}

fn check_epsilon(epsilon: f64) -> Result<(), SamplingError> {
    if epsilon > 0.0 && epsilon <= 1.0 {
        Ok(())
    } else {
        Err(SamplingError::BadEpsilon(epsilon))
    }
}

/// Labels `window` positive iff its best IoU against `gts` reaches `epsilon`.
///
/// `gts` must already be expressed in the window's time base.
pub fn label_window(window: Window, gts: &[Interval], epsilon: f64) -> LabeledSample {
    let best_iou = gts.iter().map(|g| iou(&window.interval, g)).fold(0.0, f64::max);
    let label = if best_iou >= epsilon {
        Label::Positive
    } else {
        Label::Negative
    };
    LabeledSample {
        window,
        label,
        best_iou,
    }
}

/// Resizes `gt` to exactly `window` frames around its midpoint `floor((onset + offset) / 2)`,
/// shifting as little as possible to stay inside `[0, frames - 1]`.
pub fn normalize_ground_truth(gt: Interval, window: usize, frames: usize) -> Result<Interval, SamplingError> {
    if frames < window {
        return Err(SamplingError::VideoTooShort { window, frames });
    }
    let mid = (gt.onset() + gt.offset()) / 2;
    let start = mid.saturating_sub((window - 1) / 2).min(frames - window);
    Ok(Interval::with_len(start, window))
}

/// How ground truths are prepared before labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundTruthMode {
    /// Use annotated intervals as they are.
    #[default]
    Raw,
    /// Resize every annotation to the window length with [`normalize_ground_truth`].
    Fixed,
}

/// Which pyramid levels contribute samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleScales {
    #[default]
    All,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub window_len: usize,
    pub stride: usize,
    pub epsilon: f64,
    pub ground_truth: GroundTruthMode,
    pub scales: SampleScales,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            window_len: DEFAULT_WINDOW_LEN,
            stride: 1,
            epsilon: DEFAULT_EPSILON,
            ground_truth: GroundTruthMode::Raw,
            scales: SampleScales::All,
        }
    }
}

/// Ground truths of a `source_len`-frame video expressed at `scaled_len` frames.
pub fn ground_truths_at_scale(
    gts: &[Interval],
    source_len: usize,
    scaled_len: usize,
    cfg: &SamplingConfig,
) -> Result<Vec<Interval>, SamplingError> {
    gts.iter()
        .map(|&gt| {
            let gt = match cfg.ground_truth {
                GroundTruthMode::Raw => gt,
                GroundTruthMode::Fixed => normalize_ground_truth(gt, cfg.window_len, source_len)?,
            };
            Ok(map_to_scaled(gt, source_len, scaled_len)?)
        })
        .collect()
}

/// Enumerates and labels the windows of one video at every requested scale.
///
/// Scales too short to hold a single window are skipped.
pub fn sample_video(
    video_id: &str,
    source_len: usize,
    gts: &[Interval],
    factors: &[f64],
    cfg: &SamplingConfig,
) -> Result<Vec<LabeledSample>, SamplingError> {
    check_epsilon(cfg.epsilon)?;
    let id: Arc<str> = Arc::from(video_id);
    let mut out = Vec::new();
    for &factor in factors {
        if cfg.scales == SampleScales::Identity && factor != 1.0 {
            continue;
        }
        let len = if factor == 1.0 {
            source_len
        } else {
            scaled_len(factor, source_len)
        };
        if len < cfg.window_len {
            continue;
        }
        let scaled_gts = ground_truths_at_scale(gts, source_len, len, cfg)?;
        for interval in enumerate_windows(len, cfg.window_len, cfg.stride)? {
            let window = Window {
                video_id: id.clone(),
                scale_factor: factor,
                interval,
            };
            out.push(label_window(window, &scaled_gts, cfg.epsilon));
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRow {
    video_id: String,
    scale: f64,
    start: usize,
    end: usize,
    label: i8,
    best_iou: f64,
}

/// Writes samples as `video_id,scale,start,end,label,best_iou` with labels `1`/`-1`.
pub fn write_samples_csv(samples: &[LabeledSample], out: impl Write) -> Result<(), SamplingError> {
    let mut w = csv::Writer::from_writer(out);
    for s in samples {
        w.serialize(SampleRow {
            video_id: s.window.video_id.to_string(),
            scale: s.window.scale_factor,
            start: s.window.interval.onset(),
            end: s.window.interval.offset(),
            label: s.label.sign(),
            best_iou: s.best_iou,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_samples_csv(input: impl Read) -> Result<Vec<LabeledSample>, SamplingError> {
    let mut r = csv::Reader::from_reader(input);
    let mut ids: Vec<Arc<str>> = Vec::new();
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: SampleRow = row?;
        let bad = |msg: &str| {
            SamplingError::Csv(csv::Error::from(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                msg.to_string(),
            )))
        };
        let interval = Interval::new(row.start, row.end).ok_or_else(|| bad("start after end"))?;
        let label = Label::from_sign(row.label).ok_or_else(|| bad("label must be 1 or -1"))?;
        let video_id = match ids.iter().find(|i| ***i == *row.video_id) {
            Some(i) => i.clone(),
            None => {
                let i: Arc<str> = Arc::from(row.video_id.as_str());
                ids.push(i.clone());
                i
            }
        };
        out.push(LabeledSample {
            window: Window {
                video_id,
                scale_factor: row.scale,
                interval,
            },
            label,
            best_iou: row.best_iou,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: usize, b: usize) -> Interval {
        Interval::new(a, b).unwrap()
    }

    fn window(a: usize, b: usize) -> Window {
        Window {
            video_id: Arc::from("v"),
            scale_factor: 1.0,
            interval: iv(a, b),
        }
    }

    #[test]
    fn window_enumeration_examples() {
        let w = enumerate_windows(100, 9, 1).unwrap();
        assert_eq!(w.len(), 92);
        assert_eq!((w[0], w[91]), (iv(0, 8), iv(91, 99)));
        assert_eq!(enumerate_windows(9, 9, 1).unwrap(), vec![iv(0, 8)]);
        assert_eq!(
            enumerate_windows(20, 9, 4).unwrap(),
            vec![iv(0, 8), iv(4, 12), iv(8, 16)]
        );
        assert!(matches!(
            enumerate_windows(8, 9, 1),
            Err(SamplingError::WindowTooLong { .. })
        ));
        assert!(matches!(
            enumerate_windows(8, 1, 1),
            Err(SamplingError::BadGeometry { .. })
        ));
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&iv(10, 18), &iv(10, 18)), 1.0);
        assert_eq!(iou(&iv(0, 4), &iv(10, 14)), 0.0);
        assert_eq!(iou(&iv(10, 18), &iv(14, 22)), 5.0 / 13.0);
    }

    #[test]
    fn labeling_examples() {
        let s = label_window(window(10, 18), &[iv(10, 18)], 0.5);
        assert_eq!((s.label, s.best_iou), (Label::Positive, 1.0));
        let s = label_window(window(10, 18), &[], 0.5);
        assert_eq!((s.label, s.best_iou), (Label::Negative, 0.0));
        let s = label_window(window(14, 22), &[iv(10, 18)], 0.5);
        assert_eq!((s.label, s.best_iou), (Label::Negative, 5.0 / 13.0));
    }

    #[test]
    fn ground_truth_normalization() {
        assert_eq!(normalize_ground_truth(iv(10, 18), 9, 100).unwrap(), iv(10, 18));
        assert_eq!(normalize_ground_truth(iv(10, 16), 9, 100).unwrap(), iv(9, 17));
        assert_eq!(normalize_ground_truth(iv(0, 2), 9, 100).unwrap(), iv(0, 8));
        assert_eq!(normalize_ground_truth(iv(95, 99), 9, 100).unwrap(), iv(91, 99));
        assert!(matches!(
            normalize_ground_truth(iv(0, 2), 9, 8),
            Err(SamplingError::VideoTooShort { .. })
        ));
    }

    #[test]
    fn samples_cover_every_scale() {
        let cfg = SamplingConfig::default();
        let samples = sample_video("v", 40, &[iv(10, 18)], &[0.5, 1.0, 2.0], &cfg).unwrap();
        // 20, 40 and 80 frames
        assert_eq!(samples.len(), 12 + 32 + 72);
        let at_one: Vec<_> = samples.iter().filter(|s| s.window.scale_factor == 1.0).collect();
        // shifts |k| <= 3 give (9 - k) / (9 + k) >= 0.5
        assert_eq!(at_one.iter().filter(|s| s.label.is_positive()).count(), 7);

        let identity = SamplingConfig {
            scales: SampleScales::Identity,
            ..cfg
        };
        assert_eq!(
            sample_video("v", 40, &[], &[0.5, 1.0, 2.0], &identity).unwrap().len(),
            32
        );

        let bad = SamplingConfig { epsilon: 0.0, ..cfg };
        assert!(matches!(
            sample_video("v", 40, &[], &[1.0], &bad),
            Err(SamplingError::BadEpsilon(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let cfg = SamplingConfig::default();
        let samples = sample_video("clip-7", 30, &[iv(3, 11)], &[0.75, 1.0], &cfg).unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&samples, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("video_id,scale,start,end,label,best_iou\n"));
        assert_eq!(read_samples_csv(buf.as_slice()).unwrap(), samples);
    }

    proptest::proptest! {
        #[test]
        fn iou_is_symmetric_and_bounded(a in 0usize..60, la in 1usize..30, b in 0usize..60, lb in 1usize..30) {
            let (x, y) = (Interval::with_len(a, la), Interval::with_len(b, lb));
            let v = iou(&x, &y);
            proptest::prop_assert_eq!(v, iou(&y, &x));
            proptest::prop_assert!((0.0..=1.0).contains(&v));
            proptest::prop_assert_eq!(iou(&x, &x), 1.0);
        }

        #[test]
        fn normalized_ground_truth_fits(on in 0usize..200, len in 1usize..40, window in 2usize..20, extra in 0usize..50) {
            let gt = Interval::with_len(on, len);
            let frames = (gt.offset() + 1).max(window) + extra;
            let n = normalize_ground_truth(gt, window, frames).unwrap();
            proptest::prop_assert_eq!(n.len(), window);
            proptest::prop_assert!(n.fits_within(frames));
        }
    }
}
