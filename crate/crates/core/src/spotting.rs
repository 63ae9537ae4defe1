//! Scanning a video with a trained model and merging detections.

use std::cmp::Ordering;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::LinearModel;
use crate::descriptors::{DescriptorConfig, DescriptorError, DescriptorMaps, FeatureMatrix};
use crate::interval::Interval;
use crate::sampling::{enumerate_windows, iou, SamplingError};
use crate::temporal_scale::{build_pyramid, map_to_original, ScaleError, ScaleSpec};
use crate::volume::VideoVolume;

pub const DEFAULT_NMS_IOU: f64 = 0.3;

#[derive(Debug, Error)]
pub enum SpotError {
    #[error("model was trained on features {model}, scanning with {config}")]
    DigestMismatch { model: String, config: String },
    #[error("model has {model} weights but descriptors have {features} dimensions")]
    DimMismatch { model: usize, features: usize },
    #[error("no pyramid level of the {frames}-frame video holds a {window}-frame window")]
    NoValidScale { frames: usize, window: usize },
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error("detection table: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// In the time base of the source video.
    pub interval: Interval,
    pub score: f64,
    pub scale_factor: f64,
}

/// Windows of one pyramid level and their descriptors.
#[derive(Debug, Clone)]
pub struct BankLevel {
    pub factor: f64,
    pub scaled_len: usize,
    pub windows: Vec<Interval>,
    pub features: FeatureMatrix,
}

/// Descriptors of every window of a video across all scales.
///
/// Built once per video so that several models or thresholds can be applied
/// without re-extracting.
#[derive(Debug, Clone)]
pub struct WindowBank {
    pub source_len: usize,
    pub window_len: usize,
    pub feature_digest: String,
    pub levels: Vec<BankLevel>,
}

impl WindowBank {
    /// Levels shorter than `window_len` are skipped.
    pub fn build(
        v: &VideoVolume,
        dcfg: &DescriptorConfig,
        scales: &ScaleSpec,
        window_len: usize,
        stride: usize,
    ) -> Result<Self, SpotError> {
        dcfg.validate()?;
        let pyramid = build_pyramid(v, scales)?;
        let levels = pyramid
            .par_iter()
            .filter(|level| level.len() >= window_len)
            .map(|level| {
                let windows = enumerate_windows(level.len(), window_len, stride)?;
                let maps = DescriptorMaps::compute(level.volume.view(), dcfg)?;
                let blocks = maps.window_blocks(window_len)?;
                let dim = dcfg.dim();
                let mut data = vec![0.0f32; windows.len() * dim];
                for (w, row) in windows.iter().zip(data.chunks_exact_mut(dim)) {
                    maps.extract_into(w.onset(), window_len, &blocks, row)?;
                }
                Ok(BankLevel {
                    factor: level.factor,
                    scaled_len: level.len(),
                    windows,
                    features: FeatureMatrix::from_rows(dim, data)?,
                })
            })
            .collect::<Result<Vec<_>, SpotError>>()?;
        if levels.is_empty() {
            return Err(SpotError::NoValidScale {
                frames: v.frames(),
                window: window_len,
            });
        }
        Ok(Self {
            source_len: v.frames(),
            window_len,
            feature_digest: dcfg.digest(),
            levels,
        })
    }

    pub fn window_count(&self) -> usize {
        self.levels.iter().map(|l| l.windows.len()).sum()
    }

    fn check_model(&self, model: &LinearModel) -> Result<(), SpotError> {
        if model.feature_digest != self.feature_digest {
            return Err(SpotError::DigestMismatch {
                model: model.feature_digest.clone(),
                config: self.feature_digest.clone(),
            });
        }
        let dim = self.levels[0].features.dim();
        if model.dim() != dim {
            return Err(SpotError::DimMismatch {
                model: model.dim(),
                features: dim,
            });
        }
        Ok(())
    }

    /// Every window as a detection in the source time base, with its raw score.
    pub fn score_all(&self, model: &LinearModel) -> Result<Vec<Detection>, SpotError> {
        self.check_model(model)?;
        let mut out = Vec::with_capacity(self.window_count());
        for level in &self.levels {
            for (w, x) in level.windows.iter().zip(level.features.iter()) {
                out.push(Detection {
                    interval: map_to_original(*w, self.source_len, level.scaled_len)?,
                    score: model.score_unchecked(x),
                    scale_factor: level.factor,
                });
            }
        }
        Ok(out)
    }
}

/// Scores every window of every pyramid level and keeps those reaching `score_threshold`.
#[allow(clippy::too_many_arguments)]
pub fn scan(
    v: &VideoVolume,
    model: &LinearModel,
    dcfg: &DescriptorConfig,
    scales: &ScaleSpec,
    window_len: usize,
    stride: usize,
    score_threshold: f64,
) -> Result<Vec<Detection>, SpotError> {
    if model.feature_digest != dcfg.digest() {
        return Err(SpotError::DigestMismatch {
            model: model.feature_digest.clone(),
            config: dcfg.digest(),
        });
    }
    let bank = WindowBank::build(v, dcfg, scales, window_len, stride)?;
    Ok(threshold(&bank.score_all(model)?, score_threshold))
}

/// Detections scoring at least `score_threshold`.
pub fn threshold(dets: &[Detection], score_threshold: f64) -> Vec<Detection> {
    dets.iter().filter(|d| d.score >= score_threshold).copied().collect()
}

/// Suppression priority: higher score first, then earlier onset, then smaller scale.
fn priority(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.interval.onset().cmp(&b.interval.onset()))
        .then(a.scale_factor.total_cmp(&b.scale_factor))
        .then(a.interval.offset().cmp(&b.interval.offset()))
}

fn by_onset(a: &Detection, b: &Detection) -> Ordering {
    a.interval
        .cmp(&b.interval)
        .then(a.scale_factor.total_cmp(&b.scale_factor))
        .then(b.score.total_cmp(&a.score))
}

/// Greedy temporal non-maximum suppression.
///
/// Repeatedly keeps the highest-priority remaining detection and drops every
/// remaining detection whose IoU with it reaches `overlap`. The result is
/// sorted by onset.
pub fn temporal_nms(dets: &[Detection], overlap: f64) -> Vec<Detection> {
    let mut order: Vec<Detection> = dets.to_vec();
    order.sort_by(priority);
    let mut kept: Vec<Detection> = Vec::new();
    for d in order {
        if kept.iter().all(|k| iou(&k.interval, &d.interval) < overlap) {
            kept.push(d);
        }
    }
    kept.sort_by(by_onset);
    kept
}

/// Scan followed by temporal NMS.
#[allow(clippy::too_many_arguments)]
pub fn spot(
    v: &VideoVolume,
    model: &LinearModel,
    dcfg: &DescriptorConfig,
    scales: &ScaleSpec,
    window_len: usize,
    stride: usize,
    score_threshold: f64,
    nms_overlap: f64,
) -> Result<Vec<Detection>, SpotError> {
    let raw = scan(v, model, dcfg, scales, window_len, stride, score_threshold)?;
    Ok(temporal_nms(&raw, nms_overlap))
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectionRow {
    video_id: String,
    onset: usize,
    offset: usize,
    score: f64,
    scale: f64,
}

/// Writes `video_id,onset,offset,score,scale` rows.
pub fn write_detections_csv<'a>(
    rows: impl IntoIterator<Item = (&'a str, &'a Detection)>,
    out: impl Write,
) -> Result<(), SpotError> {
    let mut w = csv::Writer::from_writer(out);
    for (video_id, d) in rows {
        w.serialize(DetectionRow {
            video_id: video_id.to_string(),
            onset: d.interval.onset(),
            offset: d.interval.offset(),
            score: d.score,
            scale: d.scale_factor,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_detections_csv(input: impl Read) -> Result<Vec<(String, Detection)>, SpotError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: DetectionRow = row?;
        let interval = Interval::new(row.onset, row.offset).ok_or_else(|| {
            csv::Error::from(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "onset after offset",
            ))
        })?;
        out.push((
            row.video_id,
            Detection {
                interval,
                score: row.score,
                scale_factor: row.scale,
            },
        ));
    }
    Ok(out)
}
