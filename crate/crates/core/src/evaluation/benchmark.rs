//! Running a descriptor configuration through a full benchmark protocol.

use std::sync::Arc;

use rayon::prelude::*;

use super::det::{
    aggregate_overall, det_per_window, match_detections, mean_std, reference_point, CurveKind, DetCurve, DetPoint,
    FoldCounts, FppwDenominator, SummaryRow,
};
use super::split::{split_by_subject, split_random_indices, Protocol};
use super::EvalError;
use crate::classifier::{train, LinearModel, TrainConfig};
use crate::descriptors::{DescriptorConfig, FeatureMatrix};
use crate::interval::Interval;
use crate::manifest::{DatasetManifest, VideoRecord};
use crate::sampling::{ground_truths_at_scale, label_window, SampleScales, SamplingConfig, Window};
use crate::spotting::{temporal_nms, threshold, Detection, WindowBank, DEFAULT_NMS_IOU};
use crate::temporal_scale::ScaleSpec;
use crate::volume::{load_volume, VideoVolume};

pub const DEFAULT_LADDER_LEN: usize = 41;
pub const DEFAULT_REF_FPPW: f64 = 0.4;
pub const DEFAULT_REF_FPPV: f64 = 1.0;
const AVERAGE_GRID: usize = 101;

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub descriptor: DescriptorConfig,
    pub scales: ScaleSpec,
    pub sampling: SamplingConfig,
    pub train: TrainConfig,
    pub nms_overlap: f64,
    pub protocol: Protocol,
    pub fppw_denominator: FppwDenominator,
    pub ref_fppw: f64,
    pub ref_fppv: f64,
    pub ladder_len: usize,
}

impl BenchmarkConfig {
    pub fn new(descriptor: DescriptorConfig, protocol: Protocol) -> Self {
        Self {
            descriptor,
            scales: ScaleSpec::default(),
            sampling: SamplingConfig::default(),
            train: TrainConfig::default(),
            nms_overlap: DEFAULT_NMS_IOU,
            protocol,
            fppw_denominator: FppwDenominator::default(),
            ref_fppw: DEFAULT_REF_FPPW,
            ref_fppv: DEFAULT_REF_FPPV,
            ladder_len: DEFAULT_LADDER_LEN,
        }
    }

    fn validate(&self) -> Result<(), EvalError> {
        if !(self.nms_overlap > 0.0 && self.nms_overlap <= 1.0) {
            return Err(EvalError::BadConfig(format!(
                "NMS overlap must lie in (0, 1], got {}",
                self.nms_overlap
            )));
        }
        if self.ladder_len < 2 {
            return Err(EvalError::BadConfig(
                "threshold ladder needs at least two points".into(),
            ));
        }
        Ok(())
    }
}

/// A video with every window described and labelled, ready for any fold.
#[derive(Debug, Clone)]
pub struct PreparedVideo {
    pub id: String,
    pub subject_id: String,
    pub ground_truths: Vec<Interval>,
    pub bank: WindowBank,
    /// Window labels, one vector per bank level.
    pub labels: Vec<Vec<i8>>,
}

impl PreparedVideo {
    pub fn build(record: &VideoRecord, volume: &VideoVolume, cfg: &BenchmarkConfig) -> Result<Self, EvalError> {
        let s = &cfg.sampling;
        let bank = WindowBank::build(volume, &cfg.descriptor, &cfg.scales, s.window_len, s.stride)?;
        let id: Arc<str> = Arc::from(record.id.as_str());
        let labels = bank
            .levels
            .iter()
            .map(|level| {
                let gts = ground_truths_at_scale(&record.ground_truths, bank.source_len, level.scaled_len, s)?;
                Ok(level
                    .windows
                    .iter()
                    .map(|&interval| {
                        let w = Window {
                            video_id: id.clone(),
                            scale_factor: level.factor,
                            interval,
                        };
                        label_window(w, &gts, s.epsilon).label.sign()
                    })
                    .collect())
            })
            .collect::<Result<Vec<Vec<i8>>, EvalError>>()?;
        Ok(Self {
            id: record.id.clone(),
            subject_id: record.subject_id.clone(),
            ground_truths: record.ground_truths.clone(),
            bank,
            labels,
        })
    }

    /// Windows used for classifier training and per-window evaluation.
    fn eligible(&self, scales: SampleScales) -> impl Iterator<Item = (&[f32], i8)> {
        self.bank
            .levels
            .iter()
            .zip(&self.labels)
            .filter(move |(level, _)| scales == SampleScales::All || level.factor == 1.0)
            .flat_map(|(level, labels)| level.features.iter().zip(labels.iter().copied()))
    }
}

/// Loads and prepares every video of a manifest, in record order.
pub fn prepare_dataset(manifest: &DatasetManifest, cfg: &BenchmarkConfig) -> Result<Vec<PreparedVideo>, EvalError> {
    manifest
        .records
        .par_iter()
        .map(|r| {
            let v = load_volume(manifest.volume_path(r))?.with_fps(r.fps)?;
            PreparedVideo::build(r, &v, cfg)
        })
        .collect()
}

fn train_rows<'a>(
    rows: impl Iterator<Item = (&'a [f32], i8)>,
    cfg: &BenchmarkConfig,
) -> Result<LinearModel, EvalError> {
    let mut x = FeatureMatrix::new(cfg.descriptor.dim());
    let mut y = Vec::new();
    for (row, label) in rows {
        x.push(row);
        y.push(label);
    }
    Ok(train(&x, &y, &cfg.train, &cfg.descriptor.digest())?)
}

fn score_rows<'a>(model: &LinearModel, rows: impl Iterator<Item = (&'a [f32], i8)>) -> (Vec<f64>, Vec<i8>) {
    rows.map(|(x, y)| (model.score_unchecked(x), y)).unzip()
}

/// Raw scored windows of one test video together with its ground truths.
#[derive(Debug, Clone)]
pub struct VideoScores {
    pub ground_truths: Vec<Interval>,
    pub detections: Vec<Detection>,
}

/// Counts for one video at one threshold: threshold, NMS, then matching.
pub fn video_counts(v: &VideoScores, score_threshold: f64, nms_overlap: f64, epsilon: f64) -> FoldCounts {
    let kept = temporal_nms(&threshold(&v.detections, score_threshold), nms_overlap);
    match_detections(&kept, &v.ground_truths, epsilon)
}

/// `n` thresholds evenly spaced from the largest to the smallest score.
pub fn threshold_ladder(scores: &[f64], n: usize) -> Vec<f64> {
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    if scores.is_empty() || n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| {
            if k + 1 == n {
                lo
            } else {
                hi + (lo - hi) * k as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Spotting-level DET curve.
///
/// Each fold gets its own ladder over the scores of its test videos. Counts
/// are pooled across folds ladder step by ladder step and turned into one
/// point each with [`aggregate_overall`], where the video and event totals
/// cover every test video of every fold. Pooled points carry a NaN
/// threshold unless there is a single fold. A point at infinite threshold is
/// always included.
pub fn det_per_video(
    folds: &[Vec<VideoScores>],
    ladder_len: usize,
    nms_overlap: f64,
    epsilon: f64,
) -> Result<DetCurve, EvalError> {
    let n_videos: usize = folds.iter().map(Vec::len).sum();
    let n_plus: usize = folds.iter().flatten().map(|v| v.ground_truths.len()).sum();
    if n_videos == 0 || n_plus == 0 {
        return Err(EvalError::EmptyDataset);
    }
    let ladders: Vec<Vec<f64>> = folds
        .iter()
        .map(|f| {
            let scores: Vec<f64> = f.iter().flat_map(|v| v.detections.iter().map(|d| d.score)).collect();
            threshold_ladder(&scores, ladder_len)
        })
        .collect();
    let per_fold: Vec<Vec<FoldCounts>> = folds
        .par_iter()
        .zip(&ladders)
        .map(|(videos, ladder)| {
            ladder
                .iter()
                .map(|&t| videos.iter().map(|v| video_counts(v, t, nms_overlap, epsilon)).sum())
                .collect()
        })
        .collect();
    let mut points = vec![DetPoint {
        threshold: f64::INFINITY,
        fp_rate: 0.0,
        miss_rate: 1.0,
    }];
    for k in 0..ladder_len {
        let counts: Vec<FoldCounts> = per_fold.iter().filter_map(|f| f.get(k).copied()).collect();
        let (fp_rate, miss_rate) = aggregate_overall(&counts, n_videos, n_plus)?;
        let threshold = if folds.len() == 1 {
            ladders[0].get(k).copied().unwrap_or(f64::NAN)
        } else {
            f64::NAN
        };
        points.push(DetPoint {
            threshold,
            fp_rate,
            miss_rate,
        });
    }
    Ok(DetCurve::new(CurveKind::PerVideo, points))
}

/// Mean miss rate over curves at evenly spaced false-positive rates in `[0, max_x]`.
pub fn average_curves(curves: &[DetCurve], kind: CurveKind, max_x: f64) -> Result<DetCurve, EvalError> {
    if curves.is_empty() {
        return Err(EvalError::Empty);
    }
    let points = (0..AVERAGE_GRID)
        .map(|i| {
            let x = max_x * i as f64 / (AVERAGE_GRID - 1) as f64;
            let misses = curves
                .iter()
                .map(|c| reference_point(c, x))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(DetPoint {
                threshold: f64::NAN,
                fp_rate: x,
                miss_rate: mean_std(&misses)?.0,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(DetCurve::new(kind, points))
}

/// Curves and reference-point summaries of one benchmark run.
#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub descriptor_name: String,
    pub protocol: String,
    /// Per-fold (LOSO) or per-repetition (random) classifier curves.
    pub window_curves: Vec<DetCurve>,
    /// Mean of `window_curves`.
    pub window_curve: DetCurve,
    /// Pooled over folds (LOSO) or averaged over repetitions (random).
    pub video_curve: DetCurve,
    pub window_summary: SummaryRow,
    pub video_summary: SummaryRow,
}

impl BenchmarkReport {
    pub fn summary(&self) -> Vec<SummaryRow> {
        vec![self.window_summary.clone(), self.video_summary.clone()]
    }
}

struct FoldOutcome {
    window_curve: Option<DetCurve>,
    video_scores: Vec<VideoScores>,
}

fn evaluate_fold(
    videos: &[PreparedVideo],
    train_videos: &[usize],
    test_videos: &[usize],
    cfg: &BenchmarkConfig,
) -> Result<FoldOutcome, EvalError> {
    let scales = cfg.sampling.scales;
    let model = train_rows(train_videos.iter().flat_map(|&i| videos[i].eligible(scales)), cfg)?;
    let (scores, labels) = score_rows(&model, test_videos.iter().flat_map(|&i| videos[i].eligible(scales)));
    let window_curve = match det_per_window(&scores, &labels, cfg.fppw_denominator) {
        Ok(c) => Some(c),
        Err(EvalError::SingleClass) => None,
        Err(e) => return Err(e),
    };
    let video_scores = test_videos
        .iter()
        .map(|&i| {
            Ok(VideoScores {
                ground_truths: videos[i].ground_truths.clone(),
                detections: videos[i].bank.score_all(&model)?,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(FoldOutcome {
        window_curve,
        video_scores,
    })
}

fn summary_row(
    cfg: &BenchmarkConfig,
    protocol: &str,
    kind: CurveKind,
    x: f64,
    misses: &[f64],
) -> Result<SummaryRow, EvalError> {
    let (miss_mean, miss_std) = mean_std(misses)?;
    Ok(SummaryRow {
        descriptor_name: cfg.descriptor.name(),
        protocol: format!(
            "{protocol}-{}",
            if kind == CurveKind::PerWindow { "fppw" } else { "fppv" }
        ),
        reference_x: x,
        miss_mean,
        miss_std,
    })
}

fn window_part(
    cfg: &BenchmarkConfig,
    protocol: &str,
    curves: Vec<DetCurve>,
) -> Result<(Vec<DetCurve>, DetCurve, SummaryRow), EvalError> {
    if curves.is_empty() {
        return Err(EvalError::SingleClass);
    }
    let refs = curves
        .iter()
        .map(|c| reference_point(c, cfg.ref_fppw))
        .collect::<Result<Vec<_>, _>>()?;
    let mean = average_curves(&curves, CurveKind::PerWindow, 1.0)?;
    let row = summary_row(cfg, protocol, CurveKind::PerWindow, cfg.ref_fppw, &refs)?;
    Ok((curves, mean, row))
}

/// Runs the configured protocol over prepared videos.
///
/// LOSO: one model per held-out subject; the per-window summary is the mean
/// and standard deviation of the per-fold reference miss rates (folds whose
/// test windows hold a single class are skipped), the per-video curve pools
/// counts over all folds.
///
/// Random: each repetition `r` uses seed `seed + r`. Per-window repetitions
/// split the pooled windows; per-video repetitions split whole videos and
/// count false positives per test video.
pub fn run_benchmark(videos: &[PreparedVideo], cfg: &BenchmarkConfig) -> Result<BenchmarkReport, EvalError> {
    cfg.validate()?;
    if videos.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let protocol = cfg.protocol.label();
    let eps = cfg.sampling.epsilon;
    match cfg.protocol {
        Protocol::Loso => {
            let subjects: Vec<&str> = videos.iter().map(|v| v.subject_id.as_str()).collect();
            let folds = split_by_subject(&subjects)?;
            let outcomes = folds
                .par_iter()
                .map(|f| evaluate_fold(videos, &f.train, &f.test, cfg))
                .collect::<Result<Vec<_>, EvalError>>()?;
            let window_curves: Vec<DetCurve> = outcomes.iter().filter_map(|o| o.window_curve.clone()).collect();
            let (window_curves, window_curve, window_summary) = window_part(cfg, &protocol, window_curves)?;
            let groups: Vec<Vec<VideoScores>> = outcomes.into_iter().map(|o| o.video_scores).collect();
            let video_curve = det_per_video(&groups, cfg.ladder_len, cfg.nms_overlap, eps)?;
            let miss = reference_point(&video_curve, cfg.ref_fppv)?;
            let video_summary = summary_row(cfg, &protocol, CurveKind::PerVideo, cfg.ref_fppv, &[miss])?;
            Ok(BenchmarkReport {
                descriptor_name: cfg.descriptor.name(),
                protocol,
                window_curves,
                window_curve,
                video_curve,
                window_summary,
                video_summary,
            })
        }
        Protocol::Random {
            train_fraction,
            repetitions,
            seed,
        } => {
            let scales = cfg.sampling.scales;
            let rows: Vec<(&[f32], i8)> = videos.iter().flat_map(|v| v.eligible(scales)).collect();
            let reps: Vec<u64> = (0..repetitions as u64).map(|r| seed.wrapping_add(r)).collect();
            let window_curves = reps
                .par_iter()
                .map(|&s| {
                    let (tr, te) = split_random_indices(rows.len(), train_fraction, s)?;
                    let model = train_rows(tr.iter().map(|&i| rows[i]), cfg)?;
                    let (scores, labels) = score_rows(&model, te.iter().map(|&i| rows[i]));
                    det_per_window(&scores, &labels, cfg.fppw_denominator)
                })
                .collect::<Result<Vec<_>, EvalError>>()?;
            let (window_curves, window_curve, window_summary) = window_part(cfg, &protocol, window_curves)?;

            let video_curves = reps
                .par_iter()
                .map(|&s| {
                    let (tr, te) = split_random_indices(videos.len(), train_fraction, s)?;
                    let outcome = evaluate_fold(videos, &tr, &te, cfg)?;
                    det_per_video(&[outcome.video_scores], cfg.ladder_len, cfg.nms_overlap, eps)
                })
                .collect::<Result<Vec<_>, EvalError>>()?;
            let refs = video_curves
                .iter()
                .map(|c| reference_point(c, cfg.ref_fppv))
                .collect::<Result<Vec<_>, _>>()?;
            let max_x = video_curves
                .iter()
                .flat_map(|c| c.points.iter().map(|p| p.fp_rate))
                .fold(cfg.ref_fppv, f64::max);
            let video_curve = average_curves(&video_curves, CurveKind::PerVideo, max_x)?;
            let video_summary = summary_row(cfg, &protocol, CurveKind::PerVideo, cfg.ref_fppv, &refs)?;
            Ok(BenchmarkReport {
                descriptor_name: cfg.descriptor.name(),
                protocol,
                window_curves,
                window_curve,
                video_curve,
                window_summary,
                video_summary,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(a: usize, b: usize, score: f64) -> Detection {
        Detection {
            interval: Interval::new(a, b).unwrap(),
            score,
            scale_factor: 1.0,
        }
    }

    #[test]
    fn ladder_endpoints() {
        let l = threshold_ladder(&[0.3, -1.0, 2.0], 5);
        assert_eq!(l.len(), 5);
        assert_eq!((l[0], l[4]), (2.0, -1.0));
        assert!(l.windows(2).all(|w| w[0] >= w[1]));
        assert!(threshold_ladder(&[], 5).is_empty());
    }

    fn toy_video() -> VideoScores {
        VideoScores {
            ground_truths: vec![Interval::new(10, 18).unwrap(), Interval::new(60, 68).unwrap()],
            detections: vec![
                det(10, 18, 2.0),
                det(11, 19, 1.5),
                det(30, 38, 1.0),
                det(61, 69, 0.5),
                det(80, 88, 0.0),
            ],
        }
    }

    #[test]
    fn infinite_and_minus_infinite_thresholds() {
        let v = toy_video();
        let none = video_counts(&v, f64::INFINITY, 0.3, 0.5);
        assert_eq!((none.tp, none.fp, none.r#fn), (0, 0, 2));
        let all = video_counts(&v, f64::NEG_INFINITY, 0.3, 0.5);
        assert_eq!((all.tp, all.fp, all.r#fn), (2, 2, 0));
    }

    #[test]
    fn per_video_curve_is_monotone() {
        let curve = det_per_video(&[vec![toy_video(), toy_video()]], 41, 0.3, 0.5).unwrap();
        assert_eq!(curve.points[0].fp_rate, 0.0);
        assert_eq!(curve.points[0].miss_rate, 1.0);
        let mut by_thr: Vec<DetPoint> = curve.points.clone();
        by_thr.sort_by(|a, b| b.threshold.total_cmp(&a.threshold));
        assert!(by_thr
            .windows(2)
            .all(|w| w[0].fp_rate <= w[1].fp_rate && w[0].miss_rate >= w[1].miss_rate));
        let last = by_thr.last().unwrap();
        assert_eq!((last.fp_rate, last.miss_rate), (2.0, 0.0));
    }

    #[test]
    fn pooled_folds_use_dataset_totals() {
        let empty = VideoScores {
            ground_truths: vec![],
            detections: vec![det(0, 8, 1.0)],
        };
        let curve = det_per_video(&[vec![toy_video()], vec![empty]], 3, 0.3, 0.5).unwrap();
        let last = curve.points.last().unwrap();
        assert_eq!(last.fp_rate, 3.0 / 2.0);
        assert_eq!(last.miss_rate, 0.0);
        assert!(last.threshold.is_nan());
        assert!(matches!(
            det_per_video(
                &[vec![VideoScores {
                    ground_truths: vec![],
                    detections: vec![]
                }]],
                3,
                0.3,
                0.5
            ),
            Err(EvalError::EmptyDataset)
        ));
    }

    #[test]
    fn averaging() {
        let a = DetCurve::new(
            CurveKind::PerWindow,
            vec![
                DetPoint {
                    threshold: 1.0,
                    fp_rate: 0.0,
                    miss_rate: 1.0,
                },
                DetPoint {
                    threshold: 0.0,
                    fp_rate: 1.0,
                    miss_rate: 0.0,
                },
            ],
        );
        let b = DetCurve::new(
            CurveKind::PerWindow,
            vec![DetPoint {
                threshold: 0.0,
                fp_rate: 0.0,
                miss_rate: 0.0,
            }],
        );
        let m = average_curves(&[a, b], CurveKind::PerWindow, 1.0).unwrap();
        assert_eq!(m.points.len(), AVERAGE_GRID);
        assert!((reference_point(&m, 0.4).unwrap() - 0.3).abs() < 1e-12);
    }
}
