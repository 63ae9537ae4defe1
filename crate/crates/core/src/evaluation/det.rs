//! DET curves, detection matching and overall aggregation.

use std::fmt;
use std::io::{Read, Write};
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::interval::Interval;
use crate::spotting::Detection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    PerWindow,
    PerVideo,
}

impl CurveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveKind::PerWindow => "per_window",
            CurveKind::PerVideo => "per_video",
        }
    }
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One operating point. `threshold` is NaN for points that do not come from
/// a single score threshold (averaged or ladder-aggregated curves).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub fp_rate: f64,
    pub miss_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    pub kind: CurveKind,
    pub points: Vec<DetPoint>,
}

impl DetCurve {
    /// Sorts by false-positive rate, keeping the input order among ties.
    pub fn new(kind: CurveKind, mut points: Vec<DetPoint>) -> Self {
        points.sort_by(|a, b| a.fp_rate.total_cmp(&b.fp_rate));
        Self { kind, points }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// What the false positives of a per-window curve are divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FppwDenominator {
    #[default]
    Negatives,
    All,
}

impl FromStr for FppwDenominator {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "neg" => Ok(FppwDenominator::Negatives),
            "all" => Ok(FppwDenominator::All),
            _ => Err(EvalError::BadConfig(format!(
                "FPPW denominator must be neg or all, got {s}"
            ))),
        }
    }
}

impl fmt::Display for FppwDenominator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FppwDenominator::Negatives => "neg",
            FppwDenominator::All => "all",
        })
    }
}

/// Classifier-level DET curve.
///
/// The first point uses an infinite threshold, then every distinct score in
/// descending order is tried; a window counts as detected when its score is
/// at least the threshold.
pub fn det_per_window(scores: &[f64], labels: &[i8], denominator: FppwDenominator) -> Result<DetCurve, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l != 1 && l != -1) {
        return Err(EvalError::BadLabel(bad));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::BadConfig("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let fp_den = match denominator {
        FppwDenominator::Negatives => n_neg,
        FppwDenominator::All => labels.len(),
    } as f64;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![DetPoint {
        threshold: f64::INFINITY,
        fp_rate: 0.0,
        miss_rate: 1.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let thr = scores[order[i]];
        while i < order.len() && scores[order[i]] == thr {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(DetPoint {
            threshold: thr,
            fp_rate: fp as f64 / fp_den,
            miss_rate: (n_pos - tp) as f64 / n_pos as f64,
        });
    }
    Ok(DetCurve::new(CurveKind::PerWindow, points))
}

/// Miss rate at `x` by linear interpolation along the curve.
///
/// Values of `x` outside the curve's range clamp to the first or last point.
/// When several points share `fp_rate == x` the lowest miss rate among them
/// is returned.
pub fn reference_point(curve: &DetCurve, x: f64) -> Result<f64, EvalError> {
    let pts = &curve.points;
    let first = pts.first().ok_or(EvalError::EmptyCurve)?;
    let last = pts[pts.len() - 1];
    if x < first.fp_rate {
        return Ok(first.miss_rate);
    }
    if x > last.fp_rate {
        return Ok(last.miss_rate);
    }
    let exact: Vec<f64> = pts.iter().filter(|p| p.fp_rate == x).map(|p| p.miss_rate).collect();
    if !exact.is_empty() {
        return Ok(exact.into_iter().fold(f64::INFINITY, f64::min));
    }
    let hi = pts
        .iter()
        .position(|p| p.fp_rate > x)
        .expect("x inside the curve range");
    let below = pts[..hi].iter().map(|p| p.fp_rate).fold(f64::NEG_INFINITY, f64::max);
    let lo_miss = pts[..hi]
        .iter()
        .filter(|p| p.fp_rate == below)
        .map(|p| p.miss_rate)
        .fold(f64::INFINITY, f64::min);
    let (x0, x1) = (below, pts[hi].fp_rate);
    let t = (x - x0) / (x1 - x0);
    Ok(lo_miss + t * (pts[hi].miss_rate - lo_miss))
}

/// Arithmetic mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Result<(f64, f64), EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// True/false positive and missed-event counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FoldCounts {
    pub tp: usize,
    pub fp: usize,
    pub r#fn: usize,
    pub n_videos: usize,
}

impl Add for FoldCounts {
    type Output = FoldCounts;

    fn add(self, o: FoldCounts) -> FoldCounts {
        FoldCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            r#fn: self.r#fn + o.r#fn,
            n_videos: self.n_videos + o.n_videos,
        }
    }
}

impl AddAssign for FoldCounts {
    fn add_assign(&mut self, o: FoldCounts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for FoldCounts {
    fn sum<I: Iterator<Item = FoldCounts>>(iter: I) -> Self {
        iter.fold(FoldCounts::default(), Add::add)
    }
}

/// Counts for one video.
///
/// Detections are visited by descending score (ties: earlier onset, then
/// smaller scale). Each takes the unmatched ground truth it overlaps most,
/// and is a true positive if that overlap reaches `epsilon`.
pub fn match_detections(dets: &[Detection], gts: &[Interval], epsilon: f64) -> FoldCounts {
    let mut order: Vec<&Detection> = dets.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.interval.onset().cmp(&b.interval.onset()))
            .then(a.scale_factor.total_cmp(&b.scale_factor))
    });
    let mut matched = vec![false; gts.len()];
    let mut counts = FoldCounts {
        n_videos: 1,
        ..FoldCounts::default()
    };
    for d in order {
        let best = gts
            .iter()
            .enumerate()
            .filter(|(i, _)| !matched[*i])
            .map(|(i, g)| (i, crate::sampling::iou(&d.interval, g)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        match best {
            Some((i, o)) if o >= epsilon => {
                matched[i] = true;
                counts.tp += 1;
            }
            _ => counts.fp += 1,
        }
    }
    counts.r#fn = matched.iter().filter(|m| !**m).count();
    counts
}

/// Overall false positives per video and miss rate from pooled fold counts.
pub fn aggregate_overall(folds: &[FoldCounts], n_videos: usize, n_plus: usize) -> Result<(f64, f64), EvalError> {
    if n_videos == 0 || n_plus == 0 {
        return Err(EvalError::EmptyDataset);
    }
    let total: FoldCounts = folds.iter().copied().sum();
    Ok((total.fp as f64 / n_videos as f64, 1.0 - total.tp as f64 / n_plus as f64))
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    kind: CurveKind,
    threshold: f64,
    fp_rate: f64,
    miss_rate: f64,
}

/// Writes `kind,threshold,fp_rate,miss_rate` rows.
pub fn write_curve_csv(curve: &DetCurve, out: impl Write) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    for p in &curve.points {
        w.serialize(CurveRow {
            kind: curve.kind,
            threshold: p.threshold,
            fp_rate: p.fp_rate,
            miss_rate: p.miss_rate,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a curve written by [`write_curve_csv`]; all rows must share one kind.
pub fn read_curve_csv(input: impl Read) -> Result<DetCurve, EvalError> {
    let mut r = csv::Reader::from_reader(input);
    let mut kind = None;
    let mut points = Vec::new();
    for row in r.deserialize() {
        let row: CurveRow = row?;
        if kind.is_some_and(|k| k != row.kind) {
            return Err(EvalError::BadConfig("curve file mixes kinds".into()));
        }
        kind = Some(row.kind);
        points.push(DetPoint {
            threshold: row.threshold,
            fp_rate: row.fp_rate,
            miss_rate: row.miss_rate,
        });
    }
    let kind = kind.ok_or(EvalError::EmptyCurve)?;
    Ok(DetCurve::new(kind, points))
}

/// One line of the benchmark summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub descriptor_name: String,
    pub protocol: String,
    pub reference_x: f64,
    pub miss_mean: f64,
    pub miss_std: f64,
}

pub fn write_summary_csv(rows: &[SummaryRow], out: impl Write) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(input: impl Read) -> Result<Vec<SummaryRow>, EvalError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(EvalError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(fp: f64, miss: f64) -> DetPoint {
        DetPoint {
            threshold: f64::NAN,
            fp_rate: fp,
            miss_rate: miss,
        }
    }

    fn has(curve: &DetCurve, fp: f64, miss: f64) -> bool {
        curve.points.iter().any(|p| p.fp_rate == fp && p.miss_rate == miss)
    }

    #[test]
    fn hand_counted_point() {
        let c = det_per_window(&[0.9, 0.2, 0.6, 0.1], &[1, 1, -1, -1], FppwDenominator::Negatives).unwrap();
        let p = c.points.iter().find(|p| p.threshold == 0.6).unwrap();
        assert_eq!((p.fp_rate, p.miss_rate), (0.5, 0.5));
        assert!(c.points.windows(2).all(|w| w[0].fp_rate <= w[1].fp_rate));
        let all = det_per_window(&[0.9, 0.2, 0.6, 0.1], &[1, 1, -1, -1], FppwDenominator::All).unwrap();
        assert!(has(&all, 0.25, 0.5));
    }

    #[test]
    fn separated_and_degenerate_scores() {
        let c = det_per_window(&[3.0, 2.0, -1.0, -2.0], &[1, 1, -1, -1], FppwDenominator::Negatives).unwrap();
        assert!(has(&c, 0.0, 0.0));
        let flat = det_per_window(&[0.5; 6], &[1, -1, 1, -1, -1, 1], FppwDenominator::Negatives).unwrap();
        let pts: Vec<(f64, f64)> = flat.points.iter().map(|p| (p.fp_rate, p.miss_rate)).collect();
        assert_eq!(pts, vec![(0.0, 1.0), (1.0, 0.0)]);
    }

    #[test]
    fn per_window_errors() {
        assert!(matches!(
            det_per_window(&[1.0, 2.0], &[1, 1], FppwDenominator::Negatives),
            Err(EvalError::SingleClass)
        ));
        assert!(matches!(
            det_per_window(&[1.0], &[1, -1], FppwDenominator::Negatives),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            det_per_window(&[1.0, 0.0], &[1, 0], FppwDenominator::Negatives),
            Err(EvalError::BadLabel(0))
        ));
    }

    #[test]
    fn reference_interpolation() {
        let c = DetCurve::new(CurveKind::PerWindow, vec![pt(0.0, 1.0), pt(1.0, 0.0)]);
        assert!((reference_point(&c, 0.4).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(reference_point(&c, 1.0).unwrap(), 0.0);
        assert_eq!(reference_point(&c, 0.0).unwrap(), 1.0);
        assert_eq!(reference_point(&c, 7.0).unwrap(), 0.0);
        let shifted = DetCurve::new(CurveKind::PerVideo, vec![pt(0.5, 0.8), pt(2.0, 0.1)]);
        assert_eq!(reference_point(&shifted, 0.1).unwrap(), 0.8);
        let single = DetCurve::new(CurveKind::PerVideo, vec![pt(0.3, 0.25)]);
        for x in [0.0, 0.3, 5.0] {
            assert_eq!(reference_point(&single, x).unwrap(), 0.25);
        }
        let empty = DetCurve::new(CurveKind::PerVideo, vec![]);
        assert!(matches!(reference_point(&empty, 1.0), Err(EvalError::EmptyCurve)));
    }

    #[test]
    fn reference_uses_best_point_on_vertical_steps() {
        let c = DetCurve::new(
            CurveKind::PerVideo,
            vec![pt(0.0, 1.0), pt(1.0, 0.7), pt(1.0, 0.4), pt(2.0, 0.0)],
        );
        assert_eq!(reference_point(&c, 1.0).unwrap(), 0.4);
        assert!((reference_point(&c, 1.5).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn mean_and_population_std() {
        let (m, s) = mean_std(&[0.2, 0.4]).unwrap();
        assert!((m - 0.3).abs() < 1e-12 && (s - 0.1).abs() < 1e-12);
        assert_eq!(mean_std(&[0.7]).unwrap(), (0.7, 0.0));
        assert_eq!(mean_std(&[0.5; 4]).unwrap().1, 0.0);
        assert!(matches!(mean_std(&[]), Err(EvalError::Empty)));
    }

    fn det(a: usize, b: usize, score: f64) -> Detection {
        Detection {
            interval: Interval::new(a, b).unwrap(),
            score,
            scale_factor: 1.0,
        }
    }

    #[test]
    fn matching_examples() {
        let gts = vec![Interval::new(10, 18).unwrap(), Interval::new(40, 52).unwrap()];
        let exact: Vec<Detection> = gts
            .iter()
            .map(|g| Detection {
                interval: *g,
                score: -3.0,
                scale_factor: 1.0,
            })
            .collect();
        assert_eq!(
            match_detections(&exact, &gts, 0.5),
            FoldCounts {
                tp: 2,
                fp: 0,
                r#fn: 0,
                n_videos: 1
            }
        );
        let one = [Interval::new(10, 18).unwrap()];
        let two = [det(10, 18, 0.4), det(11, 19, 0.9)];
        let c = match_detections(&two, &one, 0.5);
        assert_eq!((c.tp, c.fp, c.r#fn), (1, 1, 0));
        let c = match_detections(&[], &[gts[0], gts[1], Interval::new(70, 75).unwrap()], 0.5);
        assert_eq!((c.tp, c.fp, c.r#fn), (0, 0, 3));
    }

    #[test]
    fn overall_aggregation() {
        let folds = vec![
            FoldCounts {
                tp: 3,
                fp: 40,
                r#fn: 2,
                n_videos: 9,
            },
            FoldCounts {
                tp: 5,
                fp: 36,
                r#fn: 0,
                n_videos: 10,
            },
        ];
        let (fppv, miss) = aggregate_overall(&folds, 76, 10).unwrap();
        assert_eq!(fppv, 1.0);
        assert_eq!(miss, 1.0 - 8.0 / 10.0);
        assert_eq!(aggregate_overall(&folds, 76, 8).unwrap().1, 0.0);
        assert_eq!(aggregate_overall(&[FoldCounts::default()], 4, 8).unwrap(), (0.0, 1.0));
        assert!(matches!(aggregate_overall(&folds, 0, 8), Err(EvalError::EmptyDataset)));
        assert!(matches!(aggregate_overall(&folds, 3, 0), Err(EvalError::EmptyDataset)));
    }

    #[test]
    fn csv_round_trips() {
        let c = det_per_window(&[0.9, 0.2, 0.6, 0.1], &[1, 1, -1, -1], FppwDenominator::Negatives).unwrap();
        let mut buf = Vec::new();
        write_curve_csv(&c, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("kind,threshold,fp_rate,miss_rate\nper_window,inf,"));
        assert_eq!(read_curve_csv(buf.as_slice()).unwrap(), c);

        let rows = vec![SummaryRow {
            descriptor_name: "hog-top-bl884-ol02-nb12".into(),
            protocol: "loso".into(),
            reference_x: 0.4,
            miss_mean: 0.25,
            miss_std: 0.05,
        }];
        let mut buf = Vec::new();
        write_summary_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("descriptor_name,protocol,reference_x,miss_mean,miss_std\n"));
        assert_eq!(read_summary_csv(buf.as_slice()).unwrap(), rows);
    }

    fn brute_tp(dets: &[Detection], gts: &[Interval], eps: f64) -> usize {
        // Greedy in the same visiting order, but choosing by exhaustive scan over GT indices.
        let mut order: Vec<&Detection> = dets.iter().collect();
        order.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.interval.onset().cmp(&b.interval.onset()))
        });
        let mut used = vec![false; gts.len()];
        let mut tp = 0;
        for d in order {
            let inter = |g: &Interval| {
                (d.interval.onset()..=d.interval.offset())
                    .filter(|f| g.contains(*f))
                    .count() as f64
            };
            let mut best: Option<(usize, f64)> = None;
            for (i, g) in gts.iter().enumerate() {
                if used[i] {
                    continue;
                }
                let n = inter(g);
                let o = n / (d.interval.len() as f64 + g.len() as f64 - n);
                if best.is_none_or(|(_, b)| o > b) {
                    best = Some((i, o));
                }
            }
            if let Some((i, o)) = best {
                if o >= eps {
                    used[i] = true;
                    tp += 1;
                }
            }
        }
        tp
    }

    proptest::proptest! {
        #[test]
        fn matching_conserves_ground_truths(
            raw in proptest::collection::vec((0usize..30, 1usize..10, 0u8..20), 0..8),
            graw in proptest::collection::vec((0usize..30, 1usize..10), 0..5),
        ) {
            let dets: Vec<Detection> = raw.iter().map(|&(a, l, s)| Detection {
                interval: Interval::with_len(a, l), score: s as f64, scale_factor: 1.0,
            }).collect();
            let gts: Vec<Interval> = graw.iter().map(|&(a, l)| Interval::with_len(a, l)).collect();
            let c = match_detections(&dets, &gts, 0.5);
            proptest::prop_assert_eq!(c.tp + c.r#fn, gts.len());
            proptest::prop_assert_eq!(c.tp + c.fp, dets.len());
            proptest::prop_assert_eq!(c.tp, brute_tp(&dets, &gts, 0.5));
        }
    }
}
