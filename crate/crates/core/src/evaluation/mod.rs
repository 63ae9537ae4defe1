//! Benchmark protocols and DET-curve measurements.

mod benchmark;
mod det;
mod split;

pub use benchmark::{
    average_curves, det_per_video, prepare_dataset, run_benchmark, threshold_ladder, video_counts, BenchmarkConfig,
    BenchmarkReport, PreparedVideo, VideoScores, DEFAULT_LADDER_LEN, DEFAULT_REF_FPPV, DEFAULT_REF_FPPW,
};
pub use det::{
    aggregate_overall, det_per_window, match_detections, mean_std, read_curve_csv, read_summary_csv, reference_point,
    write_curve_csv, write_summary_csv, CurveKind, DetCurve, DetPoint, FoldCounts, FppwDenominator, SummaryRow,
};
pub use split::{
    split_by_subject, split_loso, split_random, split_random_indices, Fold, Protocol, DEFAULT_REPETITIONS,
    DEFAULT_TRAIN_FRACTION,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least two samples to split, got {0}")]
    TooFewSamples(usize),
    #[error("leave-one-subject-out needs at least two subjects")]
    SingleSubject,
    #[error("scores need both positive and negative labels")]
    SingleClass,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("label must be +1 or -1, got {0}")]
    BadLabel(i8),
    #[error("dataset has no videos or no ground-truth events")]
    EmptyDataset,
    #[error("curve has no points")]
    EmptyCurve,
    #[error("no values to summarize")]
    Empty,
    #[error("{0}")]
    BadConfig(String),
    #[error(transparent)]
    Volume(#[from] crate::volume::VolumeError),
    #[error(transparent)]
    Sampling(#[from] crate::sampling::SamplingError),
    #[error(transparent)]
    Spot(#[from] crate::spotting::SpotError),
    #[error(transparent)]
    Classifier(#[from] crate::classifier::ClassifierError),
    #[error("table: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
