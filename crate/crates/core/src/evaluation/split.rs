//! Train/test partitioning for the two benchmark protocols.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EvalError;
use crate::manifest::DatasetManifest;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.5;
pub const DEFAULT_REPETITIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Protocol {
    /// Repeated random splits.
    Random {
        train_fraction: f64,
        repetitions: usize,
        seed: u64,
    },
    /// Leave one subject out.
    Loso,
}

impl Protocol {
    pub fn random(train_fraction: f64, repetitions: usize, seed: u64) -> Result<Self, EvalError> {
        check_fraction(train_fraction)?;
        if repetitions == 0 {
            return Err(EvalError::BadConfig("at least one repetition is needed".into()));
        }
        Ok(Protocol::Random {
            train_fraction,
            repetitions,
            seed,
        })
    }

    /// Short label used in summaries, e.g. `loso` or `random-0.3`.
    pub fn label(&self) -> String {
        match self {
            Protocol::Loso => "loso".into(),
            Protocol::Random { train_fraction, .. } => format!("random-{train_fraction}"),
        }
    }
}

/// Parses the protocol name only; `random` gets the default fraction and repetitions with seed 0.
impl FromStr for Protocol {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "loso" => Ok(Protocol::Loso),
            "random" => Protocol::random(DEFAULT_TRAIN_FRACTION, DEFAULT_REPETITIONS, 0),
            _ => Err(EvalError::BadConfig(format!(
                "protocol must be loso or random, got {s}"
            ))),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn check_fraction(f: f64) -> Result<(), EvalError> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(EvalError::BadConfig(format!(
            "train fraction must lie in (0, 1), got {f}"
        )))
    }
}

/// Seeded shuffle, then the first `floor(train_fraction * n)` items train.
pub fn split_random<T: Clone>(items: &[T], train_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>), EvalError> {
    let (train, test) = split_random_indices(items.len(), train_fraction, seed)?;
    Ok((
        train.iter().map(|&i| items[i].clone()).collect(),
        test.iter().map(|&i| items[i].clone()).collect(),
    ))
}

/// Index form of [`split_random`]; both halves come back in ascending order.
pub fn split_random_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    check_fraction(train_fraction)?;
    if n < 2 {
        return Err(EvalError::TooFewSamples(n));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * n as f64).floor() as usize;
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// A leave-one-subject-out fold; video indices refer to the manifest's records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub held_out_subject: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One fold per subject, in order of first appearance in the manifest.
pub fn split_loso(manifest: &DatasetManifest) -> Result<Vec<Fold>, EvalError> {
    let ids: Vec<&str> = manifest.records.iter().map(|r| r.subject_id.as_str()).collect();
    split_by_subject(&ids)
}

/// LOSO folds over videos given by their subject ids.
pub fn split_by_subject(subject_ids: &[&str]) -> Result<Vec<Fold>, EvalError> {
    let mut subjects: Vec<&str> = Vec::new();
    for s in subject_ids {
        if !subjects.contains(s) {
            subjects.push(s);
        }
    }
    if subjects.len() < 2 {
        return Err(EvalError::SingleSubject);
    }
    Ok(subjects
        .into_iter()
        .map(|s| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..subject_ids.len()).partition(|&i| subject_ids[i] == s);
            Fold {
                held_out_subject: s.to_string(),
                train,
                test,
            }
        })
        .collect())
}
