//! Linear SVM trained by seeded stochastic subgradient descent.
//!
//! Minimizes `λ/2 ‖w‖² + (1/N) Σ cᵢ max(0, 1 − yᵢ (w·xᵢ + b))` with the
//! Pegasos step size `1/(λ(t + t₀))`, `t₀ = ⌈1/λ⌉`. The bias is the weight of an implicit constant-1
//! feature and is not regularized. Samples are visited in a fresh seeded
//! permutation every epoch, so training is bit-reproducible.

use std::io::{self, Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::FeatureMatrix;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("dimension mismatch: model has {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("labels must be +1 or -1, found {0}")]
    BadLabel(i8),
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Hinge weight of positive samples; `None` uses `#neg / #pos` of the training set.
    pub class_weight_pos: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 10,
            seed: 0,
            class_weight_pos: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(ClassifierError::BadConfig(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.epochs == 0 {
            return Err(ClassifierError::BadConfig("epochs must be at least 1".into()));
        }
        if let Some(c) = self.class_weight_pos {
            if !(c.is_finite() && c > 0.0) {
                return Err(ClassifierError::BadConfig(format!(
                    "class weight must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f32>,
    pub bias: f32,
    /// Digest of the descriptor configuration the model was trained on.
    pub feature_digest: String,
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Decision value `w·x + b`.
    pub fn score(&self, x: &[f32]) -> Result<f64, ClassifierError> {
        if x.len() != self.weights.len() {
            return Err(ClassifierError::DimMismatch {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        Ok(self.score_unchecked(x))
    }

    #[inline]
    pub(crate) fn score_unchecked(&self, x: &[f32]) -> f64 {
        let dot: f64 = self.weights.iter().zip(x).map(|(&w, &v)| w as f64 * v as f64).sum();
        dot + self.bias as f64
    }

    /// `+1` iff the score reaches `threshold`.
    pub fn predict(&self, x: &[f32], threshold: f64) -> Result<i8, ClassifierError> {
        Ok(if self.score(x)? >= threshold { 1 } else { -1 })
    }
}

fn check_labels(labels: &[i8]) -> Result<(usize, usize), ClassifierError> {
    let mut pos = 0;
    for &y in labels {
        match y {
            1 => pos += 1,
            -1 => {}
            other => return Err(ClassifierError::BadLabel(other)),
        }
    }
    Ok((pos, labels.len() - pos))
}

/// Trains a linear SVM on the rows of `features`.
pub fn train(
    features: &FeatureMatrix,
    labels: &[i8],
    cfg: &TrainConfig,
    feature_digest: &str,
) -> Result<LinearModel, ClassifierError> {
    cfg.validate()?;
    let n = features.rows();
    if n == 0 {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    if labels.len() != n {
        return Err(ClassifierError::DimMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    let (pos, neg) = check_labels(labels)?;
    if pos == 0 || neg == 0 {
        return Err(ClassifierError::SingleClass);
    }
    let pos_weight = cfg.class_weight_pos.unwrap_or(neg as f64 / pos as f64);

    let d = features.dim();
    // w = scale * v keeps the per-step shrink O(1)
    let mut v = vec![0.0f64; d];
    let mut scale = 1.0f64;
    let mut bias = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    // offset keeps the first steps near 1 instead of 1/λ, which the unregularized bias cannot recover from
    let t0 = (1.0 / cfg.lambda).ceil();
    let mut t = 0u64;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (cfg.lambda * (t as f64 + t0));
            let x = features.row(i);
            let y = labels[i] as f64;
            let dot: f64 = v.iter().zip(x).map(|(&w, &xi)| w * xi as f64).sum();
            let margin = y * (scale * dot + bias);

            let shrink = 1.0 - eta * cfg.lambda;
            if shrink <= 0.0 {
                v.iter_mut().for_each(|w| *w = 0.0);
                scale = 1.0;
            } else {
                scale *= shrink;
            }

            if margin < 1.0 {
                let c = if y > 0.0 { pos_weight } else { 1.0 };
                let step = eta * c * y;
                let s = step / scale;
                for (w, &xi) in v.iter_mut().zip(x) {
                    *w += s * xi as f64;
                }
                bias += step;
            }

            if scale < 1e-9 {
                v.iter_mut().for_each(|w| *w *= scale);
                scale = 1.0;
            }
        }
    }

    Ok(LinearModel {
        weights: v.iter().map(|&w| (w * scale) as f32).collect(),
        bias: bias as f32,
        feature_digest: feature_digest.to_string(),
        lambda: cfg.lambda,
        epochs: cfg.epochs,
        seed: cfg.seed,
    })
}

/// Mean class-weighted hinge loss of `model` on a labeled set.
pub fn hinge_loss(
    model: &LinearModel,
    features: &FeatureMatrix,
    labels: &[i8],
    class_weight_pos: f64,
) -> Result<f64, ClassifierError> {
    if features.rows() == 0 {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    let mut total = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        let c = if y > 0 { class_weight_pos } else { 1.0 };
        total += c * (1.0 - y as f64 * model.score(x)?).max(0.0);
    }
    Ok(total / features.rows() as f64)
}

const MODEL_MAGIC: &[u8; 4] = b"LSV1";

/// Writes `LSV1`, `u32` dim, `u32` digest length, digest, `f64` lambda,
/// `u32` epochs, `u64` seed, `dim` `f32` weights and the `f32` bias (little-endian).
pub fn write_model(model: &LinearModel, mut out: impl Write) -> Result<(), ClassifierError> {
    out.write_all(MODEL_MAGIC)?;
    out.write_all(&(model.dim() as u32).to_le_bytes())?;
    out.write_all(&(model.feature_digest.len() as u32).to_le_bytes())?;
    out.write_all(model.feature_digest.as_bytes())?;
    out.write_all(&model.lambda.to_le_bytes())?;
    out.write_all(&(model.epochs as u32).to_le_bytes())?;
    out.write_all(&model.seed.to_le_bytes())?;
    for w in &model.weights {
        out.write_all(&w.to_le_bytes())?;
    }
    out.write_all(&model.bias.to_le_bytes())?;
    Ok(())
}

pub fn read_model(mut input: impl Read) -> Result<LinearModel, ClassifierError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut at = 0usize;
    let mut take = |n: usize| -> Result<&[u8], ClassifierError> {
        let s = bytes
            .get(at..at + n)
            .ok_or_else(|| ClassifierError::Format("truncated file".into()))?;
        at += n;
        Ok(s)
    };
    if take(4)? != MODEL_MAGIC {
        return Err(ClassifierError::Format("bad magic, expected LSV1".into()));
    }
    let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let digest_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let feature_digest = String::from_utf8(take(digest_len)?.to_vec())
        .map_err(|_| ClassifierError::Format("digest is not UTF-8".into()))?;
    let lambda = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let epochs = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
    let weights = take(dim * 4)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let bias = f32::from_le_bytes(take(4)?.try_into().unwrap());
    if at != bytes.len() {
        return Err(ClassifierError::Format(format!("{} trailing bytes", bytes.len() - at)));
    }
    Ok(LinearModel {
        weights,
        bias,
        feature_digest,
        lambda,
        epochs,
        seed,
    })
}
