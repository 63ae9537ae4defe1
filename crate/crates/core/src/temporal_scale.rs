//! Multi-scale temporal analysis.
//!
//! A video is resampled in time to several lengths so that a fixed-length
//! scanning window covers events of different durations. Two resamplers are
//! provided:
//!
//! * `Linear` blends the two bracketing input frames.
//! * `Tim` is the temporal interpolation model: the frame sequence is
//!   embedded with the Laplacian eigenvectors of a path graph, whose
//!   continuous extension `y_k(u) = sin(pi*k*u + pi*(n-k)/(2n))` is then
//!   sampled at equispaced points of the curve parameter `u` in `[1/n, 1]`.
//!
//! Detections found at a scale are mapped back onto the source time base
//! with [`map_to_original`].

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::Interval;
use crate::volume::VideoVolume;

pub const DEFAULT_FACTORS: [f64; 5] = [0.5, 0.75, 1.0, 1.5, 2.0];

#[derive(Debug, Error, PartialEq)]
pub enum ScaleError {
    #[error("temporal resampling needs at least 2 frames, volume has {0}")]
    DegenerateVolume(usize),
    #[error("target length must be at least 2, got {0}")]
    BadTarget(usize),
    #[error("invalid scale factors: {0}")]
    BadFactors(String),
    #[error("interval {interval} lies outside a {len}-frame sequence")]
    OutOfRange { interval: Interval, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Tim,
    Linear,
}

impl FromStr for Interpolation {
    type Err = ScaleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tim" => Ok(Self::Tim),
            "linear" => Ok(Self::Linear),
            other => Err(ScaleError::BadFactors(format!("unknown interpolation {other:?}"))),
        }
    }
}

impl fmt::Display for Interpolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Tim => "tim",
            Self::Linear => "linear",
        })
    }
}

/// Temporal scale factors to scan, always including the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpec {
    factors: Vec<f64>,
    pub method: Interpolation,
}

impl ScaleSpec {
    /// Sorts and deduplicates `factors`; all must be positive and 1.0 must be present.
    pub fn new(mut factors: Vec<f64>, method: Interpolation) -> Result<Self, ScaleError> {
        if let Some(bad) = factors.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
            return Err(ScaleError::BadFactors(format!("{bad} is not a positive factor")));
        }
        factors.sort_by(f64::total_cmp);
        factors.dedup();
        if !factors.contains(&1.0) {
            return Err(ScaleError::BadFactors("the identity scale 1.0 must be included".into()));
        }
        Ok(Self { factors, method })
    }

    pub fn identity(method: Interpolation) -> Self {
        Self {
            factors: vec![1.0],
            method,
        }
    }

    /// Parses a comma-separated list such as `0.5,1.0,2.0`.
    pub fn parse(list: &str, method: Interpolation) -> Result<Self, ScaleError> {
        let factors = list
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| ScaleError::BadFactors(format!("{f:?} is not a number")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(factors, method)
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }
}

impl Default for ScaleSpec {
    fn default() -> Self {
        Self {
            factors: DEFAULT_FACTORS.to_vec(),
            method: Interpolation::Tim,
        }
    }
}

/// Length of a sequence of `source_len` frames rescaled by `factor`.
pub fn scaled_len(factor: f64, source_len: usize) -> usize {
    ((factor * source_len as f64).round() as usize).max(2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledVolume {
    pub volume: VideoVolume,
    pub factor: f64,
    pub source_len: usize,
}

impl ScaledVolume {
    pub fn len(&self) -> usize {
        self.volume.frames()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_original(&self, iv: Interval) -> Result<Interval, ScaleError> {
        map_to_original(iv, self.source_len, self.len())
    }

    pub fn from_original(&self, iv: Interval) -> Result<Interval, ScaleError> {
        map_to_scaled(iv, self.source_len, self.len())
    }
}

/// `round(num / den)` with halves rounded up, for non-negative operands.
fn round_ratio(num: usize, den: usize) -> usize {
    (2 * num + den) / (2 * den)
}

fn remap(iv: Interval, from_len: usize, to_len: usize) -> Result<Interval, ScaleError> {
    if !iv.fits_within(from_len) {
        return Err(ScaleError::OutOfRange {
            interval: iv,
            len: from_len,
        });
    }
    if from_len < 2 {
        return Err(ScaleError::DegenerateVolume(from_len));
    }
    if to_len < 2 {
        return Err(ScaleError::DegenerateVolume(to_len));
    }
    let map = |f: usize| round_ratio(f * (to_len - 1), from_len - 1).min(to_len - 1);
    Ok(Interval::new(map(iv.onset()), map(iv.offset())).expect("frame map is monotone"))
}

/// Maps an interval from a `scaled_len`-frame sequence back to its `source_len`-frame original.
///
/// Frame `f` goes to `round(f * (source_len - 1) / (scaled_len - 1))`, so the
/// first and last frames are fixed points.
pub fn map_to_original(iv: Interval, source_len: usize, scaled_len: usize) -> Result<Interval, ScaleError> {
    remap(iv, scaled_len, source_len)
}

/// Inverse of [`map_to_original`] under the same rounding rule.
pub fn map_to_scaled(iv: Interval, source_len: usize, scaled_len: usize) -> Result<Interval, ScaleError> {
    remap(iv, source_len, scaled_len)
}

/// Resamples `v` in time to exactly `target_len` frames.
pub fn resample_temporal(v: &VideoVolume, target_len: usize, method: Interpolation) -> Result<VideoVolume, ScaleError> {
    if v.frames() < 2 {
        return Err(ScaleError::DegenerateVolume(v.frames()));
    }
    if target_len < 2 {
        return Err(ScaleError::BadTarget(target_len));
    }
    let data = match method {
        Interpolation::Linear => resample_linear(v, target_len),
        Interpolation::Tim => resample_tim(v, target_len),
    };
    Ok(VideoVolume::new(data, target_len, v.height(), v.width(), v.fps()).expect("dimensions preserved"))
}

fn to_u8(x: f64) -> u8 {
    x.round().clamp(0.0, 255.0) as u8
}

fn resample_linear(v: &VideoVolume, target_len: usize) -> Vec<u8> {
    let n = v.frames();
    let span = target_len - 1;
    let mut out = Vec::with_capacity(target_len * v.frame_len());
    for j in 0..target_len {
        // source position j * (n - 1) / (target_len - 1), kept rational
        let num = j * (n - 1);
        let (i0, rem) = (num / span, num % span);
        if rem == 0 {
            out.extend_from_slice(v.frame(i0));
            continue;
        }
        let frac = rem as f64 / span as f64;
        let (a, b) = (v.frame(i0), v.frame(i0 + 1));
        out.extend(a.iter().zip(b).map(|(&a, &b)| {
            let a = a as f64;
            to_u8(a + frac * (b as f64 - a))
        }));
    }
    out
}

/// `n × m` matrix taking centred input frames to output frames.
fn tim_weights(n: usize, m: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    let nf = n as f64;
    let eig = |k: usize, u: f64| (PI * k as f64 * u + PI * (nf - k as f64) / (2.0 * nf)).sin();

    // Sample points u_j equispaced over [1/n, 1]; u = t/n reproduces input frame t.
    let samples: Vec<f64> = (0..m)
        .map(|j| 1.0 / nf + j as f64 * (1.0 - 1.0 / nf) / (m - 1) as f64)
        .collect();

    let mut weights = vec![0.0; n * m];
    for k in 1..n {
        let basis: Vec<f64> = (1..=n).map(|t| eig(k, t as f64 / nf)).collect();
        let norm2: f64 = basis.iter().map(|y| y * y).sum();
        let resampled: Vec<f64> = samples.iter().map(|&u| eig(k, u)).collect();
        for (t, yt) in basis.iter().enumerate() {
            let row = &mut weights[t * m..(t + 1) * m];
            let c = yt / norm2;
            for (w, yu) in row.iter_mut().zip(&resampled) {
                *w += c * yu;
            }
        }
    }
    weights
}

fn resample_tim(v: &VideoVolume, target_len: usize) -> Vec<u8> {
    let n = v.frames();
    let px = v.frame_len();
    let weights = tim_weights(n, target_len);

    let mut mean = vec![0.0f64; px];
    for t in 0..n {
        for (m, &p) in mean.iter_mut().zip(v.frame(t)) {
            *m += p as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centred: Vec<Vec<f64>> = (0..n)
        .map(|t| v.frame(t).iter().zip(&mean).map(|(&p, m)| p as f64 - m).collect())
        .collect();

    let mut out = Vec::with_capacity(target_len * px);
    let mut acc = vec![0.0f64; px];
    for j in 0..target_len {
        acc.copy_from_slice(&mean);
        for (t, frame) in centred.iter().enumerate() {
            let w = weights[t * target_len + j];
            for (a, c) in acc.iter_mut().zip(frame) {
                *a += w * c;
            }
        }
        out.extend(acc.iter().map(|&a| to_u8(a)));
    }
    out
}

/// Resamples `v` once per factor of `spec`, in factor order.
pub fn build_pyramid(v: &VideoVolume, spec: &ScaleSpec) -> Result<Vec<ScaledVolume>, ScaleError> {
    if v.frames() < 2 {
        return Err(ScaleError::DegenerateVolume(v.frames()));
    }
    spec.factors
        .par_iter()
        .map(|&factor| {
            let len = scaled_len(factor, v.frames());
            let volume = if len == v.frames() {
                v.clone()
            } else {
                resample_temporal(v, len, spec.method)?
            };
            Ok(ScaledVolume {
                volume,
                factor,
                source_len: v.frames(),
            })
        })
        .collect()
}
