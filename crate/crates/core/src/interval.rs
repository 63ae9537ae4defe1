//! Inclusive frame intervals.

use std::fmt;

use serde::{Deserialize, Serialize};

/// An inclusive `[onset, offset]` range of 0-based frame indices.
///
/// Used for ground-truth annotations, scanning windows and detections alike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interval {
    onset: usize,
    offset: usize,
}

impl Interval {
    /// Returns `None` when `onset > offset`.
    pub fn new(onset: usize, offset: usize) -> Option<Self> {
        (onset <= offset).then_some(Self { onset, offset })
    }

    /// Interval of `len` frames starting at `onset`. `len` must be positive.
    pub fn with_len(onset: usize, len: usize) -> Self {
        assert!(len >= 1, "interval length must be positive");
        Self {
            onset,
            offset: onset + len - 1,
        }
    }

    pub fn onset(&self) -> usize {
        self.onset
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Number of frames covered, always at least one.
    pub fn len(&self) -> usize {
        self.offset - self.onset + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Frames shared by both intervals.
    pub fn intersection_len(&self, other: &Interval) -> usize {
        let lo = self.onset.max(other.onset);
        let hi = self.offset.min(other.offset);
        if lo > hi {
            0
        } else {
            hi - lo + 1
        }
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.onset <= frame && frame <= self.offset
    }

    /// True if the whole interval lies inside `[0, len - 1]`.
    pub fn fits_within(&self, len: usize) -> bool {
        self.offset < len
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.onset, self.offset)
    }
}
