use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::DescriptorError;
use crate::volume::VolumeView;

/// Smallest block extent along any axis; the 3-sample stencils need a margin of one.
pub const MIN_BLOCK_EXTENT: usize = 3;

/// Overlapping `nx × ny × nt` division of a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockGrid {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub overlap: f64,
}

impl BlockGrid {
    pub fn new(nx: usize, ny: usize, nt: usize, overlap: f64) -> Result<Self, DescriptorError> {
        if nx == 0 || ny == 0 || nt == 0 {
            return Err(DescriptorError::BadConfig(format!(
                "block counts must be positive, got {nx}x{ny}x{nt}"
            )));
        }
        if !(0.0..1.0).contains(&overlap) {
            return Err(DescriptorError::BadConfig(format!(
                "overlap must lie in [0, 1), got {overlap}"
            )));
        }
        Ok(Self { nx, ny, nt, overlap })
    }

    /// Parses `8x8x4` (or `884`) as `nx × ny × nt`.
    pub fn parse_division(text: &str, overlap: f64) -> Result<Self, DescriptorError> {
        let parts: Vec<usize> = if text.contains(['x', 'X']) {
            text.split(['x', 'X'])
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|_| DescriptorError::BadConfig(format!("bad block division {text:?}")))
                })
                .collect::<Result<_, _>>()?
        } else {
            text.chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|d| d as usize)
                        .ok_or_else(|| DescriptorError::BadConfig(format!("bad block division {text:?}")))
                })
                .collect::<Result<_, _>>()?
        };
        match parts[..] {
            [nx, ny, nt] => Self::new(nx, ny, nt, overlap),
            _ => Err(DescriptorError::BadConfig(format!(
                "block division {text:?} needs three counts"
            ))),
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.nx * self.ny * self.nt
    }

    /// All blocks of a `frames × height × width` window, t-major then y then x.
    pub fn blocks(&self, frames: usize, height: usize, width: usize) -> Result<Vec<Block>, DescriptorError> {
        let ts = block_bounds(frames, self.nt, self.overlap)?;
        let ys = block_bounds(height, self.ny, self.overlap)?;
        let xs = block_bounds(width, self.nx, self.overlap)?;
        let mut out = Vec::with_capacity(self.n_blocks());
        for &(t0, t1) in &ts {
            for &(y0, y1) in &ys {
                for &(x0, x1) in &xs {
                    out.push(Block {
                        t: t0..t1 + 1,
                        y: y0..y1 + 1,
                        x: x0..x1 + 1,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// A cuboid of voxels, half-open along each axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub t: Range<usize>,
    pub y: Range<usize>,
    pub x: Range<usize>,
}

impl Block {
    pub fn full(view: &VolumeView<'_>) -> Self {
        Self {
            t: 0..view.frames(),
            y: 0..view.height(),
            x: 0..view.width(),
        }
    }

    pub fn shifted_in_time(&self, dt: usize) -> Self {
        Self {
            t: self.t.start + dt..self.t.end + dt,
            ..self.clone()
        }
    }

    pub fn extents(&self) -> (usize, usize, usize) {
        (self.t.len(), self.y.len(), self.x.len())
    }

    pub(crate) fn fits(&self, view: &VolumeView<'_>) -> bool {
        self.t.end <= view.frames() && self.y.end <= view.height() && self.x.end <= view.width()
    }
}

/// Inclusive `(start, end)` ranges of `n_blocks` overlapping blocks along one axis.
///
/// Block size is `ceil(extent / (n - overlap * (n - 1)))` and consecutive blocks
/// start `size - round(overlap * size)` apart; a block that would run past the
/// end is moved back to finish on the last sample. If rounding would leave the
/// end of the axis uncovered, the stride is widened to reach it.
pub fn block_bounds(extent: usize, n_blocks: usize, overlap: f64) -> Result<Vec<(usize, usize)>, DescriptorError> {
    if n_blocks == 0 || !(0.0..1.0).contains(&overlap) {
        return Err(DescriptorError::BadConfig(format!(
            "{n_blocks} blocks with overlap {overlap}"
        )));
    }
    let span = n_blocks as f64 - overlap * (n_blocks - 1) as f64;
    // absorb representation error so exact quotients do not round up
    let size = ((extent as f64 / span) - 1e-9).ceil().max(0.0) as usize;
    if size < MIN_BLOCK_EXTENT || size > extent {
        return Err(DescriptorError::ExtentTooSmall {
            extent,
            n_blocks,
            block: size,
        });
    }
    let mut stride = (size - (overlap * size as f64).round() as usize).max(1);
    if n_blocks > 1 && (n_blocks - 1) * stride + size < extent {
        // rounding left the tail uncovered; spread the blocks just enough to reach it
        stride = (extent - size).div_ceil(n_blocks - 1);
    }
    Ok((0..n_blocks)
        .map(|i| {
            let start = if i + 1 == n_blocks {
                extent - size
            } else {
                (i * stride).min(extent - size)
            };
            (start, start + size - 1)
        })
        .collect())
}
