//! Oriented-gradient histograms on the XY, XT and YT planes.
//!
//! Gradients are central differences `I(u+1) - I(u-1)` and `I(v+1) - I(v-1)`
//! along the two plane axes (time is the second axis of XT and YT).
//! Orientation `atan2(gv, gu)` is folded onto `[0, π)` and hard-binned into
//! `nbins` equal sectors. Only pixels with both neighbours inside the block vote.

use std::f64::consts::PI;

use super::grid::Block;
use super::{interior, plane_strides, DescriptorError, Plane};
use crate::volume::VolumeView;

/// Unsigned orientation bin of the gradient `(gu, gv)`.
#[inline]
pub fn orientation_bin(gu: i32, gv: i32, nbins: usize) -> usize {
    let mut theta = (gv as f64).atan2(gu as f64);
    if theta < 0.0 {
        theta += PI;
    }
    if theta >= PI {
        theta -= PI;
    }
    ((theta * nbins as f64 / PI) as usize).min(nbins - 1)
}

#[inline]
fn gradient_at(data: &[u8], idx: usize, su: usize, sv: usize) -> (i32, i32) {
    let gu = data[idx + su] as i32 - data[idx - su] as i32;
    let gv = data[idx + sv] as i32 - data[idx - sv] as i32;
    (gu, gv)
}

fn check_bins(nbins: usize) -> Result<(), DescriptorError> {
    if nbins == 0 || nbins > u8::MAX as usize {
        return Err(DescriptorError::BadConfig(format!("bin count {nbins} out of range")));
    }
    Ok(())
}

fn vote_block<F: FnMut(usize, usize, f64)>(
    view: &VolumeView<'_>,
    block: &Block,
    nbins: usize,
    mut vote: F,
) -> Result<(), DescriptorError> {
    check_bins(nbins)?;
    if !block.fits(view) {
        return Err(DescriptorError::BadConfig(format!(
            "block {block:?} exceeds the volume"
        )));
    }
    let data = view.data();
    for (pi, plane) in Plane::ALL.into_iter().enumerate() {
        let inner = interior(block, plane, 1)?;
        let (su, sv) = plane_strides(view, plane);
        let (su, sv) = (su as usize, sv as usize);
        for t in inner.t.clone() {
            for y in inner.y.clone() {
                let row = (t * view.height() + y) * view.width();
                for x in inner.x.clone() {
                    let (gu, gv) = gradient_at(data, row + x, su, sv);
                    if gu != 0 || gv != 0 {
                        let mag = ((gu * gu + gv * gv) as f64).sqrt();
                        vote(pi, orientation_bin(gu, gv, nbins), mag);
                    }
                }
            }
        }
    }
    Ok(())
}

/// Magnitude-weighted orientation histograms, concatenated XY, XT, YT.
pub fn hog_top_block(view: &VolumeView<'_>, block: &Block, nbins: usize) -> Result<Vec<f64>, DescriptorError> {
    let mut hist = vec![0.0; 3 * nbins];
    vote_block(view, block, nbins, |plane, bin, mag| hist[plane * nbins + bin] += mag)?;
    Ok(hist)
}

/// Orientation counts: every pixel with a nonzero gradient votes once.
pub fn higo_top_block(view: &VolumeView<'_>, block: &Block, nbins: usize) -> Result<Vec<u32>, DescriptorError> {
    let mut hist = vec![0u32; 3 * nbins];
    vote_block(view, block, nbins, |plane, bin, _| hist[plane * nbins + bin] += 1)?;
    Ok(hist)
}

/// Per-voxel orientation bins and magnitudes for each plane of a volume.
///
/// Zero-gradient voxels and voxels on the volume border (per plane) have
/// magnitude 0.
#[derive(Debug, Clone)]
pub struct GradientMaps {
    pub(crate) bins: [Vec<u8>; 3],
    pub(crate) magnitudes: [Vec<f64>; 3],
}

impl GradientMaps {
    pub fn compute(view: &VolumeView<'_>, nbins: usize) -> Result<Self, DescriptorError> {
        check_bins(nbins)?;
        let full = Block::full(view);
        let data = view.data();
        let mut bins: [Vec<u8>; 3] = Default::default();
        let mut magnitudes: [Vec<f64>; 3] = Default::default();
        for (pi, plane) in Plane::ALL.into_iter().enumerate() {
            let mut bin_map = vec![0u8; data.len()];
            let mut mag_map = vec![0.0f64; data.len()];
            if let Ok(inner) = interior(&full, plane, 1) {
                let (su, sv) = plane_strides(view, plane);
                let (su, sv) = (su as usize, sv as usize);
                for t in inner.t.clone() {
                    for y in inner.y.clone() {
                        let row = (t * view.height() + y) * view.width();
                        for x in inner.x.clone() {
                            let (gu, gv) = gradient_at(data, row + x, su, sv);
                            if gu != 0 || gv != 0 {
                                bin_map[row + x] = orientation_bin(gu, gv, nbins) as u8;
                                mag_map[row + x] = ((gu * gu + gv * gv) as f64).sqrt();
                            }
                        }
                    }
                }
            }
            bins[pi] = bin_map;
            magnitudes[pi] = mag_map;
        }
        Ok(Self { bins, magnitudes })
    }

    /// Accumulates a block's histogram into `out`; `weighted` selects HOG over HIGO voting.
    pub(crate) fn block_histogram(
        &self,
        view: &VolumeView<'_>,
        block: &Block,
        nbins: usize,
        weighted: bool,
        out: &mut [f64],
    ) -> Result<(), DescriptorError> {
        for (pi, plane) in Plane::ALL.into_iter().enumerate() {
            let inner = interior(block, plane, 1)?;
            let (bins, mags) = (&self.bins[pi], &self.magnitudes[pi]);
            let h = &mut out[pi * nbins..(pi + 1) * nbins];
            for t in inner.t.clone() {
                for y in inner.y.clone() {
                    let row = (t * view.height() + y) * view.width();
                    for i in row + inner.x.start..row + inner.x.end {
                        let m = mags[i];
                        if m != 0.0 {
                            h[bins[i] as usize] += if weighted { m } else { 1.0 };
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
