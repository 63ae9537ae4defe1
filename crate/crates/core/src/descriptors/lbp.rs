//! Local binary patterns on the XY, XT and YT planes.
//!
//! Neighbour `p` of a pixel at plane coordinates `(u, v)` sits at
//! `(u + R cos(2πp/P), v - R sin(2πp/P))` and is bilinearly interpolated;
//! bit `p` is set when the neighbour is at least as bright as the centre.
//! Interpolation runs in fixed point (16 fractional bits per axis) so the
//! comparison is exact and invariant to adding a constant to all pixels.

use super::grid::Block;
use super::{interior, plane_strides, DescriptorError, Plane};
use crate::volume::VolumeView;

const FRAC_BITS: u32 = 16;
const ONE: i64 = 1 << FRAC_BITS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Tap {
    pub du: isize,
    pub dv: isize,
    pub weight: i64,
}

/// Circular neighbourhood with precomputed interpolation taps.
#[derive(Debug, Clone)]
pub struct LbpSampler {
    neighbors: usize,
    radius: usize,
    taps: Vec<Vec<Tap>>,
}

impl LbpSampler {
    pub fn new(neighbors: usize, radius: usize) -> Result<Self, DescriptorError> {
        if !matches!(neighbors, 4 | 8) || radius == 0 {
            return Err(DescriptorError::BadConfig(format!(
                "LBP needs P in {{4, 8}} and R >= 1, got P={neighbors} R={radius}"
            )));
        }
        let taps = (0..neighbors)
            .map(|p| {
                let angle = 2.0 * std::f64::consts::PI * p as f64 / neighbors as f64;
                let qu = (radius as f64 * angle.cos() * ONE as f64).round() as i64;
                let qv = (-(radius as f64) * angle.sin() * ONE as f64).round() as i64;
                let (iu, fu) = (qu.div_euclid(ONE), qu.rem_euclid(ONE));
                let (iv, fv) = (qv.div_euclid(ONE), qv.rem_euclid(ONE));
                [
                    (0, 0, (ONE - fu) * (ONE - fv)),
                    (1, 0, fu * (ONE - fv)),
                    (0, 1, (ONE - fu) * fv),
                    (1, 1, fu * fv),
                ]
                .into_iter()
                .filter(|&(_, _, w)| w != 0)
                .map(|(a, b, weight)| Tap {
                    du: iu as isize + a,
                    dv: iv as isize + b,
                    weight,
                })
                .collect()
            })
            .collect();
        Ok(Self {
            neighbors,
            radius,
            taps,
        })
    }

    pub fn neighbors(&self) -> usize {
        self.neighbors
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn n_codes(&self) -> usize {
        1 << self.neighbors
    }

    /// Code of the pixel at flat index `idx`, stepping `su`/`sv` per unit along the plane axes.
    #[inline]
    pub(crate) fn code_at(&self, data: &[u8], idx: usize, su: isize, sv: isize) -> u8 {
        let centre = data[idx] as i64 * ONE * ONE;
        let mut code = 0u8;
        for (p, taps) in self.taps.iter().enumerate() {
            let mut value = 0i64;
            for tap in taps {
                let at = idx as isize + tap.du * su + tap.dv * sv;
                value += data[at as usize] as i64 * tap.weight;
            }
            if value >= centre {
                code |= 1 << p;
            }
        }
        code
    }
}

/// Per-plane LBP histograms of one block, concatenated XY, XT, YT.
///
/// Each plane contributes one code per pixel that has a full neighbour ring
/// inside the block.
pub fn lbp_top_block(
    view: &VolumeView<'_>,
    block: &Block,
    neighbors: usize,
    radius: usize,
) -> Result<Vec<u32>, DescriptorError> {
    let sampler = LbpSampler::new(neighbors, radius)?;
    lbp_top_block_with(view, block, &sampler)
}

pub(crate) fn lbp_top_block_with(
    view: &VolumeView<'_>,
    block: &Block,
    sampler: &LbpSampler,
) -> Result<Vec<u32>, DescriptorError> {
    if !block.fits(view) {
        return Err(DescriptorError::BadConfig(format!(
            "block {block:?} exceeds the volume"
        )));
    }
    let n_codes = sampler.n_codes();
    let mut hist = vec![0u32; 3 * n_codes];
    let data = view.data();
    for (pi, plane) in Plane::ALL.into_iter().enumerate() {
        let inner = interior(block, plane, sampler.radius)?;
        let (su, sv) = plane_strides(view, plane);
        let h = &mut hist[pi * n_codes..(pi + 1) * n_codes];
        for t in inner.t.clone() {
            for y in inner.y.clone() {
                let row = (t * view.height() + y) * view.width();
                for x in inner.x.clone() {
                    h[sampler.code_at(data, row + x, su, sv) as usize] += 1;
                }
            }
        }
    }
    Ok(hist)
}

/// LBP codes for every voxel of a volume, one map per plane.
///
/// Voxels without a full ring in the whole volume hold 0. A voxel interior to
/// a block is interior to the volume and its ring lies in the block, so block
/// histograms can be read off these maps.
#[derive(Debug, Clone)]
pub struct LbpMaps {
    pub(crate) codes: [Vec<u8>; 3],
}

impl LbpMaps {
    pub fn compute(view: &VolumeView<'_>, sampler: &LbpSampler) -> Self {
        let full = Block::full(view);
        let data = view.data();
        let codes = Plane::ALL.map(|plane| {
            let mut map = vec![0u8; data.len()];
            if let Ok(inner) = interior(&full, plane, sampler.radius) {
                let (su, sv) = plane_strides(view, plane);
                for t in inner.t.clone() {
                    for y in inner.y.clone() {
                        let row = (t * view.height() + y) * view.width();
                        for x in inner.x.clone() {
                            map[row + x] = sampler.code_at(data, row + x, su, sv);
                        }
                    }
                }
            }
            map
        });
        Self { codes }
    }

    /// Same histogram as [`lbp_top_block`] for a block of the mapped volume.
    pub(crate) fn block_histogram(
        &self,
        view: &VolumeView<'_>,
        block: &Block,
        sampler: &LbpSampler,
        out: &mut [f64],
    ) -> Result<(), DescriptorError> {
        let n_codes = sampler.n_codes();
        for (pi, plane) in Plane::ALL.into_iter().enumerate() {
            let inner = interior(block, plane, sampler.radius)?;
            let map = &self.codes[pi];
            let h = &mut out[pi * n_codes..(pi + 1) * n_codes];
            for t in inner.t.clone() {
                for y in inner.y.clone() {
                    let row = (t * view.height() + y) * view.width();
                    for &c in &map[row + inner.x.start..row + inner.x.end] {
                        h[c as usize] += 1.0;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_neighbours_need_no_interpolation() {
        let s = LbpSampler::new(4, 1).unwrap();
        let positions: Vec<Vec<(isize, isize)>> = s
            .taps
            .iter()
            .map(|t| t.iter().map(|t| (t.du, t.dv)).collect())
            .collect();
        assert_eq!(
            positions,
            vec![vec![(1, 0)], vec![(0, -1)], vec![(-1, 0)], vec![(0, 1)]]
        );
        assert!(s.taps.iter().flatten().all(|t| t.weight == ONE * ONE));
    }

    #[test]
    fn diagonal_weights_sum_to_one() {
        let s = LbpSampler::new(8, 1).unwrap();
        for taps in &s.taps {
            assert_eq!(taps.iter().map(|t| t.weight).sum::<i64>(), ONE * ONE);
        }
        assert_eq!(s.taps[1].len(), 4);
    }

    #[test]
    fn rejects_bad_neighbourhoods() {
        assert!(LbpSampler::new(6, 1).is_err());
        assert!(LbpSampler::new(8, 0).is_err());
    }

    #[test]
    fn constant_block_is_all_ones() {
        let data = vec![128u8; 5 * 6 * 7];
        let view = VolumeView::new(&data, 5, 6, 7);
        let h = lbp_top_block(&view, &Block::full(&view), 8, 1).unwrap();
        // interior pixel counts for XY, XT, YT
        assert_eq!(h[255], 5 * 4 * 5);
        assert_eq!(h[256 + 255], 3 * 6 * 5);
        assert_eq!(h[512 + 255], 3 * 4 * 7);
        assert_eq!(h.iter().sum::<u32>(), 100 + 90 + 84);
    }

    #[test]
    fn block_too_thin() {
        let data = vec![0u8; 2 * 8 * 8];
        let view = VolumeView::new(&data, 2, 8, 8);
        assert!(matches!(
            lbp_top_block(&view, &Block::full(&view), 8, 1),
            Err(DescriptorError::BlockTooSmall { .. })
        ));
    }
}
