//! Spatio-temporal window descriptors: LBP-TOP, HOG-TOP and HIGO-TOP.
//!
//! A window is divided into an overlapping block grid. Every block yields one
//! histogram per orthogonal plane (XY, XT, YT), each optionally normalized,
//! and the histograms are concatenated block-major (t, then y, then x) with
//! the plane order XY, XT, YT inside each block.
//!
//! Extraction goes through per-voxel maps ([`DescriptorMaps`]) computed once
//! per volume; sliding windows then only re-count histograms.

mod gradient;
mod grid;
mod lbp;

use std::fmt;
use std::io::{self, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use gradient::{higo_top_block, hog_top_block, orientation_bin, GradientMaps};
pub use grid::{block_bounds, Block, BlockGrid, MIN_BLOCK_EXTENT};
pub use lbp::{lbp_top_block, LbpMaps, LbpSampler};

use crate::volume::{VideoVolume, VolumeView};

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("{n_blocks} blocks over {extent} samples gives blocks of {block}, need at least {MIN_BLOCK_EXTENT}")]
    ExtentTooSmall {
        extent: usize,
        n_blocks: usize,
        block: usize,
    },
    #[error("block of {extents:?} (t, y, x) is too small for a {plane} stencil of radius {radius}")]
    BlockTooSmall {
        extents: (usize, usize, usize),
        plane: Plane,
        radius: usize,
    },
    #[error("invalid descriptor configuration: {0}")]
    BadConfig(String),
    #[error("window {start}+{len} exceeds the {frames}-frame volume")]
    WindowOutOfRange { start: usize, len: usize, frames: usize },
    #[error("feature cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plane {
    Xy,
    Xt,
    Yt,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Xy, Plane::Xt, Plane::Yt];
}

impl fmt::Display for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Plane::Xy => "XY",
            Plane::Xt => "XT",
            Plane::Yt => "YT",
        })
    }
}

/// Flat-index steps along the (u, v) axes of a plane.
pub(crate) fn plane_strides(view: &VolumeView<'_>, plane: Plane) -> (isize, isize) {
    let (w, hw) = (view.width() as isize, (view.height() * view.width()) as isize);
    match plane {
        Plane::Xy => (1, w),
        Plane::Xt => (1, hw),
        Plane::Yt => (w, hw),
    }
}

/// Voxels of `block` whose in-plane stencil of `radius` stays inside the block.
pub(crate) fn interior(block: &Block, plane: Plane, radius: usize) -> Result<Block, DescriptorError> {
    let shrink = |r: &std::ops::Range<usize>| (r.len() > 2 * radius).then(|| r.start + radius..r.end - radius);
    let (t, y, x) = match plane {
        Plane::Xy => (Some(block.t.clone()), shrink(&block.y), shrink(&block.x)),
        Plane::Xt => (shrink(&block.t), Some(block.y.clone()), shrink(&block.x)),
        Plane::Yt => (shrink(&block.t), shrink(&block.y), Some(block.x.clone())),
    };
    match (t, y, x) {
        (Some(t), Some(y), Some(x)) => Ok(Block { t, y, x }),
        _ => Err(DescriptorError::BlockTooSmall {
            extents: block.extents(),
            plane,
            radius,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DescriptorKind {
    LbpTop,
    HogTop,
    HigoTop,
}

impl DescriptorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::LbpTop => "lbp-top",
            Self::HogTop => "hog-top",
            Self::HigoTop => "higo-top",
        }
    }
}

impl FromStr for DescriptorKind {
    type Err = DescriptorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "lbp-top" | "lbptop" | "lbp" => Ok(Self::LbpTop),
            "hog-top" | "hogtop" | "hog" => Ok(Self::HogTop),
            "higo-top" | "higotop" | "higo" => Ok(Self::HigoTop),
            _ => Err(DescriptorError::BadConfig(format!("unknown descriptor {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum BlockNorm {
    None,
    #[default]
    L1,
    L2,
}

impl FromStr for BlockNorm {
    type Err = DescriptorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "l1" => Ok(Self::L1),
            "l2" => Ok(Self::L2),
            _ => Err(DescriptorError::BadConfig(format!("unknown block norm {s:?}"))),
        }
    }
}

pub const ALLOWED_BINS: [usize; 3] = [8, 12, 16];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorConfig {
    pub kind: DescriptorKind,
    pub grid: BlockGrid,
    /// Orientation bins for HOG-TOP and HIGO-TOP; ignored by LBP-TOP.
    pub nbins: usize,
    pub lbp_neighbors: usize,
    pub lbp_radius: usize,
    pub block_norm: BlockNorm,
}

impl DescriptorConfig {
    pub fn lbp_top(grid: BlockGrid) -> Self {
        Self {
            kind: DescriptorKind::LbpTop,
            grid,
            nbins: 0,
            lbp_neighbors: 8,
            lbp_radius: 1,
            block_norm: BlockNorm::L1,
        }
    }

    pub fn hog_top(grid: BlockGrid, nbins: usize) -> Self {
        Self {
            kind: DescriptorKind::HogTop,
            nbins,
            ..Self::lbp_top(grid)
        }
    }

    pub fn higo_top(grid: BlockGrid, nbins: usize) -> Self {
        Self {
            kind: DescriptorKind::HigoTop,
            nbins,
            ..Self::lbp_top(grid)
        }
    }

    pub fn new(kind: DescriptorKind, grid: BlockGrid, nbins: usize) -> Result<Self, DescriptorError> {
        let cfg = match kind {
            DescriptorKind::LbpTop => Self::lbp_top(grid),
            DescriptorKind::HogTop => Self::hog_top(grid, nbins),
            DescriptorKind::HigoTop => Self::higo_top(grid, nbins),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DescriptorError> {
        BlockGrid::new(self.grid.nx, self.grid.ny, self.grid.nt, self.grid.overlap)?;
        match self.kind {
            DescriptorKind::LbpTop => LbpSampler::new(self.lbp_neighbors, self.lbp_radius).map(|_| ()),
            _ if ALLOWED_BINS.contains(&self.nbins) => Ok(()),
            _ => Err(DescriptorError::BadConfig(format!(
                "bin count must be one of {ALLOWED_BINS:?}, got {}",
                self.nbins
            ))),
        }
    }

    pub fn bins_per_plane(&self) -> usize {
        match self.kind {
            DescriptorKind::LbpTop => 1 << self.lbp_neighbors,
            _ => self.nbins,
        }
    }

    pub fn block_dim(&self) -> usize {
        3 * self.bins_per_plane()
    }

    pub fn dim(&self) -> usize {
        self.grid.n_blocks() * self.block_dim()
    }

    /// Conventional short name, e.g. `higo-top-bl884-ol02-nb8` or `lbp-top-bl664-ol05`.
    pub fn name(&self) -> String {
        let g = &self.grid;
        let ol = format!("{}", g.overlap).replace('.', "");
        let mut name = format!("{}-bl{}{}{}-ol{}", self.kind.as_str(), g.nx, g.ny, g.nt, ol);
        if self.kind != DescriptorKind::LbpTop {
            name.push_str(&format!("-nb{}", self.nbins));
        }
        name
    }

    fn canonical(&self) -> String {
        let g = &self.grid;
        format!(
            "{}|{}x{}x{}|{:?}|{}|{}|{}|{:?}",
            self.kind.as_str(),
            g.nx,
            g.ny,
            g.nt,
            g.overlap.to_bits(),
            self.bins_per_plane(),
            self.lbp_neighbors,
            self.lbp_radius,
            self.block_norm
        )
    }

    /// Short hash identifying every setting that changes feature values.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.canonical().as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Display for DescriptorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Dense descriptor of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f32>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Row-major matrix of feature vectors sharing one dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn from_rows(dim: usize, data: Vec<f32>) -> Result<Self, DescriptorError> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(DescriptorError::BadConfig(format!(
                "{} values do not form rows of {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, row: &[f32]) {
        assert_eq!(row.len(), self.dim, "row dimension mismatch");
        self.data.extend_from_slice(row);
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

#[derive(Debug, Clone)]
enum MapData {
    Lbp(LbpSampler, LbpMaps),
    Gradient(GradientMaps),
}

/// Precomputed per-voxel descriptor responses of one volume.
#[derive(Debug, Clone)]
pub struct DescriptorMaps<'a> {
    view: VolumeView<'a>,
    cfg: DescriptorConfig,
    data: MapData,
}

impl<'a> DescriptorMaps<'a> {
    pub fn compute(view: VolumeView<'a>, cfg: &DescriptorConfig) -> Result<Self, DescriptorError> {
        cfg.validate()?;
        let data = match cfg.kind {
            DescriptorKind::LbpTop => {
                let sampler = LbpSampler::new(cfg.lbp_neighbors, cfg.lbp_radius)?;
                let maps = LbpMaps::compute(&view, &sampler);
                MapData::Lbp(sampler, maps)
            }
            _ => MapData::Gradient(GradientMaps::compute(&view, cfg.nbins)?),
        };
        Ok(Self { view, cfg: *cfg, data })
    }

    pub fn frames(&self) -> usize {
        self.view.frames()
    }

    /// Descriptor of the `len`-frame window starting at frame `start`.
    pub fn extract_window(&self, start: usize, len: usize) -> Result<FeatureVector, DescriptorError> {
        let blocks = self.window_blocks(len)?;
        let mut values = vec![0.0f32; self.cfg.dim()];
        self.extract_into(start, len, &blocks, &mut values)?;
        Ok(FeatureVector { values })
    }

    /// Block layout of a `len`-frame window, reusable across [`Self::extract_into`] calls.
    pub fn window_blocks(&self, len: usize) -> Result<Vec<Block>, DescriptorError> {
        self.cfg.grid.blocks(len, self.view.height(), self.view.width())
    }

    pub fn extract_into(
        &self,
        start: usize,
        len: usize,
        blocks: &[Block],
        out: &mut [f32],
    ) -> Result<(), DescriptorError> {
        if start + len > self.view.frames() {
            return Err(DescriptorError::WindowOutOfRange {
                start,
                len,
                frames: self.view.frames(),
            });
        }
        let bins = self.cfg.bins_per_plane();
        let block_dim = self.cfg.block_dim();
        assert_eq!(
            out.len(),
            blocks.len() * block_dim,
            "output buffer has the wrong length"
        );
        let mut hist = vec![0.0f64; block_dim];
        for (block, chunk) in blocks.iter().zip(out.chunks_exact_mut(block_dim)) {
            hist.iter_mut().for_each(|h| *h = 0.0);
            let block = block.shifted_in_time(start);
            match &self.data {
                MapData::Lbp(sampler, maps) => maps.block_histogram(&self.view, &block, sampler, &mut hist)?,
                MapData::Gradient(maps) => maps.block_histogram(
                    &self.view,
                    &block,
                    bins,
                    self.cfg.kind == DescriptorKind::HogTop,
                    &mut hist,
                )?,
            }
            for plane in hist.chunks_exact_mut(bins) {
                normalize(plane, self.cfg.block_norm);
            }
            for (o, h) in chunk.iter_mut().zip(&hist) {
                *o = *h as f32;
            }
        }
        Ok(())
    }
}

fn normalize(hist: &mut [f64], norm: BlockNorm) {
    let scale = match norm {
        BlockNorm::None => return,
        BlockNorm::L1 => hist.iter().sum::<f64>(),
        BlockNorm::L2 => hist.iter().map(|v| v * v).sum::<f64>().sqrt(),
    };
    if scale > 0.0 {
        hist.iter_mut().for_each(|v| *v /= scale);
    }
}

/// Descriptor of a whole window volume.
pub fn extract(window: &VideoVolume, cfg: &DescriptorConfig) -> Result<FeatureVector, DescriptorError> {
    extract_view(window.view(), cfg)
}

pub fn extract_view(view: VolumeView<'_>, cfg: &DescriptorConfig) -> Result<FeatureVector, DescriptorError> {
    DescriptorMaps::compute(view, cfg)?.extract_window(0, view.frames())
}

const CACHE_MAGIC: &[u8; 4] = b"FCH1";

/// Writes `FCH1`, `u32` digest length, digest bytes, `u32` dim, `u64` rows, then rows of `f32` (all little-endian).
pub fn write_feature_cache(digest: &str, features: &FeatureMatrix, mut out: impl Write) -> Result<(), DescriptorError> {
    out.write_all(CACHE_MAGIC)?;
    out.write_all(&(digest.len() as u32).to_le_bytes())?;
    out.write_all(digest.as_bytes())?;
    out.write_all(&(features.dim() as u32).to_le_bytes())?;
    out.write_all(&(features.rows() as u64).to_le_bytes())?;
    for v in features.as_slice() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a cache, rejecting it unless its digest equals `expected_digest` (when given).
pub fn read_feature_cache(
    mut input: impl Read,
    expected_digest: Option<&str>,
) -> Result<(String, FeatureMatrix), DescriptorError> {
    let mut buf4 = [0u8; 4];
    input.read_exact(&mut buf4)?;
    if &buf4 != CACHE_MAGIC {
        return Err(DescriptorError::Cache("bad magic, expected FCH1".into()));
    }
    input.read_exact(&mut buf4)?;
    let digest_len = u32::from_le_bytes(buf4) as usize;
    if digest_len > 1024 {
        return Err(DescriptorError::Cache(format!(
            "implausible digest length {digest_len}"
        )));
    }
    let mut digest = vec![0u8; digest_len];
    input.read_exact(&mut digest)?;
    let digest = String::from_utf8(digest).map_err(|_| DescriptorError::Cache("digest is not UTF-8".into()))?;
    if let Some(expected) = expected_digest {
        if expected != digest {
            return Err(DescriptorError::Cache(format!(
                "digest {digest} does not match configuration {expected}"
            )));
        }
    }
    input.read_exact(&mut buf4)?;
    let dim = u32::from_le_bytes(buf4) as usize;
    let mut buf8 = [0u8; 8];
    input.read_exact(&mut buf8)?;
    let rows = u64::from_le_bytes(buf8) as usize;
    let mut raw = Vec::new();
    input.read_to_end(&mut raw)?;
    if raw.len() != rows * dim * 4 {
        return Err(DescriptorError::Cache(format!(
            "expected {rows}x{dim} floats, found {} bytes",
            raw.len()
        )));
    }
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let matrix = if dim == 0 {
        FeatureMatrix::new(0)
    } else {
        FeatureMatrix::from_rows(dim, data)?
    };
    Ok((digest, matrix))
}
