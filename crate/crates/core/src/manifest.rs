//! Dataset manifests.
//!
//! One record per line:
//!
//! ```text
//! # id,subject_id,relative_path,fps,ground_truths
//! s01_v01,s01,s01_v01.y8v,25,10-18;40-52
//! s01_v02,s01,s01_v02.y8v,25,
//! ```
//!
//! Ground truths are `onset-offset` pairs (0-based, inclusive) separated by
//! `;`; the field may be empty. Paths are relative to the manifest's directory.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::interval::Interval;
use crate::volume::{self, VolumeError};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("manifest lists no videos")]
    NoRecords,
    #[error("duplicate video id {0:?}")]
    DuplicateId(String),
    #[error("video {id}: invalid ground truth {what}")]
    InvalidInterval { id: String, what: String },
    #[error("video {id}: {source}")]
    Volume {
        id: String,
        #[source]
        source: VolumeError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub id: String,
    pub subject_id: String,
    /// Location of the volume, relative to the manifest directory.
    pub path: PathBuf,
    pub fps: f64,
    /// Sorted by onset, pairwise disjoint.
    pub ground_truths: Vec<Interval>,
}

impl VideoRecord {
    /// Checks ordering and, when the frame count is known, bounds.
    pub fn validate(&self, frames: Option<usize>) -> Result<(), ManifestError> {
        let invalid = |what: String| ManifestError::InvalidInterval {
            id: self.id.clone(),
            what,
        };
        for pair in self.ground_truths.windows(2) {
            if pair[1].onset() <= pair[0].offset() {
                return Err(invalid(format!("{} overlaps or precedes {}", pair[1], pair[0])));
            }
        }
        if let Some(t) = frames {
            if let Some(gt) = self.ground_truths.iter().find(|gt| !gt.fits_within(t)) {
                return Err(invalid(format!("{gt} exceeds the last frame {}", t.saturating_sub(1))));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    /// Directory that record paths are resolved against.
    pub root: PathBuf,
    pub records: Vec<VideoRecord>,
}

impl DatasetManifest {
    pub fn new(
        name: impl Into<String>,
        root: impl Into<PathBuf>,
        records: Vec<VideoRecord>,
    ) -> Result<Self, ManifestError> {
        if records.is_empty() {
            return Err(ManifestError::NoRecords);
        }
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(ManifestError::DuplicateId(r.id.clone()));
            }
            r.validate(None)?;
        }
        Ok(Self {
            name: name.into(),
            root: root.into(),
            records,
        })
    }

    /// Distinct subject ids in order of first appearance.
    pub fn subjects(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .map(|r| r.subject_id.as_str())
            .filter(|s| seen.insert(*s))
            .collect()
    }

    pub fn record(&self, id: &str) -> Option<&VideoRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn volume_path(&self, record: &VideoRecord) -> PathBuf {
        self.root.join(&record.path)
    }

    pub fn total_ground_truths(&self) -> usize {
        self.records.iter().map(|r| r.ground_truths.len()).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# id,subject_id,relative_path,fps,ground_truths\n");
        for r in &self.records {
            let gts: Vec<String> = r
                .ground_truths
                .iter()
                .map(|g| format!("{}-{}", g.onset(), g.offset()))
                .collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.id,
                r.subject_id,
                r.path.display(),
                r.fps,
                gts.join(";")
            );
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ManifestError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn parse_interval(field: &str) -> Option<Interval> {
    let (a, b) = field.split_once('-')?;
    Interval::new(a.trim().parse().ok()?, b.trim().parse().ok()?)
}

/// Parses manifest text without touching the referenced volumes.
pub fn parse_manifest(text: &str, name: &str, root: impl Into<PathBuf>) -> Result<DatasetManifest, ManifestError> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| ManifestError::Parse { line: line_no, msg };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(err(format!(
                "expected 5 comma-separated fields, found {}",
                fields.len()
            )));
        }
        if fields[0].is_empty() || fields[1].is_empty() || fields[2].is_empty() {
            return Err(err("id, subject and path must be non-empty".into()));
        }
        let fps: f64 = fields[3].parse().map_err(|_| err(format!("bad fps {:?}", fields[3])))?;
        if !(fps.is_finite() && fps > 0.0) {
            return Err(err(format!("fps must be positive, got {fps}")));
        }
        let mut ground_truths = Vec::new();
        for g in fields[4].split(';').map(str::trim).filter(|g| !g.is_empty()) {
            match parse_interval(g) {
                Some(iv) => ground_truths.push(iv),
                None => {
                    return Err(ManifestError::InvalidInterval {
                        id: fields[0].to_string(),
                        what: format!("{g:?} is not onset-offset with onset <= offset"),
                    })
                }
            }
        }
        records.push(VideoRecord {
            id: fields[0].to_string(),
            subject_id: fields[1].to_string(),
            path: PathBuf::from(fields[2]),
            fps,
            ground_truths,
        });
    }
    DatasetManifest::new(name, root, records)
}

/// Reads a manifest and checks every ground truth against its volume length.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, ManifestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    let manifest = parse_manifest(&text, &name, root)?;
    for r in &manifest.records {
        let frames = volume::probe_frame_count(manifest.volume_path(r)).map_err(|source| ManifestError::Volume {
            id: r.id.clone(),
            source,
        })?;
        r.validate(Some(frames))?;
    }
    Ok(manifest)
}
