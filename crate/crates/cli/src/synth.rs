//! Synthetic corpus with known event annotations.
//!
//! Each video is a static per-subject texture plus a slow global intensity
//! drift, per-pixel Gaussian noise and a few short localized events. An event
//! brightens a rectangular patch with a triangular rise and fall over its
//! interval.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use mespot::manifest::ManifestError;
use mespot::volume::{save_volume, VolumeError};
use mespot::{DatasetManifest, Interval, VideoRecord, VideoVolume};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.txt";
const MIN_EVENT_GAP: usize = 9;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_subjects: usize,
    /// Total videos, spread over subjects as evenly as possible.
    pub n_videos: usize,
    /// Videos forced to contain no event.
    pub non_event_videos: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Inclusive range of events per ordinary video.
    pub events_per_video: (usize, usize),
    /// Inclusive range of event lengths in frames; the most likely length is 9.
    pub event_length: (usize, usize),
    /// Peak intensity delta of an event.
    pub event_amplitude: (f64, f64),
    pub noise_sigma: f64,
    pub drift_amplitude: f64,
    pub fps: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 8,
            n_videos: 76,
            non_event_videos: 5,
            frames: 100,
            height: 32,
            width: 32,
            events_per_video: (1, 2),
            event_length: (5, 17),
            event_amplitude: (20.0, 40.0),
            noise_sigma: 4.0,
            drift_amplitude: 8.0,
            fps: 25.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::BadConfig(m));
        if self.n_subjects == 0 || self.n_videos < self.n_subjects {
            return bad(format!(
                "{} videos cannot cover {} subjects",
                self.n_videos, self.n_subjects
            ));
        }
        if self.non_event_videos > self.n_videos {
            return bad("more event-free videos than videos".into());
        }
        if self.height < 16 || self.width < 16 || self.frames == 0 {
            return bad(format!(
                "frames must be at least 16x16, got {}x{}",
                self.height, self.width
            ));
        }
        let (lmin, lmax) = self.event_length;
        if lmin < 2 || lmin > lmax || lmax > self.frames / 2 {
            return bad(format!(
                "event lengths {lmin}..={lmax} must lie in 2..={}",
                self.frames / 2
            ));
        }
        let (amin, amax) = self.event_amplitude;
        if !(amin > 0.0 && amin <= amax && amax <= 128.0) {
            return bad(format!("event amplitude {amin}..={amax} must lie in (0, 128]"));
        }
        if self.events_per_video.0 > self.events_per_video.1 {
            return bad("event count range is reversed".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) || !self.drift_amplitude.is_finite() {
            return bad("noise and drift must be finite and noise non-negative".into());
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        Ok(())
    }

    /// Videos per subject: the first `n_videos % n_subjects` subjects get one extra.
    pub fn videos_per_subject(&self) -> Vec<usize> {
        let base = self.n_videos / self.n_subjects;
        let extra = self.n_videos % self.n_subjects;
        (0..self.n_subjects).map(|s| base + usize::from(s < extra)).collect()
    }
}

fn sub_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Texture {
    comps: Vec<(f64, f64, f64, f64)>,
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let comps = (0..2)
            .map(|_| {
                (
                    rng.random_range(10.0..25.0),
                    rng.random_range(0.5..3.0),
                    rng.random_range(0.5..3.0),
                    rng.random_range(0.0..2.0 * PI),
                )
            })
            .collect();
        Self { comps }
    }

    fn at(&self, y: f64, x: f64) -> f64 {
        self.comps
            .iter()
            .map(|&(a, fy, fx, ph)| a * (2.0 * PI * (fy * y + fx * x) + ph).sin())
            .sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    interval: Interval,
    y0: usize,
    x0: usize,
    h: usize,
    w: usize,
    amplitude: f64,
}

fn length_weights(lmin: usize, lmax: usize) -> Vec<f64> {
    (lmin..=lmax)
        .map(|n| (10.0 - (n as f64 - 9.0).abs()).max(1.0))
        .collect()
}

fn place_events(cfg: &SynthConfig, count: usize, rng: &mut ChaCha8Rng) -> Vec<Event> {
    let (lmin, lmax) = cfg.event_length;
    let lengths = WeightedIndex::new(length_weights(lmin, lmax)).expect("positive weights");
    let (ph, pw) = ((cfg.height / 4).max(4), (cfg.width / 4).max(4));
    let mut events: Vec<Event> = Vec::new();
    let mut attempts = 0;
    while events.len() < count && attempts < 1000 {
        attempts += 1;
        let len = lmin + lengths.sample(rng);
        let onset = rng.random_range(0..=cfg.frames - len);
        let iv = Interval::with_len(onset, len);
        let clear = events.iter().all(|e| {
            iv.offset() + MIN_EVENT_GAP < e.interval.onset() || e.interval.offset() + MIN_EVENT_GAP < iv.onset()
        });
        if !clear {
            continue;
        }
        events.push(Event {
            interval: iv,
            y0: rng.random_range(cfg.height / 8..=cfg.height - cfg.height / 8 - ph),
            x0: rng.random_range(cfg.width / 8..=cfg.width - cfg.width / 8 - pw),
            h: ph,
            w: pw,
            amplitude: rng.random_range(cfg.event_amplitude.0..=cfg.event_amplitude.1),
        });
    }
    events.sort_by_key(|e| e.interval);
    events
}

/// Triangular profile peaking at the event centre and positive on every event frame.
fn profile(iv: Interval, t: usize) -> f64 {
    if !iv.contains(t) {
        return 0.0;
    }
    let centre = (iv.onset() + iv.offset()) as f64 / 2.0;
    let half = iv.len() as f64 / 2.0;
    1.0 - (t as f64 - centre).abs() / (half + 0.5)
}

fn render(
    cfg: &SynthConfig,
    texture: &Texture,
    events: &[Event],
    rng: &mut ChaCha8Rng,
) -> Result<VideoVolume, SynthError> {
    let (t_len, h, w) = (cfg.frames, cfg.height, cfg.width);
    let offset = rng.random_range(-10.0..10.0);
    let period = rng.random_range(t_len as f64 / 2.0..=t_len as f64 * 2.0);
    let phase = rng.random_range(0.0..2.0 * PI);
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| SynthError::BadConfig(e.to_string()))?;
    let still: Vec<f64> = (0..h * w)
        .map(|i| 128.0 + offset + texture.at((i / w) as f64 / h as f64, (i % w) as f64 / w as f64))
        .collect();
    let mut data = Vec::with_capacity(t_len * h * w);
    for t in 0..t_len {
        let drift = cfg.drift_amplitude * (2.0 * PI * t as f64 / period + phase).sin();
        let mut frame: Vec<f64> = still.iter().map(|v| v + drift).collect();
        for e in events {
            let p = profile(e.interval, t);
            if p > 0.0 {
                for y in e.y0..e.y0 + e.h {
                    for x in e.x0..e.x0 + e.w {
                        frame[y * w + x] += e.amplitude * p;
                    }
                }
            }
        }
        data.extend(
            frame
                .into_iter()
                .map(|v| (v + noise.sample(rng)).round().clamp(0.0, 255.0) as u8),
        );
    }
    Ok(VideoVolume::new(data, t_len, h, w, cfg.fps)?)
}

/// Indices (subject, video-within-subject) of the event-free videos: the last
/// video of each subject in turn, then the second to last, and so on.
fn event_free(per_subject: &[usize], k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut depth = 0;
    while out.len() < k {
        for (s, &n) in per_subject.iter().enumerate() {
            if out.len() < k && depth < n {
                out.push((s, n - 1 - depth));
            }
        }
        depth += 1;
    }
    out
}

/// Writes `videos/<id>.y8v` files and `manifest.txt` under `out_dir`.
pub fn generate_synthetic(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<DatasetManifest, SynthError> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir.join("videos"))?;
    let per_subject = cfg.videos_per_subject();
    let quiet = event_free(&per_subject, cfg.non_event_videos);
    let mut records = Vec::with_capacity(cfg.n_videos);
    let mut stream = 0u64;
    for (s, &n) in per_subject.iter().enumerate() {
        let texture = Texture::random(&mut sub_rng(cfg.seed, 1 << 32 | s as u64));
        let subject_id = format!("s{:02}", s + 1);
        for k in 0..n {
            let mut rng = sub_rng(cfg.seed, stream);
            stream += 1;
            let count = if quiet.contains(&(s, k)) {
                0
            } else {
                rng.random_range(cfg.events_per_video.0..=cfg.events_per_video.1)
            };
            let events = place_events(cfg, count, &mut rng);
            let volume = render(cfg, &texture, &events, &mut rng)?;
            let id = format!("{subject_id}_v{:02}", k + 1);
            let rel = PathBuf::from("videos").join(format!("{id}.y8v"));
            save_volume(&volume, out_dir.join(&rel))?;
            records.push(VideoRecord {
                id,
                subject_id: subject_id.clone(),
                path: rel,
                fps: cfg.fps,
                ground_truths: events.iter().map(|e| e.interval).collect(),
            });
        }
    }
    let manifest = DatasetManifest::new("synthetic", out_dir, records)?;
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mespot::load_volume;

    fn small() -> SynthConfig {
        SynthConfig {
            n_subjects: 3,
            n_videos: 7,
            non_event_videos: 2,
            frames: 60,
            height: 16,
            width: 16,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn default_corpus_shape() {
        let cfg = SynthConfig::default();
        assert_eq!(cfg.videos_per_subject(), vec![10, 10, 10, 10, 9, 9, 9, 9]);
        assert_eq!(cfg.videos_per_subject().iter().sum::<usize>(), 76);
        assert_eq!(
            event_free(&cfg.videos_per_subject(), 5),
            vec![(0, 9), (1, 9), (2, 9), (3, 9), (4, 8)]
        );
    }

    #[test]
    fn validation() {
        assert!(SynthConfig {
            event_length: (1, 5),
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            event_length: (5, 31),
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            event_amplitude: (0.0, 10.0),
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            event_amplitude: (10.0, 129.0),
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthConfig { n_videos: 2, ..small() }.validate().is_err());
        assert!(small().validate().is_ok());
    }

    #[test]
    fn length_mode_is_nine() {
        let w = length_weights(5, 17);
        let best = w.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(best + 5, 9);
    }

    #[test]
    fn profile_is_triangular() {
        let iv = Interval::new(10, 18).unwrap();
        assert_eq!(profile(iv, 9), 0.0);
        assert_eq!(profile(iv, 14), 1.0);
        assert!(profile(iv, 10) > 0.0 && profile(iv, 10) < profile(iv, 12));
        assert!((profile(iv, 12) - profile(iv, 16)).abs() < 1e-12);
    }

    #[test]
    fn corpus_is_deterministic_and_annotated() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let m = generate_synthetic(&small(), a.path()).unwrap();
        generate_synthetic(&small(), b.path()).unwrap();
        assert_eq!(m.records.len(), 7);
        assert_eq!(m.records.iter().filter(|r| r.ground_truths.is_empty()).count(), 2);
        for r in &m.records {
            let x = fs::read(a.path().join(&r.path)).unwrap();
            assert_eq!(x, fs::read(b.path().join(&r.path)).unwrap());
            assert_eq!(load_volume(a.path().join(&r.path)).unwrap().frames(), 60);
            r.validate(Some(60)).unwrap();
        }
        let text = fs::read_to_string(a.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(text, fs::read_to_string(b.path().join(MANIFEST_FILE)).unwrap());
        let reloaded = mespot::load_manifest(a.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(reloaded.records, m.records);
    }

    #[test]
    fn event_raises_patch_intensity() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            drift_amplitude: 0.0,
            non_event_videos: 0,
            events_per_video: (1, 1),
            ..small()
        };
        let dir = tempfile::tempdir().unwrap();
        let m = generate_synthetic(&cfg, dir.path()).unwrap();
        let r = &m.records[0];
        let v = load_volume(dir.path().join(&r.path)).unwrap();
        let gt = r.ground_truths[0];
        let apex = (gt.onset() + gt.offset()) / 2;
        let quiet = if gt.onset() > 0 { 0 } else { v.frames() - 1 };
        let diff: i32 = v
            .frame(apex)
            .iter()
            .zip(v.frame(quiet))
            .map(|(a, b)| (*a as i32 - *b as i32).abs())
            .sum();
        assert!(diff > 0);
    }
}
