//! Grayscale video volumes and their on-disk formats.
//!
//! A volume is stored frame-major (`T × H × W`), one byte per pixel. Two
//! sources are supported: a directory of image files read in lexicographic
//! order, or a single `.y8v` raw file (16-byte little-endian header `Y8V1`,
//! `u32 T`, `u32 H`, `u32 W`, followed by the pixel payload).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Smallest accepted frame height and width.
pub const MIN_FRAME_SIDE: usize = 16;

/// Frame rate assumed when the source does not carry one.
pub const DEFAULT_FPS: f64 = 25.0;

const Y8V_MAGIC: &[u8; 4] = b"Y8V1";
const Y8V_HEADER_LEN: usize = 16;
const FRAME_EXTENSIONS: &[&str] = &["pgm", "pnm", "ppm", "pbm", "png", "bmp"];

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("no such file or directory: {0}")]
    MissingPath(PathBuf),
    #[error("frame {index} is {got_h}x{got_w}, expected {want_h}x{want_w}")]
    InconsistentFrameDims {
        index: usize,
        want_h: usize,
        want_w: usize,
        got_h: usize,
        got_w: usize,
    },
    #[error("volume has no frames")]
    EmptyVolume,
    #[error("frames must be at least {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}, got {height}x{width}")]
    FrameTooSmall { height: usize, width: usize },
    #[error("frame rate must be positive and finite, got {0}")]
    BadFps(f64),
    #[error("malformed volume file: {0}")]
    Format(String),
    #[error("cannot decode frame {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A `T × H × W` grayscale volume with its frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoVolume {
    data: Vec<u8>,
    frames: usize,
    height: usize,
    width: usize,
    fps: f64,
}

impl VideoVolume {
    pub fn new(data: Vec<u8>, frames: usize, height: usize, width: usize, fps: f64) -> Result<Self, VolumeError> {
        if frames == 0 {
            return Err(VolumeError::EmptyVolume);
        }
        if height < MIN_FRAME_SIDE || width < MIN_FRAME_SIDE {
            return Err(VolumeError::FrameTooSmall { height, width });
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(VolumeError::BadFps(fps));
        }
        if data.len() != frames * height * width {
            return Err(VolumeError::Format(format!(
                "payload holds {} bytes, {}x{}x{} needs {}",
                data.len(),
                frames,
                height,
                width,
                frames * height * width
            )));
        }
        Ok(Self {
            data,
            frames,
            height,
            width,
            fps,
        })
    }

    /// Volume with every pixel set to `value`.
    pub fn filled(frames: usize, height: usize, width: usize, value: u8) -> Result<Self, VolumeError> {
        Self::new(vec![value; frames * height * width], frames, height, width, DEFAULT_FPS)
    }

    pub fn from_frames(frames: &[Vec<u8>], height: usize, width: usize, fps: f64) -> Result<Self, VolumeError> {
        let mut data = Vec::with_capacity(frames.len() * height * width);
        for (index, f) in frames.iter().enumerate() {
            if f.len() != height * width {
                return Err(VolumeError::Format(format!(
                    "frame {index} holds {} pixels, expected {}",
                    f.len(),
                    height * width
                )));
            }
            data.extend_from_slice(f);
        }
        Self::new(data, frames.len(), height, width, fps)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn with_fps(mut self, fps: f64) -> Result<Self, VolumeError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(VolumeError::BadFps(fps));
        }
        self.fps = fps;
        Ok(self)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn get(&self, t: usize, y: usize, x: usize) -> u8 {
        self.data[(t * self.height + y) * self.width + x]
    }

    pub fn view(&self) -> VolumeView<'_> {
        VolumeView::new(&self.data, self.frames, self.height, self.width)
    }

    /// Copy of frames `start..start + len`.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Self, VolumeError> {
        if len == 0 || start + len > self.frames {
            return Err(VolumeError::Format(format!(
                "frames {start}..{} outside a {}-frame volume",
                start + len,
                self.frames
            )));
        }
        let n = self.frame_len();
        let data = self.data[start * n..(start + len) * n].to_vec();
        Self::new(data, len, self.height, self.width, self.fps)
    }
}

/// Borrowed `T × H × W` pixel block with no size constraints.
///
/// Descriptor kernels operate on views so that arbitrary sub-blocks and small
/// synthetic cubes can be fed to them without building a full volume.
#[derive(Debug, Clone, Copy)]
pub struct VolumeView<'a> {
    data: &'a [u8],
    frames: usize,
    height: usize,
    width: usize,
}

impl<'a> VolumeView<'a> {
    pub fn new(data: &'a [u8], frames: usize, height: usize, width: usize) -> Self {
        assert_eq!(data.len(), frames * height * width, "view dimensions do not match data");
        Self {
            data,
            frames,
            height,
            width,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &'a [u8] {
        self.data
    }

    #[inline]
    pub fn get(&self, t: usize, y: usize, x: usize) -> u8 {
        self.data[(t * self.height + y) * self.width + x]
    }
}

/// Loads a volume from a frame directory or a `.y8v` file.
///
/// Color frames are reduced to luma with weights 0.299/0.587/0.114.
pub fn load_volume(path: impl AsRef<Path>) -> Result<VideoVolume, VolumeError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(VolumeError::MissingPath(path.to_path_buf()));
    }
    if path.is_dir() {
        load_frame_dir(path)
    } else {
        read_y8v(&fs::read(path)?)
    }
}

/// Number of frames in a volume without decoding the pixels.
pub fn probe_frame_count(path: impl AsRef<Path>) -> Result<usize, VolumeError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(VolumeError::MissingPath(path.to_path_buf()));
    }
    if path.is_dir() {
        return Ok(frame_files(path)?.len());
    }
    let mut header = [0u8; Y8V_HEADER_LEN];
    io::Read::read_exact(&mut fs::File::open(path)?, &mut header)
        .map_err(|_| VolumeError::Format("file is shorter than the header".into()))?;
    if &header[..4] != Y8V_MAGIC {
        return Err(VolumeError::Format("bad magic, expected Y8V1".into()));
    }
    Ok(read_u32(&header, 4))
}

fn frame_files(dir: &Path) -> Result<Vec<PathBuf>, VolumeError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| FRAME_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn load_frame_dir(dir: &Path) -> Result<VideoVolume, VolumeError> {
    let files = frame_files(dir)?;
    if files.is_empty() {
        return Err(VolumeError::EmptyVolume);
    }

    let mut data = Vec::new();
    let (mut height, mut width) = (0, 0);
    for (index, file) in files.iter().enumerate() {
        let img = image::open(file).map_err(|source| VolumeError::Image {
            path: file.clone(),
            source,
        })?;
        let (h, w) = (img.height() as usize, img.width() as usize);
        if index == 0 {
            height = h;
            width = w;
        } else if (h, w) != (height, width) {
            return Err(VolumeError::InconsistentFrameDims {
                index,
                want_h: height,
                want_w: width,
                got_h: h,
                got_w: w,
            });
        }
        match img {
            image::DynamicImage::ImageLuma8(gray) => data.extend_from_slice(gray.as_raw()),
            other => {
                let rgb = other.to_rgb8();
                data.extend(rgb.pixels().map(|p| luma(p.0)));
            }
        }
    }
    VideoVolume::new(data, files.len(), height, width, DEFAULT_FPS)
}

/// ITU-R BT.601 luma of an 8-bit RGB triple.
pub fn luma([r, g, b]: [u8; 3]) -> u8 {
    let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    y.round().clamp(0.0, 255.0) as u8
}

fn read_u32(bytes: &[u8], at: usize) -> usize {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize
}

/// Parses an in-memory `.y8v` file.
pub fn read_y8v(bytes: &[u8]) -> Result<VideoVolume, VolumeError> {
    if bytes.len() < Y8V_HEADER_LEN {
        return Err(VolumeError::Format(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[..4] != Y8V_MAGIC {
        return Err(VolumeError::Format("bad magic, expected Y8V1".into()));
    }
    let (t, h, w) = (read_u32(bytes, 4), read_u32(bytes, 8), read_u32(bytes, 12));
    if t == 0 {
        return Err(VolumeError::EmptyVolume);
    }
    let payload = &bytes[Y8V_HEADER_LEN..];
    let expected = t.checked_mul(h).and_then(|n| n.checked_mul(w));
    if expected != Some(payload.len()) {
        return Err(VolumeError::Format(format!(
            "header declares {t}x{h}x{w} but payload holds {} bytes",
            payload.len()
        )));
    }
    VideoVolume::new(payload.to_vec(), t, h, w, DEFAULT_FPS)
}

pub fn write_y8v(vol: &VideoVolume, mut out: impl Write) -> io::Result<()> {
    out.write_all(Y8V_MAGIC)?;
    for n in [vol.frames, vol.height, vol.width] {
        out.write_all(&(n as u32).to_le_bytes())?;
    }
    out.write_all(&vol.data)
}

pub fn save_volume(vol: &VideoVolume, path: impl AsRef<Path>) -> Result<(), VolumeError> {
    let file = fs::File::create(path)?;
    let mut out = io::BufWriter::new(file);
    write_y8v(vol, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Writes each frame as a binary PGM (`frame_00000.pgm`, ...) into `dir`.
pub fn save_frames_pgm(vol: &VideoVolume, dir: impl AsRef<Path>) -> Result<(), VolumeError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for t in 0..vol.frames {
        let mut out = io::BufWriter::new(fs::File::create(dir.join(format!("frame_{t:05}.pgm")))?);
        write!(out, "P5\n{} {}\n255\n", vol.width, vol.height)?;
        out.write_all(vol.frame(t))?;
        out.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(t: usize, h: usize, w: usize) -> VideoVolume {
        let data = (0..t * h * w).map(|i| (i * 7 % 251) as u8).collect();
        VideoVolume::new(data, t, h, w, DEFAULT_FPS).unwrap()
    }

    #[test]
    fn pgm_directory_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let vol = ramp(100, 64, 64);
        save_frames_pgm(&vol, dir.path()).unwrap();
        let back = load_volume(dir.path()).unwrap();
        assert_eq!((back.frames(), back.height(), back.width()), (100, 64, 64));
        assert_eq!(back, vol);
    }

    #[test]
    fn single_frame_raw_file() {
        let mut bytes = b"Y8V1".to_vec();
        for n in [1u32, 16, 16] {
            bytes.extend_from_slice(&n.to_le_bytes());
        }
        bytes.extend((0..=255u8).collect::<Vec<_>>());
        let vol = read_y8v(&bytes).unwrap();
        assert_eq!((vol.frames(), vol.height(), vol.width()), (1, 16, 16));
        assert_eq!(vol.get(0, 15, 15), 255);
    }

    #[test]
    fn payload_length_mismatch_is_rejected() {
        let mut bytes = b"Y8V1".to_vec();
        for n in [2u32, 16, 16] {
            bytes.extend_from_slice(&n.to_le_bytes());
        }
        bytes.extend(vec![0u8; 256]);
        assert!(matches!(read_y8v(&bytes), Err(VolumeError::Format(_))));

        let mut empty = b"Y8V1".to_vec();
        for n in [0u32, 16, 16] {
            empty.extend_from_slice(&n.to_le_bytes());
        }
        assert!(matches!(read_y8v(&empty), Err(VolumeError::EmptyVolume)));
    }

    #[test]
    fn missing_path() {
        assert!(matches!(
            load_volume("/nonexistent/volume.y8v"),
            Err(VolumeError::MissingPath(_))
        ));
    }

    #[test]
    fn inconsistent_frame_sizes() {
        let dir = tempfile::tempdir().unwrap();
        save_frames_pgm(&ramp(2, 16, 16), dir.path()).unwrap();
        let mut f = fs::File::create(dir.path().join("frame_00009.pgm")).unwrap();
        write!(f, "P5\n20 16\n255\n").unwrap();
        f.write_all(&[0u8; 320]).unwrap();
        drop(f);
        assert!(matches!(
            load_volume(dir.path()),
            Err(VolumeError::InconsistentFrameDims { index: 2, .. })
        ));
    }

    #[test]
    fn color_frames_use_bt601_luma() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = fs::File::create(dir.path().join("a.ppm")).unwrap();
        write!(f, "P6\n16 16\n255\n").unwrap();
        f.write_all(&[200u8, 100, 50].repeat(256)).unwrap();
        drop(f);
        let vol = load_volume(dir.path()).unwrap();
        // 0.299*200 + 0.587*100 + 0.114*50 = 124.2
        assert!(vol.data().iter().all(|&v| v == 124));
    }

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_volume(dir.path()), Err(VolumeError::EmptyVolume)));
    }

    #[test]
    fn raw_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.y8v");
        let vol = ramp(7, 17, 19);
        save_volume(&vol, &path).unwrap();
        assert_eq!(load_volume(&path).unwrap(), vol);
    }

    #[test]
    fn small_frames_rejected() {
        assert!(matches!(
            VideoVolume::filled(3, 15, 16, 0),
            Err(VolumeError::FrameTooSmall { .. })
        ));
    }
}
