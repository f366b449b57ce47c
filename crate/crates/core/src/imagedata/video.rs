//! Frame sources for curation.
//!
//! Animated GIFs are decoded in-process. Any other container is handed to an
//! `ffmpeg` binary on `PATH` (override with `FFMPEG`/`FFPROBE`), which streams
//! raw RGB frames already resampled to the requested rate.

use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Stdio};

use image::{AnimationDecoder, RgbImage};

use crate::error::IoContext;
use crate::{Error, Result};

/// One decoded frame and the span of the timeline it covers.
#[derive(Debug, Clone)]
pub struct DecodedFrame {
    pub start_s: f64,
    pub duration_s: f64,
    pub image: RgbImage,
}

pub trait FrameSource {
    /// Length of the whole timeline in seconds.
    fn duration_s(&self) -> f64;

    /// Frames in presentation order.
    fn next_frame(&mut self) -> Option<Result<DecodedFrame>>;
}

/// Opens `path` with the backend matching its extension.
pub fn open_video(path: &Path, sample_rate: f64) -> Result<Box<dyn FrameSource>> {
    if !path.is_file() {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            reason: "no such file".into(),
        });
    }
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("gif") => Ok(Box::new(GifSource::open(path)?)),
        _ => Ok(Box::new(FfmpegSource::open(path, sample_rate)?)),
    }
}

/// Fully decoded animated GIF.
pub struct GifSource {
    frames: std::vec::IntoIter<DecodedFrame>,
    duration: f64,
}

/// Browsers play zero-delay GIF frames at 10 fps.
const GIF_ZERO_DELAY_S: f64 = 0.1;

impl GifSource {
    pub fn open(path: &Path) -> Result<Self> {
        let decode_err = |e: image::ImageError| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        };
        let file = std::fs::File::open(path).at(path)?;
        let decoder = image::codecs::gif::GifDecoder::new(BufReader::new(file)).map_err(decode_err)?;
        let raw = decoder.into_frames().collect_frames().map_err(decode_err)?;
        let mut frames = Vec::with_capacity(raw.len());
        let mut clock = 0.0;
        for f in raw {
            let (num, den) = f.delay().numer_denom_ms();
            let mut d = num as f64 / den.max(1) as f64 / 1000.0;
            if d <= 0.0 {
                d = GIF_ZERO_DELAY_S;
            }
            let image = image::DynamicImage::ImageRgba8(f.into_buffer()).to_rgb8();
            frames.push(DecodedFrame {
                start_s: clock,
                duration_s: d,
                image,
            });
            clock += d;
        }
        if frames.is_empty() {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                reason: "animation holds no frames".into(),
            });
        }
        Ok(Self {
            frames: frames.into_iter(),
            duration: clock,
        })
    }
}

impl FrameSource for GifSource {
    fn duration_s(&self) -> f64 {
        self.duration
    }

    fn next_frame(&mut self) -> Option<Result<DecodedFrame>> {
        self.frames.next().map(Ok)
    }
}

fn tool(var: &str, default: &str) -> PathBuf {
    std::env::var_os(var)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(default))
}

/// Raw-RGB pipe from `ffmpeg -vf fps=<rate>`.
pub struct FfmpegSource {
    path: PathBuf,
    child: Child,
    stdout: ChildStdout,
    width: u32,
    height: u32,
    rate: f64,
    duration: f64,
    index: u64,
}

impl FfmpegSource {
    pub fn open(path: &Path, sample_rate: f64) -> Result<Self> {
        let decode_err = |reason: String| Error::Decode {
            path: path.to_path_buf(),
            reason,
        };
        let probe = Command::new(tool("FFPROBE", "ffprobe"))
            .args([
                "-v",
                "error",
                "-select_streams",
                "v:0",
                "-show_entries",
                "stream=width,height:format=duration",
                "-of",
                "json",
            ])
            .arg(path)
            .output()
            .map_err(|e| decode_err(format!("cannot run ffprobe: {e}")))?;
        if !probe.status.success() {
            return Err(decode_err(String::from_utf8_lossy(&probe.stderr).trim().to_string()));
        }
        let info: serde_json::Value = serde_json::from_slice(&probe.stdout)?;
        let stream = &info["streams"][0];
        let width = stream["width"].as_u64().ok_or_else(|| decode_err("no video stream".into()))? as u32;
        let height = stream["height"].as_u64().ok_or_else(|| decode_err("no video stream".into()))? as u32;
        let duration = info["format"]["duration"]
            .as_str()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| decode_err("unknown duration".into()))?;

        let mut child = Command::new(tool("FFMPEG", "ffmpeg"))
            .args(["-v", "error", "-i"])
            .arg(path)
            .args(["-vf", &format!("fps={sample_rate}"), "-f", "rawvideo", "-pix_fmt", "rgb24", "-"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| decode_err(format!("cannot run ffmpeg: {e}")))?;
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Self {
            path: path.to_path_buf(),
            child,
            stdout,
            width,
            height,
            rate: sample_rate,
            duration,
            index: 0,
        })
    }
}

impl FrameSource for FfmpegSource {
    fn duration_s(&self) -> f64 {
        self.duration
    }

    fn next_frame(&mut self) -> Option<Result<DecodedFrame>> {
        let mut buf = vec![0u8; (self.width * self.height * 3) as usize];
        match self.stdout.read_exact(&mut buf) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return None,
            Err(e) => return Some(Err(e).at(&self.path)),
        }
        let image = RgbImage::from_raw(self.width, self.height, buf).expect("buffer sized to frame");
        let start_s = self.index as f64 / self.rate;
        self.index += 1;
        Some(Ok(DecodedFrame {
            start_s,
            duration_s: 1.0 / self.rate,
            image,
        }))
    }
}

impl Drop for FfmpegSource {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
