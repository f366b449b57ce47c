use std::path::Path;

use super::manifest::{FrameRecord, RejectReason, FRAME_LOG_FILE};
use super::pixels::dark_frame_filter;
use super::video::open_video;
use crate::error::IoContext;
use crate::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: f64 = 1.0;
pub const DEFAULT_TRIM_FRACTION: f64 = 0.05;
pub const DEFAULT_DARK_THRESHOLD: f64 = 0.15;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractConfig {
    /// Sampled frames per second of timeline.
    pub sample_rate: f64,
    /// Fraction of the timeline discarded at each end.
    pub trim_fraction: f64,
    /// Minimum mean luminance; `None` keeps dark frames.
    pub dark_threshold: Option<f64>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            sample_rate: DEFAULT_SAMPLE_RATE,
            trim_fraction: DEFAULT_TRIM_FRACTION,
            dark_threshold: Some(DEFAULT_DARK_THRESHOLD),
        }
    }
}

impl ExtractConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::Config(format!("sample rate must be > 0, got {}", self.sample_rate)));
        }
        if !(0.0..0.5).contains(&self.trim_fraction) {
            return Err(Error::Config(format!(
                "trim fraction must lie in [0, 0.5), got {}",
                self.trim_fraction
            )));
        }
        if let Some(t) = self.dark_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("dark threshold must lie in [0, 1], got {t}")));
            }
        }
        Ok(())
    }
}

/// Position-based rejection for a sample spanning `[start, start + span)` of a
/// `duration`-second timeline: the span must lie inside the untrimmed middle.
fn trim_reason(start: f64, span: f64, duration: f64, trim: f64) -> RejectReason {
    let cut = trim * duration;
    let end = (start + span).min(duration);
    if start < cut - TIME_EPS {
        RejectReason::HeadTrim
    } else if end > duration - cut + TIME_EPS {
        RejectReason::TailTrim
    } else {
        RejectReason::None
    }
}

/// Samples `video` at `config.sample_rate`, classifies every sample and writes
/// the accepted ones to `out_dir` as PNG. Returns all records, rejected ones
/// included.
pub fn extract_frames(video: &Path, config: &ExtractConfig, out_dir: &Path) -> Result<Vec<FrameRecord>> {
    config.validate()?;
    let mut source = open_video(video, config.sample_rate)?;
    let duration = source.duration_s();
    let source_id = video
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("video")
        .to_string();
    std::fs::create_dir_all(out_dir).at(out_dir)?;

    let span = 1.0 / config.sample_rate;
    let mut records = Vec::new();
    let mut candidates = 0usize;
    let mut k: u64 = 0;
    while let Some(frame) = source.next_frame() {
        let frame = frame?;
        let frame_end = frame.start_s + frame.duration_s;
        let mut lum_image = None;
        loop {
            let t = k as f64 / config.sample_rate;
            if t >= duration - TIME_EPS || t >= frame_end - TIME_EPS {
                break;
            }
            let mut reason = trim_reason(t, span, duration, config.trim_fraction);
            let rgb = lum_image.get_or_insert_with(|| image::DynamicImage::ImageRgb8(frame.image.clone()).to_rgb32f());
            let (bright_enough, lum) = dark_frame_filter(rgb, config.dark_threshold.unwrap_or(0.0));
            if reason == RejectReason::None {
                candidates += 1;
                if !bright_enough {
                    reason = RejectReason::Dark;
                }
            }
            let record = FrameRecord {
                source_id: source_id.clone(),
                frame_index: k,
                timestamp_s: t,
                mean_luminance: lum,
                accepted: reason == RejectReason::None,
                reject_reason: reason,
            };
            if record.accepted {
                frame
                    .image
                    .save_with_format(out_dir.join(record.file_name()), image::ImageFormat::Png)?;
            }
            records.push(record);
            k += 1;
        }
    }
    if candidates == 0 {
        return Err(Error::EmptyCorpus(format!(
            "{}: no sampled frames survive trimming ({} sampled)",
            video.display(),
            records.len()
        )));
    }
    Ok(records)
}

/// Writes the extraction log that [`super::build_manifest`] reads back.
pub fn write_frame_log(dir: &Path, records: &[FrameRecord]) -> Result<()> {
    let path = dir.join(FRAME_LOG_FILE);
    let mut text = serde_json::to_string_pretty(records)?;
    text.push('\n');
    std::fs::write(&path, text).at(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::codecs::gif::GifEncoder;
    use image::{Delay, Frame, Rgba, RgbaImage};

    /// One frame per second, each with the given gray level.
    fn write_clip(path: &Path, levels: &[u8]) {
        let file = std::fs::File::create(path).unwrap();
        let mut enc = GifEncoder::new(file);
        for &v in levels {
            let img = RgbaImage::from_pixel(8, 8, Rgba([v, v, v, 255]));
            enc.encode_frame(Frame::from_parts(img, 0, 0, Delay::from_numer_denom_ms(1000, 1)))
                .unwrap();
        }
    }

    fn accepted(records: &[FrameRecord]) -> Vec<u64> {
        records.iter().filter(|r| r.accepted).map(|r| r.frame_index).collect()
    }

    #[test]
    fn ten_frame_clip_keeps_frames_two_to_seven() {
        let dir = tempfile::tempdir().unwrap();
        let clip = dir.path().join("clip.gif");
        write_clip(&clip, &[200; 10]);
        let cfg = ExtractConfig {
            sample_rate: 1.0,
            trim_fraction: 0.2,
            dark_threshold: Some(0.15),
        };
        let recs = extract_frames(&clip, &cfg, &dir.path().join("out")).unwrap();
        assert_eq!(recs.len(), 10);
        assert_eq!(accepted(&recs), vec![2, 3, 4, 5, 6, 7]);
        assert_eq!(recs[1].reject_reason, RejectReason::HeadTrim);
        assert_eq!(recs[8].reject_reason, RejectReason::TailTrim);
        for r in recs.iter().filter(|r| r.accepted) {
            assert!(dir.path().join("out").join(r.file_name()).is_file());
        }
    }

    #[test]
    fn hundred_second_clip_trims_five_percent() {
        let dir = tempfile::tempdir().unwrap();
        let clip = dir.path().join("long.gif");
        write_clip(&clip, &[180; 100]);
        let recs = extract_frames(&clip, &ExtractConfig::default(), &dir.path().join("out")).unwrap();
        for r in &recs {
            if r.timestamp_s < 5.0 {
                assert_eq!(r.reject_reason, RejectReason::HeadTrim, "t={}", r.timestamp_s);
            } else if r.timestamp_s > 95.0 {
                assert_eq!(r.reject_reason, RejectReason::TailTrim, "t={}", r.timestamp_s);
            } else if r.timestamp_s < 95.0 {
                assert!(r.accepted, "t={}", r.timestamp_s);
            }
        }
    }

    #[test]
    fn zero_trim_rejects_nothing_by_position() {
        let dir = tempfile::tempdir().unwrap();
        let clip = dir.path().join("c.gif");
        write_clip(&clip, &[0, 200, 200, 0]);
        let cfg = ExtractConfig {
            trim_fraction: 0.0,
            ..Default::default()
        };
        let recs = extract_frames(&clip, &cfg, &dir.path().join("out")).unwrap();
        assert!(recs
            .iter()
            .all(|r| !matches!(r.reject_reason, RejectReason::HeadTrim | RejectReason::TailTrim)));
        assert_eq!(accepted(&recs), vec![1, 2]);
        assert_eq!(recs[0].reject_reason, RejectReason::Dark);
        assert!(recs.iter().all(|r| r.accepted == (r.reject_reason == RejectReason::None)));
    }

    #[test]
    fn sampling_rate_resamples_timeline() {
        let dir = tempfile::tempdir().unwrap();
        let clip = dir.path().join("c.gif");
        write_clip(&clip, &[100, 150, 200, 250]);
        let cfg = ExtractConfig {
            sample_rate: 2.0,
            trim_fraction: 0.0,
            dark_threshold: None,
        };
        let recs = extract_frames(&clip, &cfg, &dir.path().join("out")).unwrap();
        assert_eq!(recs.len(), 8);
        assert!((recs[3].timestamp_s - 1.5).abs() < 1e-12);
        // Samples 2 and 3 both fall inside the second source frame.
        assert_eq!(recs[2].mean_luminance, recs[3].mean_luminance);
    }

    #[test]
    fn unreadable_video_is_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let bogus = dir.path().join("broken.gif");
        std::fs::write(&bogus, b"not a gif").unwrap();
        let err = extract_frames(&bogus, &ExtractConfig::default(), dir.path()).unwrap_err();
        assert!(matches!(err, Error::Decode { .. }), "{err}");
    }

    #[test]
    fn fully_trimmed_clip_is_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let clip = dir.path().join("short.gif");
        write_clip(&clip, &[200]);
        let cfg = ExtractConfig {
            trim_fraction: 0.4,
            ..Default::default()
        };
        let err = extract_frames(&clip, &cfg, dir.path()).unwrap_err();
        assert!(matches!(err, Error::EmptyCorpus(_)), "{err}");
    }

    #[test]
    fn bad_trim_is_config_error() {
        let cfg = ExtractConfig {
            trim_fraction: 0.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
