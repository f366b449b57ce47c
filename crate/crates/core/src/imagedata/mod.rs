//! Corpus curation and batch loading.
//!
//! Raw cartoon footage goes through [`extract_frames`] (sampling, head/tail
//! trimming, dark-frame rejection), then [`build_manifest`] resizes images to
//! the training resolution and writes a seeded train/val split laid out as
//! `<root>/<domain>/<split>/*.png` with a `manifest.json` per split.
//! [`BatchLoader`] serves normalized [`ImageBatch`]es from a split.

mod batch;
mod extract;
mod loader;
mod manifest;
mod pixels;
pub mod video;

pub use batch::{DomainTag, ImageBatch};
pub use extract::{extract_frames, write_frame_log, ExtractConfig, DEFAULT_DARK_THRESHOLD, DEFAULT_SAMPLE_RATE, DEFAULT_TRIM_FRACTION};
pub use loader::BatchLoader;
pub use manifest::{
    build_manifest, list_images, CuratedDataset, DatasetManifest, Domain, FrameRecord,
    RejectReason, Split, SplitCounts, DEFAULT_IMAGE_SIZE, FRAME_LOG_FILE, MANIFEST_FILE,
};
pub use pixels::{
    dark_frame_filter, denormalize, image_to_chw, luminance, mean_luminance, normalize,
    resize_and_crop, chw_to_image, unit_to_signed,
};
