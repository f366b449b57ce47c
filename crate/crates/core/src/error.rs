use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot decode {}: {reason}", path.display())]
    Decode { path: PathBuf, reason: String },

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error(
        "corpus too small: {found} usable images, but the split needs {train} train + {val} val = {}",
        train + val
    )]
    CorpusSize { found: usize, train: usize, val: usize },

    #[error("manifest integrity: missing image file {}", .0.display())]
    MissingImage(PathBuf),

    #[error("manifest integrity: {0}")]
    Integrity(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("sample size: need at least 2 images for statistics, got {0}")]
    SampleSize(usize),

    #[error("non-finite loss in `{component}` ({value}); all components: {dump}")]
    NonFiniteLoss {
        component: &'static str,
        value: f64,
        dump: String,
    },

    #[error("checkpoint {}: {reason}", path.display())]
    Checkpoint { path: PathBuf, reason: String },

    #[error("download failed: {0}")]
    Download(String),

    #[error("refusing to overwrite {} (pass --force)", .0.display())]
    OutputExists(PathBuf),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Attaches a path to an `io::Error`.
pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| Error::Io {
            path: path.into(),
            source,
        })
    }
}
