//! Fréchet Inception Distance.
//!
//! Features from a [`FeatureExtractor`] are summarized as a mean and an
//! unbiased covariance ([`FidStats`]); two summaries are compared with
//! `‖μa − μb‖² + Tr(Σa + Σb − 2(ΣaΣb)^½)`. Translation quality is scored as a
//! weighted blend of the distance to the target domain and to the input
//! domain, 0.8 / 0.2 by default.

mod distance;
mod extractor;
mod inception;
mod stats;
mod weights;

pub use distance::{
    frechet_distance, matrix_sqrt_product, trace_sqrt_product, weighted_fid, FidWeights, WeightedFid,
    IMAGINARY_TOLERANCE, REGULARIZATION_EPS,
};
pub use extractor::{compute_stats, ExtractorConfig, ExtractorId, FeatureExtractor, LinearProjection};
pub use inception::{InceptionV3, INCEPTION_DIM, INCEPTION_INPUT};
pub use stats::{FidStats, StatsAccumulator};
pub use weights::{fetch_weights, sha256_file, DEFAULT_INCEPTION_URL};
