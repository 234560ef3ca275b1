//! Video-level features from local descriptors: codebook learning, LLC
//! coding, pooling and PCA reduction.

mod codebook;
mod llc;
mod pca;

pub use codebook::{build_codebook, Codebook, DescriptorSet};
pub use llc::{encode_videos, llc_encode, nearest_bases, pool_codes, Pooling, DEFAULT_LLC_REG};
pub use pca::{covariance, pca_fit, pca_project, PcaModel};

pub const DEFAULT_CODEBOOK_SIZE: usize = 4000;
pub const DEFAULT_PER_VIDEO_SAMPLE: usize = 200;
pub const DEFAULT_NUM_BASES: usize = 5;
pub const DEFAULT_PCA_RETAIN: f64 = 0.99;
