//! Cross-dataset feature alignment and generalization.
//!
//! Two feature domains (for example visible-light and infrared action
//! features) are projected into a common latent space by semi-supervised
//! kernel manifold alignment, pulled toward shared class centroids by a
//! pair of small encoders, and classified with a one-vs-one RBF SVM.

pub mod age;
pub mod bench;
pub mod data;
pub mod encoding;
pub mod error;
pub mod io;
pub mod kema;
pub mod linalg;
pub mod persist;
pub mod pipeline;
pub mod spectral;
pub mod svm;

pub use data::{DomainBundle, FeatureSet, Label};
pub use error::{Error, ErrorKind, Result, Stage};
pub use pipeline::{test_pipeline, train_pipeline, PipelineConfig, PipelineModel};
