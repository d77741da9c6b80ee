//! Stroke-outcome prediction from lesion masks and a normative fibre field.
//!
//! The pipeline runs deterministic streamline tracking through a lesion,
//! turns the surviving tracts into a region disruption matrix and the
//! tractographic feature, extracts first-order lesion features, and evaluates
//! random-forest mRS regression with recursive feature elimination under
//! leave-one-out cross-validation.

pub mod error;
pub mod features;
pub mod odf;
pub mod regression;
pub mod tracking;
pub mod volume;

pub use error::{Error, Result};
pub use features::{Atlas, DisruptionMatrix, FeatureKind, FeatureVector, NormalizedDisruption};
pub use odf::{OdfField, Peak, PhantomGeometry, PhantomSpec};
pub use regression::{Dataset, EvalReport, ForestSpec, RegressionForest};
pub use tracking::{Streamline, TrackingParams, Tractogram};
pub use volume::{GridSpec, Volume, VolumeKind};
