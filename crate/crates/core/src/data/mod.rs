//! Dataset, code, and configuration types shared by both training phases.

mod bundle;
mod codes;
mod hyper;
mod matrix;
mod split;

pub use bundle::{validate_bundle, Bundle, BundleManifest, ValidationReport, Violation, BUNDLE_SCHEMA_VERSION};
pub use codes::{sign, ContinuousCodes, HashCodes, PackedCodes};
pub use hyper::{HyperParams, Preset, SimilarityMode, PRESETS};
pub use matrix::{FeatureMatrix, LabelMatrix, Modality, SimilarityKind, SimilarityMatrix};
pub use split::{make_split, DatasetSplit};
