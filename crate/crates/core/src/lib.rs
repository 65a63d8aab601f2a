//! Convolutional-trace extraction and classification.

pub mod attacks;
pub mod classify;
pub mod em;
pub mod error;
pub mod features;
pub mod image_io;
pub mod linalg;
pub mod synth;

pub use attacks::{apply_attack, AttackKind, AttackSpec};
pub use classify::{
    kfold_cv, predict, stratified_split, train, ClassifierKind, EvalReport, FeatureRecord, Hyper,
    TrainedModel,
};
pub use em::{extract_ct, run_em, ConvolutionalTrace, EmConfig, KernelEstimate, PosteriorMap};
pub use error::{Error, Result};
pub use features::{FeatureRow, FeatureTable};
pub use image_io::{load_image, read_manifest, DatasetManifest, ManifestEntry, Plane, RgbImage};
