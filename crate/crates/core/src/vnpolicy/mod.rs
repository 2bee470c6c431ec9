//! Point-based policy: a rotation-equivariant per-point encoder over
//! fingertip and object histories, a transformer across point tokens and a
//! head predicting future fingertips.

mod augment;
mod config;
mod data;
mod io;
mod loss;
mod model;
mod nn;
mod params;
mod train;
mod vn;

use ndarray::Array3;

pub use augment::{
    apply_augmentation, augment, AugmentationSample, FINGERTIP_NOISE_CLIP, FINGERTIP_NOISE_STD, SCALE_RANGE,
    TRANSLATION_RANGE, YAW_RANGE,
};
pub use config::{PolicyConfig, ScalePivot, TransformerConfig};
pub use data::{window, windows};
pub use io::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use loss::mse_loss;
pub use model::{gradients, PolicyModel};
pub use params::Params;
pub use train::{evaluate_mse, train, train_dataset, train_with, training_windows, Adam, TrainingLog, CHUNK};
pub use vn::{vn_activation, vn_linear, VNFeature, VnActivation};

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("EmptyDataset: no training windows")]
    EmptyDataset,
    #[error("NonAlignedInput: {0}")]
    NonAlignedInput(String),
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("BadMagic: not a model file")]
    BadMagic,
    #[error("VersionMismatch: model file version {found}, expected {expected}")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("ChecksumMismatch: model file is corrupted")]
    ChecksumMismatch,
    #[error("TruncatedFile: model file ends early")]
    TruncatedFile,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One supervised example: `T_o` frames of history and `T_p` future
/// fingertip frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    /// `T_o × N × 3`.
    pub input_objects: Array3<f64>,
    /// `T_o × 5 × 3`.
    pub input_fingertips: Array3<f64>,
    /// `T_p × 5 × 3`.
    pub target_fingertips: Array3<f64>,
}

#[cfg(test)]
mod tests;
