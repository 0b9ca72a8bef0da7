//! Imitation learning for fix-set prediction: feature extraction,
//! normalization, a small hand-rolled MLP with backprop and Adam, and the
//! oracle-label collection pipeline.

mod collect;
mod features;
mod mlp;
mod train;

pub use collect::{collect_labels, infer_variant};
pub use features::{extract_features, FeatureVariant, StateRecord};
pub use mlp::{
    forward, loss_and_grad, predict, Gradients, Linear, Mlp, MlpModel, Normalizer, D_HIDDEN,
};
pub use train::{train, train_logged, TrainConfig, TrainLogRow};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("feature variant {0} incompatible with this run configuration")]
    VariantMismatch(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset mixes feature variants")]
    MixedVariants,
    #[error("dataset lacks labels")]
    MissingLabels,
}
