//! Image-to-statistics regression: network, objective, training, bundles
//! and gradient verification.

pub mod bundle;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod network;
pub mod train;

pub use bundle::{load_bundle, save_bundle, ModelBundle, TrainingMetadata, BUNDLE_VERSION};
pub use gradcheck::{grad_check, grad_check_model};
pub use loss::{loss_smooth_l1_weighted, loss_weights};
pub use model::{forward, init_model, init_model_with, predict_ensemble, ConvRegressor};
pub use network::{Architecture, LayerSpec, Network};
pub use train::{train, train_model, train_with, type_seed, TrainConfig, TrainingData, TypeData, TypeHistory};
