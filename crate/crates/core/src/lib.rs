//! Pose-sequence refinement with a kinematic-aware hierarchical attention
//! network.
//!
//! Given noisy per-frame keypoint sequences from any upstream estimator,
//! the pipeline computes kinematic features (flow, velocity,
//! acceleration), refines the poses with a hierarchical attention
//! encoder whose feature width doubles per level, upsamples them through
//! a learnable interpolation, and decodes final full-rate poses with the
//! derivative features as cross-attention memory. Training couples the
//! two outputs through per-joint online mutual learning.
//!
//! Everything runs on a self-contained reverse-mode autodiff tensor in
//! double precision; there are no framework dependencies.

pub mod config;
pub mod data;
pub mod kinematics;
pub mod loss;
pub mod mat;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use kinematics::{KinematicFeatures, PoseSequence, SequenceMeta, VelocityDirection};
pub use mat::Mat;
pub use model::{FeatureToggles, ModelConfig, PoseRefiner};
pub use rng::Rng;
pub use tensor::{DiffTensor, TensorError};
pub use trainer::{Checkpoint, TrainConfig};
