//! Operator-learning stack: dense networks with manual backpropagation, the
//! branch/trunk operator network, the two-stage feedback-law network, and
//! model persistence.

pub mod deeponet;
pub mod feedback;
pub mod mlp;
pub mod serialize;

pub use deeponet::{
    evaluate_relative_l2, gradient_check, train_deeponet, triangle_coords, uniform_grid_coords,
    DeepOnet, OperatorDataset, TrainConfig, TrainHistory,
};
pub use feedback::{
    evaluate_feedback_relative_l2, feedback_gradient_check, train_feedback, FeedbackDataset,
    FeedbackNet,
};
pub use mlp::{Activation, Dense, Mlp, Optimizer, OptimizerKind};
pub use serialize::{load_model, save_model, sha256_hex, ModelKind, SavedModel};
