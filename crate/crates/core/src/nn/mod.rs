//! Feedforward network engine: layers, forward/backward passes, training and
//! persistence.

pub mod conv;
pub mod forward;
pub mod grad;
pub mod io;
pub mod model;
pub mod train;

pub use forward::{forward, ActivationTrace};
pub use grad::{grad_loss, GradientSet};
pub use model::{Activation, LayerKind, LayerSpec, ModelSpec, NeuronKind, ParamLayout};
pub use train::{accuracy, train_sgd, TrainConfig, TrainLog};
