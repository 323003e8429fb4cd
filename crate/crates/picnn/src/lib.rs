//! Physics-informed convolutional surrogate: one U-Net per timestep maps
//! rasterised well controls to pressure and saturation fields and is trained
//! by driving the finite-volume residual towards zero.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod input;
pub mod layers;
pub mod loss;
pub mod net;
pub mod real;
pub mod trainer;

pub use checkpoint::{load_checkpoints, save_checkpoints, CheckpointSet, StepCheckpoint};
pub use error::{Error, Result};
pub use input::{rasterize_controls, ControlBounds, ControlImage, ScalingParams};
pub use loss::{data_loss, physics_loss, smooth_l1};
pub use net::{NetworkSpec, PicNet};
pub use trainer::{infer_trajectory, Evaluation, Prediction, StepRecord, StepResult, Trainer, TrainerConfig, TrainingRun};

/// Thread cap from `PORFLOW_THREADS`, defaulting to the available cores.
pub fn max_threads() -> usize {
    std::env::var("PORFLOW_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
