//! The variational objective and the optimization loop.

mod loss;
mod optim;
mod trainer;

pub use loss::{
    draw_kl_noise, field_kl_rows, gaussian_nll, observed_ray_kl, pixel_log_likelihood,
    random_direction, scene_grid, scene_kl, KlTerm, SceneKlNoise,
};
pub use optim::{AdamConfig, OptimizerState};
pub use trainer::{
    build_loss, fit, load_training_checkpoint, sample_batch, save_training_checkpoint,
    training_step, write_loss_log, AblationMode, LossBreakdown, LossConfig, LossRecord, Model,
    Objective, StepNoise, TrainConfig, BETA_MIN,
};
