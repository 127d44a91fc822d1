//! Dataset generation, training, rollout and evaluation drivers.

mod commands;
mod dataset;
mod evaluate;
mod gradcheck_suite;
mod rollout;
mod train;

pub use commands::{
    apply_train_config, cmd_eval, cmd_gen, cmd_predict, cmd_trails, cmd_train, load_dataset, loss_log_path, parse_kv,
    MANIFEST,
};
pub use dataset::{generate, sequence_seed};
pub use evaluate::{evaluate_sequences, interior_mask, EvalOptions, HorizonScores, Predictor};
pub use gradcheck_suite::{gradcheck_suite, guided_check_config, level_check_config, model_check, GradCheckEntry};
pub use rollout::{last_input_baseline, predict_next, rollout, teacher_forced};
pub use train::{train, TrainConfig, TrainReport};
