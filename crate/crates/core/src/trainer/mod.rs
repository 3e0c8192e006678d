//! Adversarial training: critic scheduling, replay pools, the step loop and its logs.

pub mod heuristics;
pub mod log;
pub mod pool;
pub mod train;

pub use heuristics::{perturb_critic_inputs, should_update_critic, Label};
pub use log::{csv_header, csv_row, has_term_column, read_column, truncate_log, LossLog};
pub use pool::{pool_query, ImagePool};
pub use train::{
    checkpoint_if_due, checkpoint_path, train, train_with_options, StepRecord, TrainOptions,
    TrainState,
};
