//! Training runs: configuration, curricula, joint shuffling, the training
//! loop and validation metrics.

pub mod batching;
pub mod config;
pub mod evaluate;
pub mod train;

pub use batching::{order_curriculum, shuffle_joints};
pub use config::{Curriculum, RunConfig, ShuffleMode};
pub use evaluate::{evaluate, evaluate_with, Evaluation};
pub use train::{
    init_model, read_record, train, EpochMetrics, PreparedDataset, TrainOutcome, TrainRecord,
    CHECKPOINT_BEST, CHECKPOINT_FINAL, CONFIG_FILE, LEARNING_CURVE, PER_NUMBER,
};
