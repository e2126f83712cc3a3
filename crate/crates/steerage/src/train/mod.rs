//! Training, evaluation, metric reporting, and the k-sweep harness.

pub mod config;
pub mod loss;
pub mod metrics;
pub mod trainer;

pub use config::TrainConfig;
pub use loss::{loss, mae, mse, rmse, tape_loss, LossKind};
pub use metrics::{
    parse_predictions_csv, predictions_to_csv, EpochMetrics, MetricsHistory, METRICS_HEADER,
    PREDICTIONS_HEADER,
};
pub use trainer::{
    compare_k, compare_k_csv, evaluate, lookup_for_config, train_joint, Evaluation, Model,
    TrainInputs,
    GRAD_CLIP_NORM,
};
