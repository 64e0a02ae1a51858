//! Training, evaluation protocol, model archives and the verification suite.

pub mod archive;
mod config;
mod cv;
mod metrics;
mod model;
mod optim;
mod train;
pub mod verify;

pub use archive::{load_model, save_model, Manifest, ManifestEntry, ARCHIVE_FORMAT};
pub use config::{ModelConfig, ALPHA_GRID};
pub use cv::{
    cross_validate, fit, fold_seed, grid_search_alpha, select_best, CvOptions, CvReport,
    FoldResult, GridRow, GridSearch,
};
pub use metrics::{
    compute_metrics, compute_metrics_with, mean_metrics, Confusion, F1Average, Metrics,
};
pub use model::{decide, ForwardOutput, PreparedClaim, VgaModel};
pub use optim::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use train::{
    evaluate, train, train_batch, EarlyStopping, EpochRecord, Evaluation, StopDecision,
    TrainOptions, TrainReport, TrainState,
};
pub use verify::{gradcheck_suite, SuiteEntry, SuiteReport};
