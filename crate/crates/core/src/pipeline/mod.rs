//! The learned two-stage estimator.

pub mod infer;
pub mod init;
pub mod losses;
pub mod refine;
pub mod train;

pub use infer::{infer, InferCounters};
pub use init::{InitModelConfig, InitStageModel};
pub use losses::{loss_init, loss_ref1, loss_ref2, LossMode, Ref2Settings, Ref2Terms};
pub use refine::{RefineModelConfig, RefineStageModel};
pub use train::{
    log_csv, null_junction, patch_truths, prepare_image, train_init, train_refine, train_refine_prepared, LogRow,
    PreparedImage, RefineSample, RefineTrainConfig, TrainConfig, TrainOutcome,
};
