//! Loss, optimizer, clipping, schedulers and the fit loop.

mod config;
mod fit;
mod loss;
mod optim;
mod report;
mod schedule;

pub use config::{SchedulerConfig, TrainConfig};
pub use fit::{evaluate, fit, predict_split, worker_count, Evaluation, FitOutcome, StepOutcome, Trainer, BEST_CHECKPOINT};
pub use loss::{bce_term, bce_with_logits};
pub use optim::{clip_global_norm, global_norm, AdamW, ClipOutcome};
pub use report::{EpochRecord, TrainReport, REPORT_HEADER};
pub use schedule::{OneCycle, Plateau, Scheduler};
