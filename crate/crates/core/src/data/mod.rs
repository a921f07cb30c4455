//! Records, fold splits, task label maps, manifest I/O and synthetic data.

mod dataset;
mod manifest;
mod synth;
mod task;

pub use dataset::{make_batch, Batch, BatchIter, Dataset, EcgRecord, Split, Splits, NUM_FOLDS, TEST_FOLD, VAL_FOLD};
pub use manifest::{load_manifest, read_signal_file, write_manifest, write_signal_file, ManifestOptions, MANIFEST_HEADER};
pub use synth::{class_names, class_template, synth_dataset, SynthSpec};
pub use task::{TaskKind, TaskSpec, PTBXL_MAPPING};
