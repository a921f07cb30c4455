//! The IncepSE network: SE block, IncepSE layer, full stack, init and checkpoints.

mod checkpoint;
mod config;
mod forward;
mod params;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint, FORMAT_VERSION, MAGIC,
};
pub use config::{IncepSEConfig, ECG_LEADS};
pub use forward::{incepse_layer, se_block, ForwardOutput, LayerOutput, SeOutput};
pub use params::{
    kaiming_bound, kaiming_std, BoundModel, LayerParams, LayerVars, ModelParams, NamedTensor, NamedTensorMut, SEParams,
};
