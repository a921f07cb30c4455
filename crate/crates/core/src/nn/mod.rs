//! Layer primitives with hand-written backward passes.

mod conv;
mod dropout;
mod linear;
mod norm;
mod pool;

pub use conv::{conv1d, conv1d_forward, same_out_len, same_pad_left, ConvGeometry};
pub use dropout::dropout;
pub use linear::{channel_scale, linear};
pub use norm::{batchnorm1d, BatchNormState, BatchStats, BN_EPS, BN_MOMENTUM};
pub use pool::{global_avg_pool, maxpool1d};

use crate::autodiff::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Weight and optional bias of a 1D convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    /// `[Cout, Cin, K]`
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
}

impl ConvParams {
    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape()[1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams {
    /// `[out, in]`
    pub weight: Tensor,
    pub bias: Tensor,
}
