use crate::error::{Error, Result};

/// Architecture hyperparameters of an IncepSE network.
#[derive(Clone, Debug, PartialEq)]
pub struct IncepSEConfig {
    pub input_channels: usize,
    /// Number of IncepSE layers; the last one is the widened, strided layer.
    pub depth: usize,
    /// Channels per concat branch in the standard layers.
    pub branch_channels: usize,
    pub bottleneck_channels: usize,
    /// Kernel sizes of the three large convolutions fed by the SE bottleneck.
    pub kernel_sizes: Vec<usize>,
    pub pool_branch_kernel: usize,
    pub skip_kernel: usize,
    pub se_reduction: usize,
    pub last_layer_multiplier: usize,
    pub last_layer_stride: usize,
    pub dropout_p: f64,
    pub num_classes: usize,
    /// Permit even kernel sizes (padded asymmetrically, extra zero on the right).
    pub allow_even_kernels: bool,
}

pub const ECG_LEADS: usize = 12;

impl IncepSEConfig {
    /// Full-size network: 7 layers, 32-channel branches, kernels 9/19/39.
    pub fn new(num_classes: usize) -> Self {
        IncepSEConfig {
            input_channels: ECG_LEADS,
            depth: 7,
            branch_channels: 32,
            bottleneck_channels: 32,
            kernel_sizes: vec![9, 19, 39],
            pool_branch_kernel: 3,
            skip_kernel: 3,
            se_reduction: 8,
            last_layer_multiplier: 2,
            last_layer_stride: 2,
            dropout_p: 0.0,
            num_classes,
            allow_even_kernels: false,
        }
    }

    /// Two-layer network for desk-scale experiments and gradient checks.
    pub fn mini(num_classes: usize, branch_channels: usize) -> Self {
        IncepSEConfig {
            depth: 2,
            branch_channels,
            bottleneck_channels: branch_channels,
            ..Self::new(num_classes)
        }
    }

    /// Kernel lengths 10/20/40 as written in prose rather than 9/19/39.
    pub fn with_even_kernels(mut self) -> Self {
        self.kernel_sizes = vec![10, 20, 40];
        self.allow_even_kernels = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_channels", self.input_channels),
            ("depth", self.depth),
            ("branch_channels", self.branch_channels),
            ("bottleneck_channels", self.bottleneck_channels),
            ("pool_branch_kernel", self.pool_branch_kernel),
            ("skip_kernel", self.skip_kernel),
            ("se_reduction", self.se_reduction),
            ("last_layer_multiplier", self.last_layer_multiplier),
            ("last_layer_stride", self.last_layer_stride),
            ("num_classes", self.num_classes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be >= 1")));
            }
        }
        if self.kernel_sizes.is_empty() || self.kernel_sizes.contains(&0) {
            return Err(Error::invalid("kernel_sizes must be non-empty and >= 1"));
        }
        if !self.allow_even_kernels && self.kernel_sizes.iter().any(|k| k % 2 == 0) {
            return Err(Error::invalid(format!(
                "kernel sizes must be odd, got {:?}",
                self.kernel_sizes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::invalid(format!("dropout_p must be in [0, 1), got {}", self.dropout_p)));
        }
        Ok(())
    }

    pub fn se_hidden(&self) -> usize {
        (self.bottleneck_channels / self.se_reduction).max(1)
    }

    pub fn largest_kernel(&self) -> usize {
        self.kernel_sizes
            .iter()
            .copied()
            .chain([self.pool_branch_kernel, self.skip_kernel])
            .max()
            .unwrap_or(1)
    }

    /// Branch width of layer `i` (0-based).
    pub fn layer_branch_channels(&self, i: usize) -> usize {
        if i + 1 == self.depth {
            self.branch_channels * self.last_layer_multiplier
        } else {
            self.branch_channels
        }
    }

    pub fn layer_stride(&self, i: usize) -> usize {
        if i + 1 == self.depth {
            self.last_layer_stride
        } else {
            1
        }
    }

    /// Concat width of layer `i`: one slot per large kernel plus the pool branch.
    pub fn layer_out_channels(&self, i: usize) -> usize {
        (self.kernel_sizes.len() + 1) * self.layer_branch_channels(i)
    }

    pub fn layer_in_channels(&self, i: usize) -> usize {
        if i == 0 {
            self.input_channels
        } else {
            self.layer_out_channels(i - 1)
        }
    }

    pub fn final_channels(&self) -> usize {
        self.layer_out_channels(self.depth - 1)
    }

    /// Temporal length after the whole stack for input length `len`.
    pub fn output_len(&self, len: usize) -> usize {
        (0..self.depth).fold(len, |l, i| l.div_ceil(self.layer_stride(i)))
    }
}
