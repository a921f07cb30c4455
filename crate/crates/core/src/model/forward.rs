use rand::{RngCore, SeedableRng};

use super::params::{BoundModel, LayerParams, LayerVars, ModelParams};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{
    batchnorm1d, channel_scale, conv1d, dropout, global_avg_pool, linear, maxpool1d, BatchStats, Mode,
};

/// Output of [`se_block`]: the rescaled input and the per-channel gates.
#[derive(Clone, Copy, Debug)]
pub struct SeOutput {
    pub out: Var,
    /// `[B, C]`, every entry in (0, 1).
    pub weights: Var,
}

/// Squeeze-and-excitation: average over time, `C -> C/r -> C` MLP with ReLU
/// and sigmoid, then rescale each channel by its gate.
pub fn se_block(tape: &mut Tape, x: Var, w1: Var, b1: Var, w2: Var, b2: Var) -> Result<SeOutput> {
    let squeezed = global_avg_pool(tape, x)?;
    let h = linear(tape, squeezed, w1, b1)?;
    let h = tape.relu(h)?;
    let logits = linear(tape, h, w2, b2)?;
    let weights = tape.sigmoid(logits)?;
    let out = channel_scale(tape, x, weights)?;
    Ok(SeOutput { out, weights })
}

pub struct LayerOutput {
    pub out: Var,
    pub bn_stats: Option<BatchStats>,
}

/// One IncepSE layer:
///
/// ```text
/// b0 = SE(conv1(x))
/// b1 = conv3(maxpool3(x))
/// b2..b4 = conv_k(b0) for each large kernel
/// out = relu(bn(concat(b1, b2, b3, b4))) + skip_conv3(x)
/// ```
///
/// The layer stride is applied to the pool-branch conv, the large-kernel
/// convs and the skip conv, so every summand has the same length.
pub fn incepse_layer(
    tape: &mut Tape,
    x: Var,
    params: &LayerParams,
    vars: &LayerVars,
    mode: Mode,
) -> Result<LayerOutput> {
    let (_, c_in, _) = tape.value(x).dims3()?;
    if c_in != params.bottleneck.c_in() {
        return Err(Error::ShapeMismatch {
            op: "incepse_layer input",
            left: vec![params.bottleneck.c_in()],
            right: tape.shape(x).to_vec(),
        });
    }
    let stride = params.stride;

    let bottleneck = conv1d(tape, x, vars.bottleneck_w, Some(vars.bottleneck_b), 1)?;
    let b0 = se_block(tape, bottleneck, vars.se_w1, vars.se_b1, vars.se_w2, vars.se_b2)?.out;

    let pooled = maxpool1d(tape, x, 3, 1)?;
    let b1 = conv1d(tape, pooled, vars.pool_w, None, stride)?;

    let mut branches = vec![b1];
    for &w in &vars.branch_w {
        branches.push(conv1d(tape, b0, w, None, stride)?);
    }

    let reference = tape.shape(b1).to_vec();
    for &b in &branches[1..] {
        let s = tape.shape(b);
        if s[0] != reference[0] || s[2] != reference[2] {
            return Err(Error::ShapeMismatch {
                op: "incepse branch lengths",
                left: reference,
                right: s.to_vec(),
            });
        }
    }

    let merged = tape.concat(&branches, 1)?;
    let (normed, bn_stats) = batchnorm1d(tape, merged, vars.bn_gamma, vars.bn_beta, &params.bn, mode)?;
    let activated = tape.relu(normed)?;

    let skip = conv1d(tape, x, vars.skip_w, Some(vars.skip_b), stride)?;
    if tape.shape(skip) != tape.shape(activated) {
        return Err(Error::ShapeMismatch {
            op: "incepse residual add",
            left: tape.shape(activated).to_vec(),
            right: tape.shape(skip).to_vec(),
        });
    }
    let out = tape.add(activated, skip)?;
    Ok(LayerOutput { out, bn_stats })
}

pub struct ForwardOutput {
    pub logits: Var,
    /// Final layer output before dropout and pooling, `[B, C_final, L']`.
    pub features: Var,
    /// One entry per layer in train mode, empty in eval mode.
    pub bn_stats: Vec<BatchStats>,
}

impl ModelParams {
    /// Full network: IncepSE stack, dropout, global average pool, linear head.
    /// Returns raw logits.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundModel,
        x: Var,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<ForwardOutput> {
        let (_, channels, len) = tape.value(x).dims3()?;
        if channels != self.config.input_channels {
            return Err(Error::ConfigMismatch {
                checkpoint: vec![self.config.input_channels],
                requested: vec![channels],
            });
        }
        let largest = self.config.largest_kernel();
        if len < largest {
            return Err(Error::InputTooShort { length: len, kernel: largest });
        }

        let mut h = x;
        let mut bn_stats = Vec::new();
        for (layer, vars) in self.layers.iter().zip(&bound.layers) {
            let out = incepse_layer(tape, h, layer, vars, mode)?;
            bn_stats.extend(out.bn_stats);
            h = out.out;
        }
        let features = h;
        let dropped = dropout(tape, h, self.config.dropout_p, mode, rng)?;
        let pooled = global_avg_pool(tape, dropped)?;
        let logits = linear(tape, pooled, bound.head_w, bound.head_b)?;
        Ok(ForwardOutput {
            logits,
            features,
            bn_stats,
        })
    }

    /// Eval-mode logits `[B, num_classes]` for a `[B, C, L]` input.
    pub fn predict_logits(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false)?;
        let xv = tape.constant(x.clone());
        // eval mode never draws from the generator
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut tape, &bound, xv, Mode::Eval, &mut rng)?;
        Ok(tape.value(out.logits).clone())
    }
}
