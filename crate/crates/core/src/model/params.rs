use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::IncepSEConfig;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{BatchNormState, BatchStats, ConvParams, LinearParams};

/// Two-layer excitation MLP: `C -> C/r -> C`.
#[derive(Clone, Debug, PartialEq)]
pub struct SEParams {
    pub fc1: LinearParams,
    pub fc2: LinearParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    /// Kernel-1 projection to the bottleneck width, with bias.
    pub bottleneck: ConvParams,
    pub se: SEParams,
    /// Large kernels applied to the excited bottleneck output, no bias.
    pub branch_convs: Vec<ConvParams>,
    /// Convolution after the max-pool, no bias.
    pub pool_conv: ConvParams,
    /// Residual projection of the layer input, with bias.
    pub skip_conv: ConvParams,
    pub bn: BatchNormState,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: IncepSEConfig,
    pub layers: Vec<LayerParams>,
    pub head: LinearParams,
}

/// A tensor of the model, with a flag telling trainable weights from
/// batch-norm running statistics.
pub struct NamedTensor<'a> {
    pub name: String,
    pub tensor: &'a Tensor,
    pub trainable: bool,
}

pub struct NamedTensorMut<'a> {
    pub name: String,
    pub tensor: &'a mut Tensor,
    pub trainable: bool,
}

/// Tape handles of one layer's trainable tensors.
#[derive(Clone, Debug)]
pub struct LayerVars {
    pub bottleneck_w: Var,
    pub bottleneck_b: Var,
    pub se_w1: Var,
    pub se_b1: Var,
    pub se_w2: Var,
    pub se_b2: Var,
    pub branch_w: Vec<Var>,
    pub pool_w: Var,
    pub skip_w: Var,
    pub skip_b: Var,
    pub bn_gamma: Var,
    pub bn_beta: Var,
}

#[derive(Clone, Debug)]
pub struct BoundModel {
    pub layers: Vec<LayerVars>,
    pub head_w: Var,
    pub head_b: Var,
    /// Trainable leaves in [`ModelParams::trainable_mut`] order.
    pub order: Vec<Var>,
}

fn conv(c_out: usize, c_in: usize, k: usize, bias: bool, stride: usize) -> Result<ConvParams> {
    Ok(ConvParams {
        weight: Tensor::zeros(&[c_out, c_in, k])?,
        bias: if bias { Some(Tensor::zeros(&[c_out])?) } else { None },
        stride,
    })
}

fn lin(d_out: usize, d_in: usize) -> Result<LinearParams> {
    Ok(LinearParams {
        weight: Tensor::zeros(&[d_out, d_in])?,
        bias: Tensor::zeros(&[d_out])?,
    })
}

impl LayerParams {
    fn zeros(cfg: &IncepSEConfig, i: usize) -> Result<Self> {
        let c_in = cfg.layer_in_channels(i);
        let branch = cfg.layer_branch_channels(i);
        let stride = cfg.layer_stride(i);
        let bneck = cfg.bottleneck_channels;
        let hidden = cfg.se_hidden();
        Ok(LayerParams {
            bottleneck: conv(bneck, c_in, 1, true, 1)?,
            se: SEParams {
                fc1: lin(hidden, bneck)?,
                fc2: lin(bneck, hidden)?,
            },
            branch_convs: cfg
                .kernel_sizes
                .iter()
                .map(|&k| conv(branch, bneck, k, false, stride))
                .collect::<Result<_>>()?,
            pool_conv: conv(branch, c_in, cfg.pool_branch_kernel, false, stride)?,
            skip_conv: conv(cfg.layer_out_channels(i), c_in, cfg.skip_kernel, true, stride)?,
            bn: BatchNormState::new(cfg.layer_out_channels(i))?,
            stride,
        })
    }
}

impl ModelParams {
    /// Zero-valued parameters of the right shapes (BN gamma = 1).
    pub fn zeros(config: &IncepSEConfig) -> Result<Self> {
        config.validate()?;
        let layers = (0..config.depth)
            .map(|i| LayerParams::zeros(config, i))
            .collect::<Result<_>>()?;
        Ok(ModelParams {
            config: config.clone(),
            layers,
            head: lin(config.num_classes, config.final_channels())?,
        })
    }

    /// Kaiming-uniform weights (fan-in, ReLU gain), zero biases, unit BN gammas.
    pub fn init(config: &IncepSEConfig, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for nt in params.named_tensors_mut() {
            if !nt.trainable || !nt.name.ends_with(".weight") {
                continue;
            }
            let shape = nt.tensor.shape();
            let fan_in: usize = shape[1..].iter().product();
            let bound = kaiming_bound(fan_in);
            for v in nt.tensor.data_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(params)
    }

    pub fn named_tensors<'a>(&'a self) -> Vec<NamedTensor<'a>> {
        let mut out = Vec::new();
        let mut push = |name: String, tensor: &'a Tensor, trainable: bool| {
            out.push(NamedTensor { name, tensor, trainable });
        };
        for (i, l) in self.layers.iter().enumerate() {
            let p = format!("layers.{i}");
            push(format!("{p}.bottleneck.weight"), &l.bottleneck.weight, true);
            if let Some(b) = &l.bottleneck.bias {
                push(format!("{p}.bottleneck.bias"), b, true);
            }
            push(format!("{p}.se.fc1.weight"), &l.se.fc1.weight, true);
            push(format!("{p}.se.fc1.bias"), &l.se.fc1.bias, true);
            push(format!("{p}.se.fc2.weight"), &l.se.fc2.weight, true);
            push(format!("{p}.se.fc2.bias"), &l.se.fc2.bias, true);
            for (j, c) in l.branch_convs.iter().enumerate() {
                push(format!("{p}.branch{j}.weight"), &c.weight, true);
            }
            push(format!("{p}.pool_conv.weight"), &l.pool_conv.weight, true);
            push(format!("{p}.skip_conv.weight"), &l.skip_conv.weight, true);
            if let Some(b) = &l.skip_conv.bias {
                push(format!("{p}.skip_conv.bias"), b, true);
            }
            push(format!("{p}.bn.gamma"), &l.bn.gamma, true);
            push(format!("{p}.bn.beta"), &l.bn.beta, true);
            push(format!("{p}.bn.running_mean"), &l.bn.running_mean, false);
            push(format!("{p}.bn.running_var"), &l.bn.running_var, false);
        }
        push("head.weight".into(), &self.head.weight, true);
        push("head.bias".into(), &self.head.bias, true);
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<NamedTensorMut<'_>> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            let p = format!("layers.{i}");
            let mut push = |name: String, tensor, trainable| out.push(NamedTensorMut { name, tensor, trainable });
            push(format!("{p}.bottleneck.weight"), &mut l.bottleneck.weight, true);
            if let Some(b) = &mut l.bottleneck.bias {
                push(format!("{p}.bottleneck.bias"), b, true);
            }
            push(format!("{p}.se.fc1.weight"), &mut l.se.fc1.weight, true);
            push(format!("{p}.se.fc1.bias"), &mut l.se.fc1.bias, true);
            push(format!("{p}.se.fc2.weight"), &mut l.se.fc2.weight, true);
            push(format!("{p}.se.fc2.bias"), &mut l.se.fc2.bias, true);
            for (j, c) in l.branch_convs.iter_mut().enumerate() {
                push(format!("{p}.branch{j}.weight"), &mut c.weight, true);
            }
            push(format!("{p}.pool_conv.weight"), &mut l.pool_conv.weight, true);
            push(format!("{p}.skip_conv.weight"), &mut l.skip_conv.weight, true);
            if let Some(b) = &mut l.skip_conv.bias {
                push(format!("{p}.skip_conv.bias"), b, true);
            }
            push(format!("{p}.bn.gamma"), &mut l.bn.gamma, true);
            push(format!("{p}.bn.beta"), &mut l.bn.beta, true);
            push(format!("{p}.bn.running_mean"), &mut l.bn.running_mean, false);
            push(format!("{p}.bn.running_var"), &mut l.bn.running_var, false);
        }
        out.push(NamedTensorMut {
            name: "head.weight".into(),
            tensor: &mut self.head.weight,
            trainable: true,
        });
        out.push(NamedTensorMut {
            name: "head.bias".into(),
            tensor: &mut self.head.bias,
            trainable: true,
        });
        out
    }

    pub fn trainable(&self) -> Vec<&Tensor> {
        self.named_tensors()
            .into_iter()
            .filter(|n| n.trainable)
            .map(|n| n.tensor)
            .collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        self.named_tensors_mut()
            .into_iter()
            .filter(|n| n.trainable)
            .map(|n| n.tensor)
            .collect()
    }

    pub fn num_trainable(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    /// Registers every trainable tensor as a tape leaf.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Result<BoundModel> {
        let vars: Vec<Var> = self
            .trainable()
            .into_iter()
            .map(|t| tape.leaf(t.clone(), requires_grad))
            .collect();
        self.bind_vars(&vars)
    }

    /// Uses existing tape vars, given in [`ModelParams::trainable`] order, as
    /// the model's parameters.
    pub fn bind_vars(&self, vars: &[Var]) -> Result<BoundModel> {
        let names: Vec<String> = self
            .named_tensors()
            .into_iter()
            .filter(|n| n.trainable)
            .map(|n| n.name)
            .collect();
        if names.len() != vars.len() {
            return Err(Error::invalid(format!(
                "model has {} trainable tensors, got {} vars",
                names.len(),
                vars.len()
            )));
        }
        let by_name: HashMap<String, Var> = names.into_iter().zip(vars.iter().copied()).collect();
        let order = vars.to_vec();
        let get = |name: String| -> Result<Var> {
            by_name
                .get(&name)
                .copied()
                .ok_or_else(|| Error::invalid(format!("missing parameter {name}")))
        };
        let layers = (0..self.layers.len())
            .map(|i| self.layer_vars(i, &get))
            .collect::<Result<_>>()?;
        Ok(BoundModel {
            layers,
            head_w: get("head.weight".into())?,
            head_b: get("head.bias".into())?,
            order,
        })
    }

    /// Like [`ModelParams::bind_vars`] for layer `i` alone; `vars` follow
    /// that layer's trainable tensors in declaration order.
    pub fn bind_vars_for_layer(&self, i: usize, vars: &[Var]) -> Result<LayerVars> {
        let prefix = format!("layers.{i}.");
        let names: Vec<String> = self
            .named_tensors()
            .into_iter()
            .filter(|n| n.trainable && n.name.starts_with(&prefix))
            .map(|n| n.name)
            .collect();
        if names.is_empty() || names.len() != vars.len() {
            return Err(Error::invalid(format!(
                "layer {i} has {} trainable tensors, got {} vars",
                names.len(),
                vars.len()
            )));
        }
        let by_name: HashMap<String, Var> = names.into_iter().zip(vars.iter().copied()).collect();
        self.layer_vars(i, &|name: String| {
            by_name
                .get(&name)
                .copied()
                .ok_or_else(|| Error::invalid(format!("missing parameter {name}")))
        })
    }

    fn layer_vars(&self, i: usize, get: &dyn Fn(String) -> Result<Var>) -> Result<LayerVars> {
        let p = format!("layers.{i}");
        Ok(LayerVars {
            bottleneck_w: get(format!("{p}.bottleneck.weight"))?,
            bottleneck_b: get(format!("{p}.bottleneck.bias"))?,
            se_w1: get(format!("{p}.se.fc1.weight"))?,
            se_b1: get(format!("{p}.se.fc1.bias"))?,
            se_w2: get(format!("{p}.se.fc2.weight"))?,
            se_b2: get(format!("{p}.se.fc2.bias"))?,
            branch_w: (0..self.layers[i].branch_convs.len())
                .map(|j| get(format!("{p}.branch{j}.weight")))
                .collect::<Result<_>>()?,
            pool_w: get(format!("{p}.pool_conv.weight"))?,
            skip_w: get(format!("{p}.skip_conv.weight"))?,
            skip_b: get(format!("{p}.skip_conv.bias"))?,
            bn_gamma: get(format!("{p}.bn.gamma"))?,
            bn_beta: get(format!("{p}.bn.beta"))?,
        })
    }

    /// Folds one training step's batch statistics into the running averages.
    pub fn apply_bn_stats(&mut self, stats: &[BatchStats]) -> Result<()> {
        if stats.len() != self.layers.len() {
            return Err(Error::invalid(format!(
                "expected {} batch-norm stat sets, got {}",
                self.layers.len(),
                stats.len()
            )));
        }
        for (l, s) in self.layers.iter_mut().zip(stats) {
            l.bn.update_running(s);
        }
        Ok(())
    }
}

/// Uniform bound giving std `sqrt(2 / fan_in)`.
pub fn kaiming_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

pub fn kaiming_std(fan_in: usize) -> f64 {
    (2.0 / fan_in as f64).sqrt()
}
