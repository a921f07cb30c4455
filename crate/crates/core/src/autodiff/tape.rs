use std::fmt::Debug;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// A differentiable primitive.
///
/// `backward` receives the input values, the forward output and the gradient
/// of the loss with respect to that output. It returns one entry per input;
/// entries for inputs with `needs[i] == false` may be `None`.
pub trait Operation: Debug {
    fn name(&self) -> &'static str;

    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>>;
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    inputs: Vec<usize>,
    op: Option<Box<dyn Operation>>,
    requires_grad: bool,
}

/// Wengert list for one forward pass.
///
/// Nodes are appended in execution order, so input ids always precede the
/// node that consumes them. The tape is consumed by [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    check_finite: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every recorded value is checked for NaN/Inf; `record` fails on the first hit.
    pub fn with_finite_check(mut self) -> Self {
        self.check_finite = true;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            inputs: Vec::new(),
            op: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Builds a tensor and registers it as a leaf.
    pub fn build_tensor(&mut self, shape: &[usize], values: Vec<f64>, requires_grad: bool) -> Result<Var> {
        let t = Tensor::new(shape, values)?;
        Ok(self.leaf(t, requires_grad))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn check(&self, v: Var) -> Result<()> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::UnknownNode(v.0))
        }
    }

    /// Appends the result of `op` applied to `inputs`.
    pub fn record(&mut self, op: Box<dyn Operation>, inputs: &[Var], value: Tensor) -> Result<Var> {
        for &v in inputs {
            self.check(v)?;
        }
        if self.check_finite && !value.all_finite() {
            return Err(Error::NonFinite(op.name()));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            inputs: inputs.iter().map(|v| v.0).collect(),
            op: Some(op),
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Reverse sweep from a one-element `loss`.
    ///
    /// Gradients are summed where a value fans out. Every leaf created with
    /// `requires_grad` gets an entry, zero when the loss does not depend on it.
    pub fn backward(self, loss: Var) -> Result<GradientMap> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        self.check(loss)?;
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.len() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }

        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::from_parts_unchecked(
            loss_value.shape().to_vec(),
            vec![1.0],
        ));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            let Some(op) = &node.op else { continue };
            if !node.requires_grad {
                continue;
            }
            let Some(grad) = grads[id].take() else { continue };

            let inputs: Vec<&Tensor> = node.inputs.iter().map(|&i| &self.nodes[i].value).collect();
            let needs: Vec<bool> = node.inputs.iter().map(|&i| self.nodes[i].requires_grad).collect();
            let input_grads = op.backward(&inputs, &node.value, &grad, &needs)?;

            for ((&input, g), need) in node.inputs.iter().zip(input_grads).zip(needs) {
                let (Some(g), true) = (g, need) else { continue };
                debug_assert_eq!(g.shape(), self.nodes[input].value.shape(), "{}", op.name());
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }

        let mut out = Vec::with_capacity(n);
        for (node, g) in self.nodes.iter().zip(grads) {
            let is_grad_leaf = node.op.is_none() && node.requires_grad;
            out.push(match g {
                Some(g) => Some(g),
                None if is_grad_leaf => Some(node.value.zeros_like()),
                None => None,
            });
        }
        Ok(GradientMap { grads: out })
    }
}

/// Gradients keyed by tape node.
#[derive(Debug)]
pub struct GradientMap {
    grads: Vec<Option<Tensor>>,
}

impl GradientMap {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Moves the gradient out of the map.
    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
