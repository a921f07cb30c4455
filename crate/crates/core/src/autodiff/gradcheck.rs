//! Central finite-difference checks against tape gradients.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute terms.
pub const REL_ERR_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(input index, flat element index)` of the worst element.
    pub worst: (usize, usize),
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares the tape gradient of `f` against central differences with step `h`
/// for every element of every input.
///
/// When a ReLU or max kink falls inside `[x - h, x + h]` the central difference
/// mixes both sides. The analytic gradient is the derivative on the side the
/// point lies on, so an element also passes if it matches the forward or the
/// backward difference.
///
/// `f` must build a one-element loss from the leaves it is handed and must be
/// deterministic.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| grads.get(v).cloned().ok_or(Error::UnknownNode(v.id())))
        .collect::<Result<_>>()?;

    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let loss = f(&mut tape, &vars)?;
        tape.value(loss)
            .item()
            .ok_or_else(|| Error::NonScalarLoss(tape.value(loss).shape().to_vec()))
    };

    let base = eval(inputs)?;
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for i in 0..inputs.len() {
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;

            let a = analytic[i].data()[j];
            let err = relative_error(a, (plus - minus) / (2.0 * h))
                .min(relative_error(a, (plus - base) / h))
                .min(relative_error(a, (base - minus) / h));
            if err > report.max_rel_err || report.checked == 0 {
                report.max_rel_err = err;
                report.worst = (i, j);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Loss that projects `out` onto fixed weights, so every output element
/// contributes to the gradient with an O(1) coefficient.
pub fn projection_loss(tape: &mut Tape, out: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    tape.sum_all(prod)
}
