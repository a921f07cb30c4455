use rand::Rng;

use super::Mode;
use crate::autodiff::{zip_map, Operation, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug)]
struct DropoutOp {
    /// 0 for dropped elements, 1/(1−p) for survivors.
    mask: Tensor,
}

impl Operation for DropoutOp {
    fn name(&self) -> &'static str {
        "dropout"
    }

    fn backward(&self, _: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(zip_map(grad, &self.mask, |g, m| g * m))])
    }
}

/// Inverted dropout. Identity in eval mode and for `p == 0`.
pub fn dropout<R: Rng + ?Sized>(tape: &mut Tape, x: Var, p: f64, mode: Mode, rng: &mut R) -> Result<Var> {
    tape.check(x)?;
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!("dropout probability must be in [0, 1), got {p}")));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - p);
    let shape = tape.shape(x).to_vec();
    let mask: Vec<f64> = (0..tape.value(x).len())
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    let mask = Tensor::from_parts_unchecked(shape, mask);
    let out = zip_map(tape.value(x), &mask, |v, m| v * m);
    tape.record(Box::new(DropoutOp { mask }), &[x], out)
}
