use crate::autodiff::{sigmoid, Operation, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug)]
struct BceWithLogits {
    targets: Tensor,
}

impl Operation for BceWithLogits {
    fn name(&self) -> &'static str {
        "bce_with_logits"
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let g = grad.item().ok_or_else(|| Error::NonScalarLoss(grad.shape().to_vec()))? / self.targets.len() as f64;
        let data = inputs[0]
            .data()
            .iter()
            .zip(self.targets.data())
            .map(|(&z, &y)| g * (sigmoid(z) - y))
            .collect();
        Ok(vec![Some(Tensor::new(inputs[0].shape(), data)?)])
    }
}

/// Loss of one logit against a 0/1 target in the overflow-free form.
pub fn bce_term(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy over every logit.
pub fn bce_with_logits(tape: &mut Tape, logits: Var, targets: &Tensor) -> Result<Var> {
    let z = tape.value(logits);
    if z.shape() != targets.shape() {
        return Err(Error::ShapeMismatch {
            op: "bce_with_logits",
            left: z.shape().to_vec(),
            right: targets.shape().to_vec(),
        });
    }
    if let Some(&bad) = targets.data().iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::InvalidTarget(bad));
    }
    let total: f64 = z.data().iter().zip(targets.data()).map(|(&z, &y)| bce_term(z, y)).sum();
    let value = Tensor::scalar(total / targets.len() as f64);
    tape.record(
        Box::new(BceWithLogits {
            targets: targets.clone(),
        }),
        &[logits],
        value,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loss_of(z: f64, y: f64) -> f64 {
        let mut tape = Tape::new();
        let v = tape.leaf(Tensor::new(&[1, 1], vec![z]).unwrap(), true);
        let l = bce_with_logits(&mut tape, v, &Tensor::new(&[1, 1], vec![y]).unwrap()).unwrap();
        tape.value(l).item().unwrap()
    }

    #[test]
    fn closed_forms() {
        assert!((loss_of(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        let big = loss_of(100.0, 1.0);
        assert!((0.0..1e-40).contains(&big), "{big}");
        assert!(loss_of(1e4, 0.0).is_finite());
        assert!(loss_of(-1e4, 1.0).is_finite());
    }

    #[test]
    fn bad_target_is_rejected() {
        let mut tape = Tape::new();
        let v = tape.leaf(Tensor::new(&[1, 2], vec![0.0, 0.0]).unwrap(), true);
        let t = Tensor::new(&[1, 2], vec![0.0, 0.5]).unwrap();
        assert!(matches!(bce_with_logits(&mut tape, v, &t), Err(Error::InvalidTarget(_))));
    }

    #[test]
    fn gradient_is_sigmoid_minus_target() {
        let mut tape = Tape::new();
        let z = Tensor::new(&[2, 2], vec![-1.0, 0.5, 2.0, 0.0]).unwrap();
        let y = Tensor::new(&[2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let v = tape.leaf(z.clone(), true);
        let l = bce_with_logits(&mut tape, v, &y).unwrap();
        let g = tape.backward(l).unwrap();
        for ((&gi, &zi), &yi) in g.get(v).unwrap().data().iter().zip(z.data()).zip(y.data()) {
            assert!((gi - (sigmoid(zi) - yi) / 4.0).abs() < 1e-15);
        }
    }
}
