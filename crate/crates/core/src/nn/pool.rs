use super::conv::{same_out_len, same_pad_left};
use crate::autodiff::{Operation, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug)]
struct MaxPoolOp {
    /// Flat input index selected for every output element.
    argmax: Vec<usize>,
}

impl Operation for MaxPoolOp {
    fn name(&self) -> &'static str {
        "maxpool1d"
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let mut dx = inputs[0].zeros_like();
        let d = dx.data_mut();
        for (&src, &g) in self.argmax.iter().zip(grad.data()) {
            d[src] += g;
        }
        Ok(vec![Some(dx)])
    }
}

/// Same-padded max pooling over time. Padding is −∞ and never wins; ties go
/// to the leftmost position.
pub fn maxpool1d(tape: &mut Tape, x: Var, window: usize, stride: usize) -> Result<Var> {
    tape.check(x)?;
    if window == 0 || stride == 0 {
        return Err(Error::invalid("maxpool1d window and stride must be >= 1"));
    }
    let (b, c, len) = tape.value(x).dims3()?;
    let out_len = same_out_len(len, stride);
    let pad = same_pad_left(len, window, stride) as isize;
    let data = tape.value(x).data();
    let mut out = Vec::with_capacity(b * c * out_len);
    let mut argmax = Vec::with_capacity(b * c * out_len);
    for row in 0..b * c {
        let base = row * len;
        let xrow = &data[base..base + len];
        for t in 0..out_len {
            let start = (t * stride) as isize - pad;
            let lo = start.max(0) as usize;
            let hi = ((start + window as isize) as usize).min(len);
            let mut best = lo;
            for i in lo + 1..hi {
                if xrow[i] > xrow[best] {
                    best = i;
                }
            }
            out.push(xrow[best]);
            argmax.push(base + best);
        }
    }
    let out = Tensor::from_parts_unchecked(vec![b, c, out_len], out);
    tape.record(Box::new(MaxPoolOp { argmax }), &[x], out)
}

/// Mean over the time axis: `[B, C, L] -> [B, C]`.
pub fn global_avg_pool(tape: &mut Tape, x: Var) -> Result<Var> {
    tape.value(x).dims3()?;
    tape.mean(x, &[2])
}
