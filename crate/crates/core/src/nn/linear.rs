use crate::autodiff::{axpy, dot, Operation, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug)]
struct LinearOp {
    batch: usize,
    d_in: usize,
    d_out: usize,
}

impl Operation for LinearOp {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let (bsz, din, dout) = (self.batch, self.d_in, self.d_out);
        let (x, w, dy) = (inputs[0].data(), inputs[1].data(), grad.data());
        // dx = dy · W
        let dx = needs[0].then(|| {
            let mut dx = vec![0.0; bsz * din];
            for b in 0..bsz {
                let dxr = &mut dx[b * din..(b + 1) * din];
                for o in 0..dout {
                    axpy(dy[b * dout + o], &w[o * din..(o + 1) * din], dxr);
                }
            }
            Tensor::from_parts_unchecked(vec![bsz, din], dx)
        });
        // dW = dyᵀ · x
        let dw = needs[1].then(|| {
            let mut dw = vec![0.0; dout * din];
            for b in 0..bsz {
                let xr = &x[b * din..(b + 1) * din];
                for o in 0..dout {
                    axpy(dy[b * dout + o], xr, &mut dw[o * din..(o + 1) * din]);
                }
            }
            Tensor::from_parts_unchecked(vec![dout, din], dw)
        });
        let db = needs[2].then(|| {
            let mut db = vec![0.0; dout];
            for b in 0..bsz {
                for (d, g) in db.iter_mut().zip(&dy[b * dout..(b + 1) * dout]) {
                    *d += g;
                }
            }
            Tensor::from_parts_unchecked(vec![dout], db)
        });
        Ok(vec![dx, dw, db])
    }
}

/// `x · Wᵀ + b` for `x: [B, in]`, `w: [out, in]`, `b: [out]`.
pub fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    for v in [x, w, b] {
        tape.check(v)?;
    }
    let (batch, d_in) = tape.value(x).dims2()?;
    let (d_out, w_in) = tape.value(w).dims2()?;
    if w_in != d_in || tape.shape(b) != [d_out] {
        return Err(Error::ShapeMismatch {
            op: "linear",
            left: vec![batch, d_in],
            right: vec![d_out, w_in],
        });
    }
    let (xs, ws, bs) = (tape.value(x).data(), tape.value(w).data(), tape.value(b).data());
    let mut out = Vec::with_capacity(batch * d_out);
    for r in 0..batch {
        let xr = &xs[r * d_in..(r + 1) * d_in];
        for o in 0..d_out {
            out.push(dot(xr, &ws[o * d_in..(o + 1) * d_in]) + bs[o]);
        }
    }
    let out = Tensor::from_parts_unchecked(vec![batch, d_out], out);
    tape.record(Box::new(LinearOp { batch, d_in, d_out }), &[x, w, b], out)
}

#[derive(Debug)]
struct ChannelScaleOp {
    len: usize,
}

impl Operation for ChannelScaleOp {
    fn name(&self) -> &'static str {
        "channel_scale"
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let len = self.len;
        let (x, s, dy) = (inputs[0].data(), inputs[1].data(), grad.data());
        let dx = needs[0].then(|| {
            let data = dy
                .chunks_exact(len)
                .zip(s)
                .flat_map(|(row, &w)| row.iter().map(move |g| g * w))
                .collect();
            Tensor::from_parts_unchecked(inputs[0].shape().to_vec(), data)
        });
        let ds = needs[1].then(|| {
            let data = dy.chunks_exact(len).zip(x.chunks_exact(len)).map(|(g, xr)| dot(g, xr)).collect();
            Tensor::from_parts_unchecked(inputs[1].shape().to_vec(), data)
        });
        Ok(vec![dx, ds])
    }
}

/// Multiplies every time step of channel `c` in batch item `b` by `scale[b, c]`.
pub fn channel_scale(tape: &mut Tape, x: Var, scale: Var) -> Result<Var> {
    tape.check(x)?;
    tape.check(scale)?;
    let (b, c, len) = tape.value(x).dims3()?;
    if tape.shape(scale) != [b, c] {
        return Err(Error::ShapeMismatch {
            op: "channel_scale",
            left: vec![b, c, len],
            right: tape.shape(scale).to_vec(),
        });
    }
    let s = tape.value(scale).data();
    let data = tape
        .value(x)
        .data()
        .chunks_exact(len)
        .zip(s)
        .flat_map(|(row, &w)| row.iter().map(move |v| v * w))
        .collect();
    let out = Tensor::from_parts_unchecked(vec![b, c, len], data);
    tape.record(Box::new(ChannelScaleOp { len }), &[x, scale], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_hand_example() {
        let mut t = Tape::new();
        let x = t.build_tensor(&[1, 2], vec![1.0, 2.0], false).unwrap();
        let eye = t.build_tensor(&[2, 2], vec![1.0, 0.0, 0.0, 1.0], false).unwrap();
        let w = t.build_tensor(&[2, 2], vec![1.0, 1.0, 0.0, 1.0], false).unwrap();
        let b = t.build_tensor(&[2], vec![0.0, 0.0], false).unwrap();
        let y = linear(&mut t, x, eye, b).unwrap();
        assert_eq!(t.value(y).data(), &[1.0, 2.0]);
        let y = linear(&mut t, x, w, b).unwrap();
        assert_eq!(t.value(y).data(), &[3.0, 2.0]);
    }

    #[test]
    fn dim_mismatch_is_error() {
        let mut t = Tape::new();
        let x = t.build_tensor(&[1, 3], vec![1.0; 3], false).unwrap();
        let w = t.build_tensor(&[2, 2], vec![1.0; 4], false).unwrap();
        let b = t.build_tensor(&[2], vec![0.0; 2], false).unwrap();
        assert!(matches!(linear(&mut t, x, w, b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn channel_scale_broadcasts_over_time() {
        let mut t = Tape::new();
        let x = t.build_tensor(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0], false).unwrap();
        let s = t.build_tensor(&[1, 2], vec![0.5, 2.0], false).unwrap();
        let y = channel_scale(&mut t, x, s).unwrap();
        assert_eq!(t.value(y).data(), &[0.5, 1.0, 6.0, 8.0]);
    }
}
