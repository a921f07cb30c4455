use super::Mode;
use crate::autodiff::{Operation, Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Affine parameters and running statistics of a 1D batch norm.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(BatchNormState {
            gamma: Tensor::full(&[channels], 1.0)?,
            beta: Tensor::zeros(&[channels])?,
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::full(&[channels], 1.0)?,
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// `new = (1 − m)·old + m·batch`, using the unbiased batch variance.
    pub fn update_running(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, &b) in self.running_var.data_mut().iter_mut().zip(&stats.unbiased_var) {
            *r = (1.0 - m) * *r + m * b;
        }
    }
}

/// Per-channel statistics of one training batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub unbiased_var: Vec<f64>,
}

#[derive(Debug)]
struct BatchNormOp {
    /// Normalized input, same layout as x.
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    /// Batch statistics feed back into x's gradient only in train mode.
    train: bool,
    len: usize,
}

impl Operation for BatchNormOp {
    fn name(&self) -> &'static str {
        "batchnorm1d"
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let c_count = self.inv_std.len();
        let len = self.len;
        let batch = grad.len() / (c_count * len);
        let dy = grad.data();
        let gamma = inputs[1].data();

        let mut sum_dy = vec![0.0; c_count];
        let mut sum_dy_xhat = vec![0.0; c_count];
        for b in 0..batch {
            for c in 0..c_count {
                let off = (b * c_count + c) * len;
                let (dyr, xr) = (&dy[off..off + len], &self.xhat[off..off + len]);
                sum_dy[c] += dyr.iter().sum::<f64>();
                sum_dy_xhat[c] += dyr.iter().zip(xr).map(|(d, x)| d * x).sum::<f64>();
            }
        }

        let dx = needs[0].then(|| {
            let n = (batch * len) as f64;
            let mut dx = vec![0.0; dy.len()];
            for b in 0..batch {
                for c in 0..c_count {
                    let off = (b * c_count + c) * len;
                    let k = gamma[c] * self.inv_std[c];
                    for i in off..off + len {
                        dx[i] = if self.train {
                            k * (dy[i] - sum_dy[c] / n - self.xhat[i] * sum_dy_xhat[c] / n)
                        } else {
                            k * dy[i]
                        };
                    }
                }
            }
            Tensor::from_parts_unchecked(grad.shape().to_vec(), dx)
        });
        let dgamma = needs[1].then(|| Tensor::from_parts_unchecked(vec![c_count], sum_dy_xhat));
        let dbeta = needs[2].then(|| Tensor::from_parts_unchecked(vec![c_count], sum_dy));
        Ok(vec![dx, dgamma, dbeta])
    }
}

/// Batch normalization over `(B, L)` for each channel of `x[B, C, L]`.
///
/// Train mode normalizes with biased batch statistics and returns them so the
/// caller can update the running averages; eval mode uses `state`'s running
/// statistics only. `gamma` and `beta` are the tape handles of the state's
/// affine parameters.
pub fn batchnorm1d(
    tape: &mut Tape,
    x: Var,
    gamma: Var,
    beta: Var,
    state: &BatchNormState,
    mode: Mode,
) -> Result<(Var, Option<BatchStats>)> {
    tape.check(x)?;
    let (batch, channels, len) = tape.value(x).dims3()?;
    for (name, v) in [("gamma", gamma), ("beta", beta)] {
        tape.check(v)?;
        if tape.shape(v) != [channels] {
            return Err(Error::ShapeMismatch {
                op: if name == "gamma" { "batchnorm1d gamma" } else { "batchnorm1d beta" },
                left: vec![channels],
                right: tape.shape(v).to_vec(),
            });
        }
    }
    if state.channels() != channels {
        return Err(Error::ShapeMismatch {
            op: "batchnorm1d",
            left: vec![state.channels()],
            right: vec![batch, channels, len],
        });
    }
    let n = batch * len;
    let train = mode == Mode::Train;
    if train && n < 2 {
        return Err(Error::BatchTooSmall(n));
    }

    let xs = tape.value(x).data();
    let (mean, var, stats) = if train {
        let mut mean = vec![0.0; channels];
        let mut var = vec![0.0; channels];
        for c in 0..channels {
            let rows = (0..batch).map(|b| &xs[(b * channels + c) * len..][..len]);
            let m = rows.clone().flatten().sum::<f64>() / n as f64;
            let ss: f64 = rows.flatten().map(|v| (v - m) * (v - m)).sum();
            mean[c] = m;
            var[c] = ss / n as f64;
        }
        let unbiased = var.iter().map(|v| v * n as f64 / (n - 1) as f64).collect();
        let stats = BatchStats {
            mean: mean.clone(),
            unbiased_var: unbiased,
        };
        (mean, var, Some(stats))
    } else {
        (
            state.running_mean.data().to_vec(),
            state.running_var.data().to_vec(),
            None,
        )
    };

    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + state.eps).sqrt()).collect();
    let (g, bt) = (tape.value(gamma).data(), tape.value(beta).data());
    let mut xhat = vec![0.0; xs.len()];
    let mut out = vec![0.0; xs.len()];
    for b in 0..batch {
        for c in 0..channels {
            let off = (b * channels + c) * len;
            for i in off..off + len {
                let h = (xs[i] - mean[c]) * inv_std[c];
                xhat[i] = h;
                out[i] = g[c] * h + bt[c];
            }
        }
    }
    let out = Tensor::from_parts_unchecked(vec![batch, channels, len], out);
    let op = BatchNormOp {
        xhat,
        inv_std,
        train,
        len,
    };
    let y = tape.record(Box::new(op), &[x, gamma, beta], out)?;
    Ok((y, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn run(x: Tensor, state: &BatchNormState, mode: Mode) -> Result<(Tensor, Option<BatchStats>)> {
        let mut t = Tape::new();
        let xv = t.constant(x);
        let g = t.constant(state.gamma.clone());
        let b = t.constant(state.beta.clone());
        let (y, s) = batchnorm1d(&mut t, xv, g, b, state, mode)?;
        Ok((t.value(y).clone(), s))
    }

    #[test]
    fn constant_input_normalizes_to_zero() {
        let st = BatchNormState::new(2).unwrap();
        let (y, _) = run(Tensor::full(&[3, 2, 5], 7.0).unwrap(), &st, Mode::Train).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn train_mode_output_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (b, c, l) = (4, 3, 50);
        let data: Vec<f64> = (0..b * c * l).map(|i| rng.random_range(-2.0..5.0) + (i % 7) as f64).collect();
        let st = BatchNormState::new(c).unwrap();
        let (y, stats) = run(Tensor::new(&[b, c, l], data).unwrap(), &st, Mode::Train).unwrap();
        assert!(stats.is_some());
        for ch in 0..c {
            let vals: Vec<f64> = (0..b).flat_map(|bi| y.data()[(bi * c + ch) * l..][..l].to_vec()).collect();
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            assert!(m.abs() < 1e-9, "mean {m}");
            assert!((v - 1.0).abs() < 1e-4, "var {v}");
        }
    }

    #[test]
    fn eval_mode_with_unit_stats_is_identity() {
        let st = BatchNormState::new(2).unwrap();
        let x = Tensor::new(&[1, 2, 3], vec![0.5, -1.0, 2.0, 3.0, 0.0, -4.0]).unwrap();
        let (y, stats) = run(x.clone(), &st, Mode::Eval).unwrap();
        assert!(stats.is_none());
        let scale = 1.0 / (1.0 + BN_EPS).sqrt();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b * scale).abs() < 1e-15);
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn single_value_batch_is_rejected_in_train_mode() {
        let st = BatchNormState::new(1).unwrap();
        let x = Tensor::new(&[1, 1, 1], vec![2.0]).unwrap();
        assert!(matches!(run(x.clone(), &st, Mode::Train), Err(Error::BatchTooSmall(1))));
        assert!(run(x, &st, Mode::Eval).is_ok());
    }

    #[test]
    fn running_update_uses_momentum() {
        let mut st = BatchNormState::new(1).unwrap();
        st.update_running(&BatchStats {
            mean: vec![2.0],
            unbiased_var: vec![3.0],
        });
        assert!((st.running_mean.data()[0] - 0.2).abs() < 1e-15);
        assert!((st.running_var.data()[0] - (0.9 + 0.3)).abs() < 1e-15);
    }
}
