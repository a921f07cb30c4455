//! Finite-difference gradient suites at three scales: single ops, one
//! IncepSE layer, and a depth-2 model end to end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::gradcheck::{check_gradients, projection_loss, GradCheckReport, DEFAULT_STEP};
use crate::autodiff::{Reduction, Tape, Tensor, Var};
use crate::error::Result;
use crate::model::{incepse_layer, IncepSEConfig, ModelParams};
use crate::nn::{
    batchnorm1d, channel_scale, conv1d, dropout, global_avg_pool, linear, maxpool1d, BatchNormState, Mode,
};
use crate::training::bce_with_logits;

pub const OP_TOLERANCE: f64 = 1e-4;
pub const LAYER_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Op,
    Layer,
    Mini,
}

impl std::str::FromStr for Scale {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "op" => Ok(Scale::Op),
            "layer" => Ok(Scale::Layer),
            "mini" => Ok(Scale::Mini),
            _ => Err(crate::Error::invalid(format!("unknown gradcheck scale {s:?} (op, layer, mini)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub report: GradCheckReport,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.report.max_rel_err < self.tolerance
    }
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("valid shape")
}

struct Runner {
    rng: ChaCha8Rng,
    out: Vec<CheckResult>,
}

impl Runner {
    /// Checks `f` on random inputs of the given shapes, projecting the op
    /// output onto random weights.
    fn check<F>(&mut self, name: &str, tol: f64, shapes: &[&[usize]], f: F) -> Result<()>
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    {
        let inputs: Vec<Tensor> = shapes.iter().map(|s| random_tensor(&mut self.rng, s)).collect();
        self.check_inputs(name, tol, &inputs, f)
    }

    fn check_inputs<F>(&mut self, name: &str, tol: f64, inputs: &[Tensor], f: F) -> Result<()>
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    {
        // probe the output shape once to draw projection weights
        let mut probe = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| probe.leaf(t.clone(), false)).collect();
        let out = f(&mut probe, &vars)?;
        let weights = random_tensor(&mut self.rng, probe.shape(out));
        let report = check_gradients(inputs, DEFAULT_STEP, |tape, vars| {
            let out = f(tape, vars)?;
            projection_loss(tape, out, &weights)
        })?;
        self.out.push(CheckResult {
            name: name.to_string(),
            report,
            tolerance: tol,
        });
        Ok(())
    }
}

/// Every differentiable primitive on small random inputs.
pub fn op_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut r = Runner {
        rng: ChaCha8Rng::seed_from_u64(seed),
        out: Vec::new(),
    };
    let tol = OP_TOLERANCE;
    r.check("add", tol, &[&[2, 3, 4], &[2, 3, 4]], |t, v| t.add(v[0], v[1]))?;
    r.check("mul", tol, &[&[2, 3, 4], &[2, 3, 4]], |t, v| t.mul(v[0], v[1]))?;
    r.check("scale", tol, &[&[3, 5]], |t, v| t.scale(v[0], -1.7))?;
    r.check("add_scalar", tol, &[&[3, 5]], |t, v| t.add_scalar(v[0], 0.3))?;
    r.check("relu", tol, &[&[4, 6]], |t, v| t.relu(v[0]))?;
    r.check("sigmoid", tol, &[&[4, 6]], |t, v| t.sigmoid(v[0]))?;
    r.check("matmul", tol, &[&[3, 4], &[4, 5]], |t, v| t.matmul(v[0], v[1]))?;
    for axis in 0..3 {
        r.check(&format!("sum[axis {axis}]"), tol, &[&[2, 3, 4]], move |t, v| {
            t.reduce(Reduction::Sum, v[0], &[axis])
        })?;
        r.check(&format!("mean[axis {axis}]"), tol, &[&[2, 3, 4]], move |t, v| {
            t.reduce(Reduction::Mean, v[0], &[axis])
        })?;
    }
    r.check("sum_all", tol, &[&[2, 3, 4]], |t, v| t.sum_all(v[0]))?;
    r.check("concat[axis 1]", tol, &[&[2, 3, 5], &[2, 1, 5], &[2, 2, 5]], |t, v| {
        t.concat(v, 1)
    })?;
    r.check("concat[axis 2]", tol, &[&[2, 3, 2], &[2, 3, 4]], |t, v| t.concat(v, 2))?;
    for (k, stride, bias) in [(1, 1, true), (3, 1, false), (9, 2, true), (4, 2, false), (19, 1, true), (39, 2, false)] {
        let len = 2 * k.max(5) + 1;
        let name = format!("conv1d[k={k}, stride={stride}, bias={bias}]");
        if bias {
            r.check(&name, tol, &[&[2, 3, len], &[4, 3, k], &[4]], move |t, v| {
                conv1d(t, v[0], v[1], Some(v[2]), stride)
            })?;
        } else {
            r.check(&name, tol, &[&[2, 3, len], &[4, 3, k]], move |t, v| {
                conv1d(t, v[0], v[1], None, stride)
            })?;
        }
    }
    for stride in [1, 2] {
        r.check(&format!("maxpool1d[3, stride={stride}]"), tol, &[&[2, 3, 11]], move |t, v| {
            maxpool1d(t, v[0], 3, stride)
        })?;
    }
    r.check("global_avg_pool", tol, &[&[2, 3, 7]], |t, v| global_avg_pool(t, v[0]))?;
    r.check("linear", tol, &[&[3, 5], &[4, 5], &[4]], |t, v| linear(t, v[0], v[1], v[2]))?;
    r.check("channel_scale", tol, &[&[2, 3, 6], &[2, 3]], |t, v| channel_scale(t, v[0], v[1]))?;
    let state = BatchNormState::new(3)?;
    r.check("batchnorm1d[train]", tol, &[&[4, 3, 5], &[3], &[3]], |t, v| {
        Ok(batchnorm1d(t, v[0], v[1], v[2], &state, Mode::Train)?.0)
    })?;
    let mut eval_state = BatchNormState::new(3)?;
    eval_state.running_mean = Tensor::new(&[3], vec![0.2, -0.1, 0.4])?;
    eval_state.running_var = Tensor::new(&[3], vec![0.5, 1.5, 2.0])?;
    r.check("batchnorm1d[eval]", tol, &[&[4, 3, 5], &[3], &[3]], |t, v| {
        Ok(batchnorm1d(t, v[0], v[1], v[2], &eval_state, Mode::Eval)?.0)
    })?;
    r.check("dropout[p=0.3]", tol, &[&[3, 4, 5]], |t, v| {
        // same mask on every evaluation
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        dropout(t, v[0], 0.3, Mode::Train, &mut rng)
    })?;
    let targets = Tensor::new(&[3, 4], (0..12).map(|i| (i % 3 == 0) as u8 as f64).collect())?;
    let logits = random_tensor(&mut r.rng, &[3, 4]);
    let report = check_gradients(&[logits], DEFAULT_STEP, |t, v| bce_with_logits(t, v[0], &targets))?;
    r.out.push(CheckResult {
        name: "bce_with_logits".into(),
        report,
        tolerance: tol,
    });
    Ok(r.out)
}

/// One full IncepSE layer in train mode, every parameter and the input.
pub fn layer_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut r = Runner {
        rng: ChaCha8Rng::seed_from_u64(seed),
        out: Vec::new(),
    };
    let mut cfg = IncepSEConfig::mini(2, 4);
    cfg.input_channels = 3;
    let model = ModelParams::init(&cfg, seed)?;
    for (i, layer) in model.layers.iter().enumerate() {
        let params = model_layer_tensors(&model, i);
        let x = random_tensor(&mut r.rng, &[2, cfg.layer_in_channels(i), 48]);
        let mut inputs = vec![x];
        inputs.extend(params);
        r.check_inputs(
            &format!("incepse_layer[{i}, stride={}]", layer.stride),
            LAYER_TOLERANCE,
            &inputs,
            |t, v| {
                let bound = model.bind_vars_for_layer(i, &v[1..])?;
                Ok(incepse_layer(t, v[0], layer, &bound, Mode::Train)?.out)
            },
        )?;
    }
    Ok(r.out)
}

fn model_layer_tensors(model: &ModelParams, layer: usize) -> Vec<Tensor> {
    let prefix = format!("layers.{layer}.");
    model
        .named_tensors()
        .into_iter()
        .filter(|n| n.trainable && n.name.starts_with(&prefix))
        .map(|n| n.tensor.clone())
        .collect()
}

/// Depth-2 model, batch 2, length 48: input plus every trainable tensor
/// through BCE loss.
pub fn mini_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = IncepSEConfig::mini(3, 4);
    let model = ModelParams::init(&cfg, seed)?;
    let x = random_tensor(&mut rng, &[2, cfg.input_channels, 48]);
    let targets = Tensor::new(&[2, 3], vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0])?;
    let mut inputs = vec![x];
    inputs.extend(model.trainable().into_iter().cloned());
    let report = check_gradients(&inputs, DEFAULT_STEP, |t, v| {
        let bound = model.bind_vars(&v[1..])?;
        let mut drop_rng = ChaCha8Rng::seed_from_u64(0);
        let out = model.forward(t, &bound, v[0], Mode::Train, &mut drop_rng)?;
        bce_with_logits(t, out.logits, &targets)
    })?;
    Ok(vec![CheckResult {
        name: format!("mini model[depth 2, {} params]", model.num_trainable()),
        report,
        tolerance: LAYER_TOLERANCE,
    }])
}

pub fn run_suite(scale: Scale, seed: u64) -> Result<Vec<CheckResult>> {
    match scale {
        Scale::Op => op_suite(seed),
        Scale::Layer => layer_suite(seed),
        Scale::Mini => mini_suite(seed),
    }
}
