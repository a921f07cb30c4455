use incepse::autodiff::gradcheck::{check_gradients, relative_error, DEFAULT_STEP};
use incepse::autodiff::{Operation, Reduction, Tape, Tensor};
use incepse::verify::{layer_suite, mini_suite, op_suite, LAYER_TOLERANCE, OP_TOLERANCE};
use incepse::Result;
use proptest::prelude::*;

fn assert_all_pass(results: &[incepse::verify::CheckResult]) {
    for r in results {
        assert!(r.passed(), "{} rel err {:.3e} at {:?}", r.name, r.report.max_rel_err, r.report.worst);
    }
}

#[test]
fn every_primitive_passes() {
    for seed in [1, 2] {
        let res = op_suite(seed).unwrap();
        assert!(res.iter().all(|r| r.tolerance == OP_TOLERANCE));
        assert!(res.len() >= 25);
        assert_all_pass(&res);
    }
}

#[test]
fn incepse_layers_pass() {
    for seed in 1..=3 {
        let res = layer_suite(seed).unwrap();
        assert!(res.iter().any(|r| r.name.contains("stride=2")));
        assert!(res.iter().all(|r| r.tolerance == LAYER_TOLERANCE));
        assert_all_pass(&res);
    }
}

#[test]
fn mini_model_all_parameters_pass() {
    let res = mini_suite(1).unwrap();
    assert_all_pass(&res);
    // input plus every trainable tensor was perturbed
    assert!(res[0].report.checked > 5000);
}

/// x², but with a backward that returns 3x.
#[derive(Debug)]
struct BadSquare;

impl Operation for BadSquare {
    fn name(&self) -> &'static str {
        "bad_square"
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let data = inputs[0].data().iter().zip(grad.data()).map(|(x, g)| 3.0 * x * g).collect();
        Ok(vec![Some(Tensor::new(inputs[0].shape(), data)?)])
    }
}

#[test]
fn wrong_gradient_is_caught() {
    let x = Tensor::new(&[4], vec![0.5, -1.0, 2.0, 0.3]).unwrap();
    let report = check_gradients(&[x], DEFAULT_STEP, |t, v| {
        let sq: Vec<f64> = t.value(v[0]).data().iter().map(|a| a * a).collect();
        let y = t.record(Box::new(BadSquare), &[v[0]], Tensor::new(&[4], sq)?)?;
        t.sum_all(y)
    })
    .unwrap();
    assert!(report.max_rel_err > 0.3, "{report:?}");
}

#[test]
fn relu_kink_inside_the_stencil_is_tolerated() {
    // 0.3h from the kink: the central difference straddles it
    let x = Tensor::new(&[2], vec![0.3 * DEFAULT_STEP, -0.3 * DEFAULT_STEP]).unwrap();
    let report = check_gradients(&[x], DEFAULT_STEP, |t, v| {
        let r = t.relu(v[0])?;
        t.sum_all(r)
    })
    .unwrap();
    assert!(report.max_rel_err < 1e-8, "{report:?}");
}

#[test]
fn relative_error_uses_floor() {
    assert_eq!(relative_error(0.0, 0.0), 0.0);
    assert!((relative_error(1e-6, 0.0) - 1e-3).abs() < 1e-15);
    assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
}

#[test]
fn gradient_accumulates_over_reuse() {
    // y = x·x + x, dy/dx = 2x + 1
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap(), true);
    let sq = tape.mul(x, x).unwrap();
    let y = tape.add(sq, x).unwrap();
    let loss = tape.sum_all(y).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[3.0, -3.0, 2.0]);
}

#[test]
fn constants_get_no_gradient() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new(&[2], vec![1.0, 2.0]).unwrap(), true);
    let c = tape.constant(Tensor::new(&[2], vec![3.0, 4.0]).unwrap());
    let y = tape.mul(x, c).unwrap();
    let loss = tape.sum_all(y).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[3.0, 4.0]);
    assert!(g.get(c).is_none());
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros(&[2, 2]).unwrap(), true);
    let y = tape.relu(x).unwrap();
    assert!(tape.backward(y).is_err());
}

#[test]
fn finite_check_flags_nan() {
    let mut tape = Tape::new().with_finite_check();
    let x = tape.leaf(Tensor::new(&[2], vec![f64::MAX, 1.0]).unwrap(), true);
    assert!(tape.mul(x, x).is_err());
}

#[test]
fn bad_shapes_are_errors() {
    assert!(Tensor::new(&[2, 3], vec![0.0; 5]).is_err());
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::zeros(&[2, 3]).unwrap(), true);
    let b = tape.leaf(Tensor::zeros(&[3, 2]).unwrap(), true);
    assert!(tape.add(a, b).is_err());
    assert!(tape.matmul(a, a).is_err());
}

fn tensor_strategy() -> impl Strategy<Value = Tensor> {
    (1usize..4, 1usize..4, 1usize..6).prop_flat_map(|(a, b, c)| {
        prop::collection::vec(-3.0f64..3.0, a * b * c).prop_map(move |v| Tensor::new(&[a, b, c], v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradient_shape_matches_value(x in tensor_strategy()) {
        let mut tape = Tape::new();
        let v = tape.leaf(x.clone(), true);
        let s = tape.sigmoid(v).unwrap();
        let m = tape.reduce(Reduction::Mean, s, &[2]).unwrap();
        let loss = tape.sum_all(m).unwrap();
        let g = tape.backward(loss).unwrap();
        prop_assert_eq!(g.get(v).unwrap().shape(), x.shape());
    }

    #[test]
    fn backward_is_linear_in_the_loss(x in tensor_strategy(), k in -4.0f64..4.0) {
        let grad = |scale: f64| {
            let mut tape = Tape::new();
            let v = tape.leaf(x.clone(), true);
            let s = tape.sigmoid(v).unwrap();
            let p = tape.mul(s, v).unwrap();
            let l = tape.sum_all(p).unwrap();
            let l = tape.scale(l, scale).unwrap();
            tape.backward(l).unwrap().get(v).unwrap().clone()
        };
        let (g1, gk) = (grad(1.0), grad(k));
        for (a, b) in g1.data().iter().zip(gk.data()) {
            prop_assert!((a * k - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn sum_over_all_axes_matches_sum_all(x in tensor_strategy()) {
        let mut tape = Tape::new();
        let v = tape.leaf(x.clone(), false);
        let a = tape.reduce(Reduction::Sum, v, &[0, 1, 2]).unwrap();
        let b = tape.sum_all(v).unwrap();
        let (a, b) = (tape.value(a).data()[0], tape.value(b).item().unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}
