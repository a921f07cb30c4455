mod common;

use common::{max_abs_diff, naive_conv1d, rng, uniform};
use incepse::autodiff::{Tape, Tensor};
use incepse::data::TaskKind;
use incepse::model::{
    decode_checkpoint, encode_checkpoint, incepse_layer, kaiming_std, load_checkpoint, load_checkpoint_for,
    save_checkpoint, se_block, IncepSEConfig, ModelParams,
};
use incepse::nn::Mode;
use incepse::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_input(seed: u64, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, uniform(&mut rng(seed), n)).unwrap()
}

/// Parameter count written out from the layer recipe.
fn expected_param_count(cfg: &IncepSEConfig) -> usize {
    let bn = cfg.bottleneck_channels;
    let hidden = (bn / cfg.se_reduction).max(1);
    let ksum: usize = cfg.kernel_sizes.iter().sum();
    let mut total = 0;
    let mut c_in = cfg.input_channels;
    for i in 0..cfg.depth {
        let b = if i + 1 == cfg.depth { cfg.branch_channels * cfg.last_layer_multiplier } else { cfg.branch_channels };
        let out = b * (cfg.kernel_sizes.len() + 1);
        total += bn * c_in + bn; // bottleneck
        total += hidden * bn + hidden + bn * hidden + bn; // SE
        total += b * bn * ksum; // large kernels
        total += b * c_in * cfg.pool_branch_kernel;
        total += out * c_in * cfg.skip_kernel + out;
        total += 2 * out; // BN affine
        c_in = out;
    }
    total + cfg.num_classes * c_in + cfg.num_classes
}

#[test]
fn shape_law_for_every_task() {
    let counts: Vec<usize> = TaskKind::ALL.iter().map(|k| k.num_classes()).collect();
    assert_eq!(counts, vec![71, 44, 23, 5, 19, 12]);
    let x = random_input(3, &[2, 12, 1000]);
    for classes in counts {
        let cfg = IncepSEConfig::new(classes);
        let model = ModelParams::init(&cfg, 1).unwrap();
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false).unwrap();
        let xv = tape.constant(x.clone());
        let out = model.forward(&mut tape, &bound, xv, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(tape.shape(out.features), &[2, 256, 500]);
        assert_eq!(tape.shape(out.logits), &[2, classes]);
        assert!(tape.value(out.logits).all_finite());
    }
}

#[test]
fn parameter_count_matches_formula() {
    for kind in TaskKind::ALL {
        let cfg = IncepSEConfig::new(kind.num_classes());
        let model = ModelParams::zeros(&cfg).unwrap();
        assert_eq!(model.num_trainable(), expected_param_count(&cfg));
    }
    assert_eq!(ModelParams::zeros(&IncepSEConfig::new(71)).unwrap().num_trainable(), 1_033_251);
    let mini = IncepSEConfig::mini(2, 8);
    assert_eq!(ModelParams::zeros(&mini).unwrap().num_trainable(), expected_param_count(&mini));
}

#[test]
fn odd_lengths_round_up_through_the_strided_layer() {
    let cfg = IncepSEConfig::mini(3, 4);
    let model = ModelParams::init(&cfg, 2).unwrap();
    for len in [39, 40, 77, 101] {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false).unwrap();
        let xv = tape.constant(random_input(len as u64, &[1, 12, len]));
        let out = model.forward(&mut tape, &bound, xv, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(tape.shape(out.features)[2], len.div_ceil(2));
    }
}

#[test]
fn input_shorter_than_largest_kernel_is_rejected() {
    let model = ModelParams::init(&IncepSEConfig::mini(3, 4), 0).unwrap();
    let err = model.predict_logits(&random_input(0, &[1, 12, 38])).unwrap_err();
    assert!(matches!(err, Error::InputTooShort { length: 38, kernel: 39 }), "{err}");
    let err = model.predict_logits(&random_input(0, &[1, 11, 100])).unwrap_err();
    assert!(matches!(err, Error::ConfigMismatch { .. }), "{err}");
}

fn se_tensors(c: usize, hidden: usize, seed: u64) -> [Tensor; 4] {
    [
        random_input(seed, &[hidden, c]),
        random_input(seed + 1, &[hidden]),
        random_input(seed + 2, &[c, hidden]),
        random_input(seed + 3, &[c]),
    ]
}

#[test]
fn se_gates_lie_strictly_inside_unit_interval() {
    for seed in 0..20 {
        let mut tape = Tape::new();
        let x = tape.constant(random_input(seed, &[3, 32, 50]).clone());
        // large weights push the sigmoid toward its ends
        let p = se_tensors(32, 4, seed * 7).map(|t| {
            let data = t.data().iter().map(|v| v * 5.0).collect();
            Tensor::new(t.shape(), data).unwrap()
        });
        let v: Vec<_> = p.into_iter().map(|t| tape.constant(t)).collect();
        let out = se_block(&mut tape, x, v[0], v[1], v[2], v[3]).unwrap();
        assert_eq!(tape.shape(out.weights), &[3, 32]);
        assert!(tape.value(out.weights).data().iter().all(|&w| w > 0.0 && w < 1.0));
    }
}

#[test]
fn zeroed_second_linear_gives_half_gating() {
    let xt = random_input(9, &[2, 16, 30]);
    let mut tape = Tape::new();
    let x = tape.constant(xt.clone());
    let [w1, b1, _, _] = se_tensors(16, 2, 4);
    let w1 = tape.constant(w1);
    let b1 = tape.constant(b1);
    let w2 = tape.constant(Tensor::zeros(&[16, 2]).unwrap());
    let b2 = tape.constant(Tensor::zeros(&[16]).unwrap());
    let out = se_block(&mut tape, x, w1, b1, w2, b2).unwrap();
    assert!(tape.value(out.weights).data().iter().all(|&w| w == 0.5));
    let want: Vec<f64> = xt.data().iter().map(|v| 0.5 * v).collect();
    assert_eq!(tape.value(out.out).data(), &want[..]);
}

#[test]
fn init_is_deterministic_and_kaiming_scaled() {
    let cfg = IncepSEConfig::new(5);
    let a = ModelParams::init(&cfg, 11).unwrap();
    let b = ModelParams::init(&cfg, 11).unwrap();
    let c = ModelParams::init(&cfg, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    for nt in a.named_tensors() {
        let shape = nt.tensor.shape();
        if !nt.name.ends_with(".weight") || nt.tensor.len() < 500 {
            if nt.name.ends_with(".bias") || nt.name.ends_with(".beta") {
                assert!(nt.tensor.data().iter().all(|&v| v == 0.0), "{}", nt.name);
            }
            continue;
        }
        let fan_in: usize = shape[1..].iter().product();
        let n = nt.tensor.len() as f64;
        let mean = nt.tensor.data().iter().sum::<f64>() / n;
        let sd = (nt.tensor.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let want = kaiming_std(fan_in);
        assert!((sd - want).abs() / want < 0.2, "{}: {sd} vs {want}", nt.name);
    }
    for l in &a.layers {
        assert!(l.bn.gamma.data().iter().all(|&g| g == 1.0));
    }
}

#[test]
fn zero_bn_gamma_leaves_only_the_skip_path() {
    let mut cfg = IncepSEConfig::mini(2, 4);
    cfg.input_channels = 3;
    let mut model = ModelParams::init(&cfg, 5).unwrap();
    for l in &mut model.layers {
        l.bn.gamma = Tensor::zeros(l.bn.gamma.shape()).unwrap();
    }
    for (i, layer) in model.layers.iter().enumerate() {
        let c_in = cfg.layer_in_channels(i);
        let xt = random_input(i as u64, &[2, c_in, 41]);
        for mode in [Mode::Train, Mode::Eval] {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, false).unwrap();
            let x = tape.constant(xt.clone());
            let out = incepse_layer(&mut tape, x, layer, &bound.layers[i], mode).unwrap().out;
            let w = &layer.skip_conv.weight;
            let want = naive_conv1d(
                xt.data(),
                (2, c_in, 41),
                w.data(),
                (w.shape()[0], w.shape()[2]),
                layer.skip_conv.bias.as_ref().map(|b| b.data()),
                layer.stride,
            );
            assert!(max_abs_diff(tape.value(out).data(), &want) < 1e-12);
        }
    }
}

#[test]
fn eval_logits_do_not_depend_on_batch_mates() {
    let model = ModelParams::init(&IncepSEConfig::mini(3, 4), 8).unwrap();
    let batch = random_input(1, &[3, 12, 60]);
    let all = model.predict_logits(&batch).unwrap();
    for b in 0..3 {
        let one = Tensor::new(&[1, 12, 60], batch.data()[b * 720..(b + 1) * 720].to_vec()).unwrap();
        let single = model.predict_logits(&one).unwrap();
        assert!(max_abs_diff(single.data(), &all.data()[b * 3..(b + 1) * 3]) < 1e-12);
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let mut cfg = IncepSEConfig::mini(4, 4);
    cfg.dropout_p = 0.25;
    let mut model = ModelParams::init(&cfg, 3).unwrap();
    model.layers[0].bn.running_mean.data_mut()[0] = 0.1 + 0.2;
    model.layers[1].bn.running_var.data_mut()[3] = std::f64::consts::PI;
    save_checkpoint(&model, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, model);
    let x = random_input(2, &[2, 12, 64]);
    let (a, b) = (model.predict_logits(&x).unwrap(), back.predict_logits(&x).unwrap());
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert!(load_checkpoint_for(&path, 12, 4).is_ok());
    assert!(matches!(load_checkpoint_for(&path, 12, 5), Err(Error::ConfigMismatch { .. })));
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let model = ModelParams::init(&IncepSEConfig::mini(2, 4), 0).unwrap();
    let buf = encode_checkpoint(&model);
    assert!(matches!(decode_checkpoint(&buf[..buf.len() - 1]), Err(Error::Truncated)));
    assert!(matches!(decode_checkpoint(&buf[..3]), Err(Error::BadMagic)));
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(matches!(decode_checkpoint(&bad), Err(Error::BadMagic)));
    let mut bad = buf.clone();
    bad[8] = 99;
    assert!(matches!(decode_checkpoint(&bad), Err(Error::VersionMismatch { found: 99, .. })));
    let mut long = buf.clone();
    long.push(0);
    assert!(decode_checkpoint(&long).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn any_truncation_is_an_error(cut in 0usize..1_000_000) {
        let model = ModelParams::init(&IncepSEConfig::mini(2, 2), 0).unwrap();
        let buf = encode_checkpoint(&model);
        let cut = cut % buf.len();
        prop_assert!(decode_checkpoint(&buf[..cut]).is_err());
    }
}
