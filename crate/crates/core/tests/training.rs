use incepse::autodiff::{Tape, Tensor};
use incepse::data::{make_batch, synth_dataset, SynthSpec};
use incepse::model::{IncepSEConfig, ModelParams};
use incepse::training::{
    bce_term, bce_with_logits, clip_global_norm, fit, global_norm, AdamW, OneCycle, Plateau, SchedulerConfig,
    TrainConfig, TrainReport, Trainer, BEST_CHECKPOINT,
};
use incepse::data::TaskKind;
use proptest::prelude::*;

fn grads_strategy() -> impl Strategy<Value = Vec<Tensor>> {
    prop::collection::vec(
        (1usize..20, -6i32..4).prop_flat_map(|(n, exp)| {
            prop::collection::vec(-1.0f64..1.0, n)
                .prop_map(move |v| Tensor::new(&[v.len()], v.iter().map(|x| x * 10f64.powi(exp)).collect()).unwrap())
        }),
        1..6,
    )
}

fn flat(ts: &[Tensor]) -> Vec<f64> {
    ts.iter().flat_map(|t| t.data().iter().copied()).collect()
}

proptest! {
    #[test]
    fn clipping_caps_norm_and_keeps_direction(grads in grads_strategy()) {
        let before = flat(&grads);
        let mut clipped = grads.clone();
        let out = clip_global_norm(&mut clipped, 0.1).unwrap();
        let after = flat(&clipped);
        prop_assert_eq!(out.norm, global_norm(&grads));
        if out.norm > 0.1 {
            prop_assert!(global_norm(&clipped) <= 0.1 + 1e-9);
            let dot: f64 = before.iter().zip(&after).map(|(a, b)| a * b).sum();
            let na = before.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nb = after.iter().map(|b| b * b).sum::<f64>().sqrt();
            prop_assert!(dot / (na * nb) >= 1.0 - 1e-12);
        } else {
            prop_assert_eq!(out.scale, 1.0);
            prop_assert_eq!(before, after);
        }
    }

    #[test]
    fn bce_is_stable_and_nonnegative(z in -800.0f64..800.0, y in 0u8..2) {
        let l = bce_term(z, y as f64);
        prop_assert!(l.is_finite() && l >= 0.0);
        if (z > 0.0) == (y == 1) && z.abs() > 40.0 {
            prop_assert!(l < 1e-17);
        }
    }
}

#[test]
fn adamw_matches_scalar_recurrence() {
    let mut p = Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap();
    let mut opt = AdamW::new([&p]);
    let (lr, wd) = (1e-2, 1e-4);
    let grads = [[0.3, -0.1, 0.0], [-0.2, 0.4, 1.0], [0.05, 0.05, -3.0]];
    let mut want = [0.5, -1.0, 2.0];
    let (mut m, mut v) = ([0.0; 3], [0.0; 3]);
    for (t, g) in grads.iter().enumerate() {
        let t = t as i32 + 1;
        for i in 0..3 {
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
            let mh = m[i] / (1.0 - 0.9f64.powi(t));
            let vh = v[i] / (1.0 - 0.999f64.powi(t));
            want[i] -= lr * (mh / (vh.sqrt() + 1e-8) + wd * want[i]);
        }
        opt.update(&mut [&mut p], &[Tensor::new(&[3], g.to_vec()).unwrap()], lr, wd).unwrap();
    }
    for i in 0..3 {
        assert!((p.data()[i] - want[i]).abs() < 1e-15);
    }
    assert_eq!(opt.step, 3);
}

#[test]
fn decay_alone_shrinks_toward_zero() {
    let mut p = Tensor::new(&[2], vec![1.0, -2.0]).unwrap();
    let mut opt = AdamW::new([&p]);
    opt.update(&mut [&mut p], &[Tensor::zeros(&[2]).unwrap()], 0.1, 0.5).unwrap();
    assert_eq!(p.data(), &[0.95, -1.9]);
}

#[test]
fn bce_matches_direct_formula() {
    let z = Tensor::new(&[2, 2], vec![0.3, -1.2, 4.0, 0.0]).unwrap();
    let y = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let mut tape = Tape::new();
    let zv = tape.leaf(z.clone(), true);
    let l = bce_with_logits(&mut tape, zv, &y).unwrap();
    let got = tape.value(l).item().unwrap();
    let s = |x: f64| 1.0 / (1.0 + (-x).exp());
    let want: f64 = z
        .data()
        .iter()
        .zip(y.data())
        .map(|(&z, &y)| -(y * s(z).ln() + (1.0 - y) * (1.0 - s(z)).ln()))
        .sum::<f64>()
        / 4.0;
    assert!((got - want).abs() < 1e-14);
    let bad = Tensor::new(&[2, 2], vec![0.5, 0.0, 0.0, 1.0]).unwrap();
    let mut tape = Tape::new();
    let zv = tape.leaf(z, true);
    assert!(bce_with_logits(&mut tape, zv, &bad).is_err());
}

#[test]
fn one_cycle_closed_form() {
    let s = OneCycle::new(1e-2, 101);
    assert_eq!(s.lr_at(0), 1e-2 / 25.0);
    assert_eq!(s.peak_step(), 30);
    assert_eq!(s.lr_at(30), 1e-2);
    assert_eq!(s.lr_at(100), 1e-2 / 1e4);
    assert_eq!(s.lr_at(500), 1e-2 / 1e4);
    // half-way up the warm-up the cosine blend is the midpoint
    let mid = s.lr_at(15);
    assert!((mid - (1e-2 / 25.0 + 1e-2) / 2.0).abs() < 1e-15);
    let lrs: Vec<f64> = (0..101).map(|i| s.lr_at(i)).collect();
    assert!(lrs[..=30].windows(2).all(|w| w[1] > w[0]));
    assert!(lrs[30..].windows(2).all(|w| w[1] < w[0]));
    assert!(lrs.iter().all(|&l| l <= 1e-2));
}

#[test]
fn plateau_reduces_twice_on_flat_metric() {
    let lr0 = 1e-3;
    let mut p = Plateau::new(lr0, 0.3, 1).unwrap();
    for m in [0.90, 0.90, 0.90] {
        p.observe(m);
    }
    assert!((p.lr - lr0 * 0.09).abs() < 1e-18);
    assert_eq!(p.reductions, 2);
    let mut q = Plateau::new(lr0, 0.3, 2).unwrap();
    for m in [0.5, 0.6, 0.6, 0.7, 0.7, 0.7] {
        q.observe(m);
    }
    assert_eq!(q.reductions, 1);
}

fn tiny_config(epochs: usize, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::for_task(TaskKind::Super);
    cfg.scheduler = SchedulerConfig::one_cycle(epochs);
    cfg.epochs = epochs;
    cfg.batch_size = 16;
    cfg.dropout_p = 0.1;
    cfg.seed = seed;
    cfg
}

#[test]
fn single_batch_overfits() {
    let mut spec = SynthSpec::new(16, vec![0.5, 0.5]);
    spec.seconds = 2.0;
    spec.noise_sigma = 1.0;
    let data = synth_dataset(&spec, 3).unwrap();
    let batch = make_batch(&data, (0..16).collect());
    let model = ModelParams::init(&IncepSEConfig::mini(2, 8), 0).unwrap();
    let mut trainer = Trainer::new(model, None, 0.0, 0);
    let mut last = f64::INFINITY;
    for step in 0..500 {
        last = trainer.step(&batch, 1e-3).unwrap().loss;
        if last < 1e-2 {
            eprintln!("overfit in {} steps", step + 1);
            break;
        }
    }
    assert!(last < 1e-2, "loss {last}");
}

#[test]
fn fit_is_deterministic_and_writes_best_checkpoint() {
    let mut spec = SynthSpec::new(80, vec![0.7, 0.3]);
    spec.seconds = 1.0;
    let data = synth_dataset(&spec, 1).unwrap();
    let cfg = tiny_config(3, 5);
    let model_cfg = IncepSEConfig::mini(2, 4);
    let dir = tempfile::tempdir().unwrap();
    let a = fit(&cfg, &model_cfg, &data, Some(dir.path())).unwrap();
    let b = fit(&cfg, &model_cfg, &data, None).unwrap();
    assert_eq!(a.report.to_csv(), b.report.to_csv());
    assert_eq!(a.model, b.model);
    assert_eq!(a.report.epochs.len(), 3);
    assert_eq!(a.report.best_val_auroc(), a.report.epochs.iter().map(|e| e.val_auroc).fold(f64::MIN, f64::max));
    let saved = incepse::model::load_checkpoint(dir.path().join(BEST_CHECKPOINT)).unwrap();
    assert_eq!(saved, a.model);
    let path = dir.path().join("report.csv");
    a.report.write(&path).unwrap();
    let back = TrainReport::read(&path).unwrap();
    assert_eq!(back.epochs, a.report.epochs);
    assert_eq!(back.test_auroc.to_bits(), a.report.test_auroc.to_bits());

    let c = fit(&tiny_config(3, 6), &model_cfg, &data, None).unwrap();
    assert_ne!(c.report.to_csv(), a.report.to_csv());
}

#[test]
fn fit_rejects_mismatched_model() {
    let mut spec = SynthSpec::new(20, vec![0.5, 0.5]);
    spec.seconds = 1.0;
    let data = synth_dataset(&spec, 1).unwrap();
    assert!(fit(&tiny_config(1, 0), &IncepSEConfig::mini(3, 4), &data, None).is_err());
    let mut bad = tiny_config(1, 0);
    bad.batch_size = 0;
    assert!(fit(&bad, &IncepSEConfig::mini(2, 4), &data, None).is_err());
}

#[test]
fn plateau_schedule_runs_inside_fit() {
    let mut spec = SynthSpec::new(100, vec![0.5, 0.5]);
    spec.seconds = 1.0;
    let data = synth_dataset(&spec, 2).unwrap();
    let mut cfg = tiny_config(3, 0);
    cfg.scheduler = SchedulerConfig::Plateau { factor: 0.3, patience: 1 };
    cfg.base_lr = 1e-3;
    let out = fit(&cfg, &IncepSEConfig::mini(2, 4), &data, None).unwrap();
    assert_eq!(out.report.epochs[0].lr, 1e-3);
    for w in out.report.epochs.windows(2) {
        assert!(w[1].lr <= w[0].lr);
    }
}
