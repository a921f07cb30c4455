use std::collections::VecDeque;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{SchedulerConfig, TrainConfig};
use super::loss::bce_with_logits;
use super::optim::{clip_global_norm, global_norm, AdamW};
use super::report::{EpochRecord, TrainReport};
use super::schedule::{OneCycle, Plateau, Scheduler};
use crate::autodiff::{sigmoid, Tape, Tensor};
use crate::data::{make_batch, Batch, Dataset, Split};
use crate::error::{Error, Result};
use crate::metrics::{macro_auroc, MacroAuroc};
use crate::model::{save_checkpoint, IncepSEConfig, ModelParams};
use crate::nn::Mode;

const GRAD_HISTORY: usize = 16;

/// Name of the best-validation checkpoint written into the output directory.
pub const BEST_CHECKPOINT: &str = "best.ckpt";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clip_scale: f64,
}

/// Model plus optimizer state; one call to [`Trainer::step`] is one update.
pub struct Trainer {
    pub model: ModelParams,
    pub opt: AdamW,
    pub clip_norm: Option<f64>,
    pub weight_decay: f64,
    rng: ChaCha8Rng,
    grad_norms: VecDeque<f64>,
    epoch: usize,
    steps: usize,
}

impl Trainer {
    /// `seed` drives dropout masks only.
    pub fn new(model: ModelParams, clip_norm: Option<f64>, weight_decay: f64, seed: u64) -> Self {
        let opt = AdamW::new(model.trainable());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Trainer {
            model,
            opt,
            clip_norm,
            weight_decay,
            rng,
            grad_norms: VecDeque::new(),
            epoch: 0,
            steps: 0,
        }
    }

    pub fn step(&mut self, batch: &Batch, lr: f64) -> Result<StepOutcome> {
        let mut tape = Tape::new();
        let bound = self.model.bind(&mut tape, true)?;
        let x = tape.constant(batch.signals.clone());
        let out = self.model.forward(&mut tape, &bound, x, Mode::Train, &mut self.rng)?;
        let loss_var = bce_with_logits(&mut tape, out.logits, &batch.labels)?;
        let loss = tape.value(loss_var).item().ok_or_else(|| Error::NonScalarLoss(vec![]))?;
        self.steps += 1;
        if !loss.is_finite() {
            return Err(self.diverged());
        }
        let mut grads = tape.backward(loss_var)?;
        let params = self.model.trainable();
        let mut g: Vec<Tensor> = bound
            .order
            .iter()
            .zip(&params)
            .map(|(&v, p)| grads.take(v).unwrap_or_else(|| p.zeros_like()))
            .collect();
        let (grad_norm, clip_scale) = match self.clip_norm {
            Some(max) => {
                let c = clip_global_norm(&mut g, max)?;
                (c.norm, c.scale)
            }
            None => (global_norm(&g), 1.0),
        };
        if self.grad_norms.len() == GRAD_HISTORY {
            self.grad_norms.pop_front();
        }
        self.grad_norms.push_back(grad_norm);
        if !grad_norm.is_finite() {
            return Err(self.diverged());
        }
        self.opt
            .update(&mut self.model.trainable_mut(), &g, lr, self.weight_decay)?;
        self.model.apply_bn_stats(&out.bn_stats)?;
        Ok(StepOutcome {
            loss,
            grad_norm,
            clip_scale,
        })
    }

    fn diverged(&self) -> Error {
        Error::NonFiniteLoss {
            epoch: self.epoch,
            step: self.steps,
            grad_norms: self.grad_norms.iter().copied().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Row-major `[N, C]` sigmoid probabilities in split order.
    pub probs: Vec<f64>,
    pub labels: Vec<u8>,
    pub auroc: MacroAuroc,
}

/// Worker threads for inference, from `INCEPSE_WORKERS` (default 1).
pub fn worker_count() -> usize {
    std::env::var("INCEPSE_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Eval-mode probabilities for a split. Batches are spread over `workers`
/// threads and gathered in split order, so the result does not depend on
/// the worker count.
pub fn predict_split(model: &ModelParams, split: &Split<'_>, batch_size: usize, workers: usize) -> Result<Vec<f64>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be >= 1"));
    }
    let chunks: Vec<Vec<usize>> = split.indices.chunks(batch_size).map(<[usize]>::to_vec).collect();
    let run = |idx: &Vec<usize>| -> Result<Vec<f64>> {
        let batch = make_batch(split.data, idx.clone());
        let logits = model.predict_logits(&batch.signals)?;
        Ok(logits.data().iter().map(|&z| sigmoid(z)).collect())
    };
    let per_chunk: Vec<Result<Vec<f64>>> = if workers <= 1 || chunks.len() <= 1 {
        chunks.iter().map(run).collect()
    } else {
        let per_worker = chunks.len().div_ceil(workers);
        std::thread::scope(|s| {
            let handles: Vec<_> = chunks
                .chunks(per_worker)
                .map(|group| s.spawn(move || group.iter().map(run).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("inference worker panicked"))
                .collect()
        })
    };
    let mut out = Vec::with_capacity(split.len() * split.data.num_classes());
    for r in per_chunk {
        out.extend(r?);
    }
    Ok(out)
}

pub fn evaluate(model: &ModelParams, split: &Split<'_>, batch_size: usize) -> Result<Evaluation> {
    let probs = predict_split(model, split, batch_size, worker_count())?;
    let labels: Vec<u8> = split.records().flat_map(|r| r.labels.iter().copied()).collect();
    let auroc = macro_auroc(&probs, &labels, split.data.num_classes())?;
    Ok(Evaluation { probs, labels, auroc })
}

pub struct FitOutcome {
    pub report: TrainReport,
    /// Restored best-validation parameters.
    pub model: ModelParams,
}

/// Trains on folds 1–8, validates on fold 9 after every epoch, restores the
/// best-validation state and scores it on fold 10.
///
/// With `out_dir`, the best state is also written to [`BEST_CHECKPOINT`]
/// each time it improves.
pub fn fit(cfg: &TrainConfig, model_cfg: &IncepSEConfig, data: &Dataset, out_dir: Option<&Path>) -> Result<FitOutcome> {
    cfg.validate()?;
    let mut mc = model_cfg.clone();
    mc.dropout_p = cfg.dropout_p;
    if mc.input_channels != data.leads || mc.num_classes != data.num_classes() {
        return Err(Error::ConfigMismatch {
            checkpoint: vec![mc.input_channels, mc.num_classes],
            requested: vec![data.leads, data.num_classes()],
        });
    }
    let splits = data.split_folds()?;
    let model = ModelParams::init(&mc, cfg.seed)?;
    let mut trainer = Trainer::new(model, cfg.clip_norm, cfg.weight_decay, cfg.seed);

    let steps_per_epoch = splits.train.len().div_ceil(cfg.batch_size);
    let mut sched = match cfg.scheduler {
        SchedulerConfig::OneCycle {
            epochs,
            warmup_frac,
            div_factor,
            final_div,
        } => {
            let s = OneCycle {
                max_lr: cfg.base_lr,
                total_steps: epochs * steps_per_epoch,
                warmup_frac,
                div_factor,
                final_div,
            };
            s.validate()?;
            Scheduler::OneCycle { sched: s, step: 0 }
        }
        SchedulerConfig::Plateau { factor, patience } => Scheduler::Plateau(Plateau::new(cfg.base_lr, factor, patience)?),
    };

    let ckpt_path = out_dir.map(|d| d.join(BEST_CHECKPOINT));
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    for epoch in 0..cfg.epochs {
        trainer.epoch = epoch + 1;
        let mut loss_sum = 0.0;
        let mut lr = sched.lr();
        for batch in splits.train.batches(cfg.batch_size, true, cfg.seed, epoch as u64)? {
            lr = sched.lr();
            let out = trainer.step(&batch, lr)?;
            loss_sum += out.loss * batch.indices.len() as f64;
            sched.after_batch();
        }
        let val = evaluate(&trainer.model, &splits.val, cfg.batch_size)?.auroc.value;
        sched.after_epoch(Some(val))?;
        records.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / splits.train.len() as f64,
            val_auroc: val,
            lr,
        });
        if best.as_ref().is_none_or(|(b, _, _)| val > *b) {
            if let Some(p) = &ckpt_path {
                save_checkpoint(&trainer.model, p)?;
            }
            best = Some((val, epoch + 1, trainer.model.clone()));
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    let test = evaluate(&model, &splits.test, cfg.batch_size)?;
    Ok(FitOutcome {
        report: TrainReport {
            epochs: records,
            best_epoch,
            test_auroc: test.auroc.value,
            test_skipped: test.auroc.skipped,
            seed: cfg.seed,
            checkpoint: ckpt_path,
        },
        model,
    })
}
