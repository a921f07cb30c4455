use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Weighted cosine blend: `start` at `pct = 0`, `end` at `pct = 1`, both exact.
fn cosine(start: f64, end: f64, pct: f64) -> f64 {
    let c = (PI * pct).cos();
    start * (1.0 + c) / 2.0 + end * (1.0 - c) / 2.0
}

/// Per-step one-cycle schedule that holds its final rate past the horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct OneCycle {
    pub max_lr: f64,
    pub total_steps: usize,
    pub warmup_frac: f64,
    pub div_factor: f64,
    pub final_div: f64,
}

impl OneCycle {
    pub fn new(max_lr: f64, total_steps: usize) -> Self {
        OneCycle {
            max_lr,
            total_steps,
            warmup_frac: 0.3,
            div_factor: 25.0,
            final_div: 1e4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_lr > 0.0) || self.total_steps == 0 {
            return Err(Error::invalid("one-cycle needs max_lr > 0 and at least one step"));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) || !(self.div_factor >= 1.0) || !(self.final_div >= 1.0) {
            return Err(Error::invalid(
                "one-cycle needs warmup in [0, 1), div_factor >= 1 and final_div >= 1",
            ));
        }
        Ok(())
    }

    pub fn initial_lr(&self) -> f64 {
        self.max_lr / self.div_factor
    }

    pub fn final_lr(&self) -> f64 {
        self.max_lr / self.final_div
    }

    /// Index of the peak step.
    pub fn peak_step(&self) -> usize {
        if self.total_steps < 2 {
            return 0;
        }
        let last = self.total_steps - 1;
        ((self.warmup_frac * last as f64).round() as usize).clamp(1, last)
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        if self.total_steps < 2 {
            return if step == 0 { self.initial_lr() } else { self.final_lr() };
        }
        let last = self.total_steps - 1;
        let peak = self.peak_step();
        if step >= last {
            self.final_lr()
        } else if step <= peak {
            cosine(self.initial_lr(), self.max_lr, step as f64 / peak as f64)
        } else {
            cosine(self.max_lr, self.final_lr(), (step - peak) as f64 / (last - peak) as f64)
        }
    }
}

/// Multiplies the rate by `factor` once the monitored metric has gone
/// `patience` epochs without a strict improvement.
#[derive(Clone, Debug, PartialEq)]
pub struct Plateau {
    pub factor: f64,
    pub patience: usize,
    pub lr: f64,
    pub best: f64,
    pub bad_epochs: usize,
    pub reductions: usize,
}

impl Plateau {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Result<Self> {
        if !(lr > 0.0) || !(factor > 0.0 && factor < 1.0) {
            return Err(Error::invalid("plateau needs lr > 0 and factor in (0, 1)"));
        }
        Ok(Plateau {
            factor,
            patience,
            lr,
            best: f64::NEG_INFINITY,
            bad_epochs: 0,
            reductions: 0,
        })
    }

    /// Feeds one epoch's metric (higher is better) and returns the new rate.
    pub fn observe(&mut self, metric: f64) -> f64 {
        if metric > self.best {
            self.best = metric;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.lr *= self.factor;
                self.reductions += 1;
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

/// Running scheduler inside the fit loop.
#[derive(Clone, Debug, PartialEq)]
pub enum Scheduler {
    OneCycle { sched: OneCycle, step: usize },
    Plateau(Plateau),
}

impl Scheduler {
    pub fn lr(&self) -> f64 {
        match self {
            Scheduler::OneCycle { sched, step } => sched.lr_at(*step),
            Scheduler::Plateau(p) => p.lr,
        }
    }

    /// Called after every optimizer step.
    pub fn after_batch(&mut self) {
        if let Scheduler::OneCycle { step, .. } = self {
            *step += 1;
        }
    }

    /// Called after validation with that epoch's metric.
    pub fn after_epoch(&mut self, val_metric: Option<f64>) -> Result<()> {
        if let Scheduler::Plateau(p) = self {
            let m = val_metric.ok_or_else(|| Error::invalid("plateau scheduler needs a validation metric"))?;
            p.observe(m);
        }
        Ok(())
    }
}
