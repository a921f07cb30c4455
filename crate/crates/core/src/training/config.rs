use std::fmt;

use crate::data::TaskKind;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum SchedulerConfig {
    /// `epochs` is the schedule horizon; training may run longer at the final rate.
    OneCycle {
        epochs: usize,
        warmup_frac: f64,
        div_factor: f64,
        final_div: f64,
    },
    Plateau {
        factor: f64,
        patience: usize,
    },
}

impl SchedulerConfig {
    pub fn one_cycle(epochs: usize) -> Self {
        SchedulerConfig::OneCycle {
            epochs,
            warmup_frac: 0.3,
            div_factor: 25.0,
            final_div: 1e4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub task: String,
    pub scheduler: SchedulerConfig,
    pub base_lr: f64,
    pub epochs: usize,
    pub dropout_p: f64,
    /// `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn for_task(task: TaskKind) -> Self {
        let (scheduler, base_lr, epochs, dropout_p) = match task {
            TaskKind::All => (SchedulerConfig::one_cycle(13), 1e-2, 15, 0.0),
            TaskKind::Diag => (SchedulerConfig::one_cycle(16), 1e-2, 18, 0.05),
            TaskKind::Sub => (
                SchedulerConfig::Plateau {
                    factor: 0.3,
                    patience: 1,
                },
                1e-3,
                15,
                0.09,
            ),
            TaskKind::Super => (SchedulerConfig::one_cycle(14), 1e-2, 15, 0.11),
            TaskKind::Form => (SchedulerConfig::one_cycle(16), 1e-2, 25, 0.1),
            TaskKind::Rhythm => (SchedulerConfig::one_cycle(16), 1e-2, 20, 0.1),
        };
        TrainConfig {
            task: task.name().to_string(),
            scheduler,
            base_lr,
            epochs,
            dropout_p,
            clip_norm: Some(0.1),
            weight_decay: 1e-4,
            batch_size: 128,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(self.base_lr > 0.0) {
            return Err(Error::invalid(format!("lr must be > 0, got {}", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::invalid(format!("dropout must be in [0, 1), got {}", self.dropout_p)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::invalid(format!("clip_norm must be > 0, got {c}")));
            }
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight_decay must be >= 0"));
        }
        match self.scheduler {
            SchedulerConfig::OneCycle { epochs, .. } if epochs == 0 => {
                Err(Error::invalid("one-cycle epochs must be >= 1"))
            }
            SchedulerConfig::Plateau { factor, .. } if !(factor > 0.0 && factor < 1.0) => {
                Err(Error::invalid("plateau factor must be in (0, 1)"))
            }
            _ => Ok(()),
        }
    }

    /// Sets one field from its `key = value` spelling.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |reason: String| Error::Parse {
            context: format!("config key {key}"),
            reason,
        };
        let f = |v: &str| v.parse::<f64>().map_err(|e| bad(format!("{v:?}: {e}")));
        let u = |v: &str| v.parse::<usize>().map_err(|e| bad(format!("{v:?}: {e}")));
        match key {
            "task" => self.task = value.to_string(),
            "lr" | "learning_rate" => self.base_lr = f(value)?,
            "epochs" => self.epochs = u(value)?,
            "dropout" => self.dropout_p = f(value)?,
            "clip_norm" => {
                self.clip_norm = match value {
                    "none" | "off" | "0" => None,
                    v => Some(f(v)?),
                }
            }
            "weight_decay" => self.weight_decay = f(value)?,
            "batch_size" => self.batch_size = u(value)?,
            "seed" => self.seed = value.parse().map_err(|e| bad(format!("{value:?}: {e}")))?,
            "scheduler" => {
                self.scheduler = match value {
                    "onecycle" => match self.scheduler {
                        SchedulerConfig::OneCycle { .. } => self.scheduler.clone(),
                        _ => SchedulerConfig::one_cycle(self.epochs),
                    },
                    "plateau" => match self.scheduler {
                        SchedulerConfig::Plateau { .. } => self.scheduler.clone(),
                        _ => SchedulerConfig::Plateau {
                            factor: 0.3,
                            patience: 1,
                        },
                    },
                    other => return Err(bad(format!("unknown scheduler {other:?}"))),
                }
            }
            "onecycle_epochs" | "warmup_frac" | "div_factor" | "final_div" => match &mut self.scheduler {
                SchedulerConfig::OneCycle {
                    epochs,
                    warmup_frac,
                    div_factor,
                    final_div,
                } => match key {
                    "onecycle_epochs" => *epochs = u(value)?,
                    "warmup_frac" => *warmup_frac = f(value)?,
                    "div_factor" => *div_factor = f(value)?,
                    _ => *final_div = f(value)?,
                },
                _ => return Err(bad("only valid with scheduler = onecycle".into())),
            },
            "factor" | "patience" => match &mut self.scheduler {
                SchedulerConfig::Plateau { factor, patience } => {
                    if key == "factor" {
                        *factor = f(value)?
                    } else {
                        *patience = u(value)?
                    }
                }
                _ => return Err(bad("only valid with scheduler = plateau".into())),
            },
            _ => return Err(bad("unknown key".into())),
        }
        Ok(())
    }
}

/// `key = value` lines that [`TrainConfig::set`] reads back.
impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "task = {}", self.task)?;
        match &self.scheduler {
            SchedulerConfig::OneCycle {
                epochs,
                warmup_frac,
                div_factor,
                final_div,
            } => {
                writeln!(f, "scheduler = onecycle")?;
                writeln!(f, "onecycle_epochs = {epochs}")?;
                writeln!(f, "warmup_frac = {warmup_frac:?}")?;
                writeln!(f, "div_factor = {div_factor:?}")?;
                writeln!(f, "final_div = {final_div:?}")?;
            }
            SchedulerConfig::Plateau { factor, patience } => {
                writeln!(f, "scheduler = plateau")?;
                writeln!(f, "factor = {factor:?}")?;
                writeln!(f, "patience = {patience}")?;
            }
        }
        writeln!(f, "lr = {:?}", self.base_lr)?;
        writeln!(f, "epochs = {}", self.epochs)?;
        writeln!(f, "dropout = {:?}", self.dropout_p)?;
        match self.clip_norm {
            Some(c) => writeln!(f, "clip_norm = {c:?}")?,
            None => writeln!(f, "clip_norm = none")?,
        }
        writeln!(f, "weight_decay = {:?}", self.weight_decay)?;
        writeln!(f, "batch_size = {}", self.batch_size)?;
        writeln!(f, "seed = {}", self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_defaults() {
        let sup = TrainConfig::for_task(TaskKind::Super);
        assert_eq!(sup.scheduler, SchedulerConfig::one_cycle(14));
        assert_eq!((sup.base_lr, sup.epochs, sup.dropout_p), (1e-2, 15, 0.11));
        let sub = TrainConfig::for_task(TaskKind::Sub);
        assert_eq!(sub.scheduler, SchedulerConfig::Plateau { factor: 0.3, patience: 1 });
        assert_eq!((sub.base_lr, sub.dropout_p), (1e-3, 0.09));
        assert_eq!(sub.clip_norm, Some(0.1));
        assert_eq!(sub.weight_decay, 1e-4);
    }

    #[test]
    fn display_round_trips_through_set() {
        for kind in TaskKind::ALL {
            let mut cfg = TrainConfig::for_task(kind);
            cfg.clip_norm = None;
            cfg.seed = 17;
            let mut back = TrainConfig::for_task(TaskKind::All);
            for line in cfg.to_string().lines() {
                let (k, v) = line.split_once('=').unwrap();
                back.set(k.trim(), v.trim()).unwrap();
            }
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn unknown_key_is_error() {
        assert!(TrainConfig::for_task(TaskKind::All).set("bogus", "1").is_err());
        assert!(TrainConfig::for_task(TaskKind::All).set("patience", "1").is_err());
    }
}
