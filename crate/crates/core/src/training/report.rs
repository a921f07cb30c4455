use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const REPORT_HEADER: &str = "epoch,train_loss,val_auroc,lr";

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auroc: f64,
    /// Rate used by the epoch's last optimizer step.
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub test_auroc: f64,
    /// Classes excluded from the test macro AUROC.
    pub test_skipped: Vec<usize>,
    pub seed: u64,
    pub checkpoint: Option<PathBuf>,
}

impl TrainReport {
    pub fn best_val_auroc(&self) -> f64 {
        self.epochs[self.best_epoch - 1].val_auroc
    }

    pub fn final_val_auroc(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.val_auroc)
    }

    /// CSV rows plus a trailing `# best_epoch=.. test_auroc=.. seed=..` line.
    /// Reals use the shortest round-trip spelling.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{REPORT_HEADER}\n");
        for e in &self.epochs {
            writeln!(s, "{},{:?},{:?},{:?}", e.epoch, e.train_loss, e.val_auroc, e.lr).unwrap();
        }
        writeln!(
            s,
            "# best_epoch={} test_auroc={:?} seed={}",
            self.best_epoch, self.test_auroc, self.seed
        )
        .unwrap();
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, reason: String| Error::Parse {
            context: format!("train report line {line}"),
            reason,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == REPORT_HEADER => {}
            _ => return Err(bad(1, format!("expected header `{REPORT_HEADER}`"))),
        }
        let mut epochs = Vec::new();
        let mut summary = None;
        for (i, line) in lines {
            let n = i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut best = None;
                let mut test = None;
                let mut seed = None;
                for kv in rest.split_whitespace() {
                    let (k, v) = kv.split_once('=').ok_or_else(|| bad(n, format!("bad field {kv:?}")))?;
                    let err = |e: String| bad(n, format!("{k}: {e}"));
                    match k {
                        "best_epoch" => best = Some(v.parse::<usize>().map_err(|e| err(e.to_string()))?),
                        "test_auroc" => test = Some(v.parse::<f64>().map_err(|e| err(e.to_string()))?),
                        "seed" => seed = Some(v.parse::<u64>().map_err(|e| err(e.to_string()))?),
                        _ => {}
                    }
                }
                match (best, test, seed) {
                    (Some(b), Some(t), Some(s)) => summary = Some((b, t, s)),
                    _ => return Err(bad(n, "summary needs best_epoch, test_auroc and seed".into())),
                }
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(bad(n, format!("expected 4 columns, got {}", cols.len())));
            }
            let f = |s: &str| s.parse::<f64>().map_err(|e| bad(n, e.to_string()));
            epochs.push(EpochRecord {
                epoch: cols[0].parse().map_err(|e: std::num::ParseIntError| bad(n, e.to_string()))?,
                train_loss: f(cols[1])?,
                val_auroc: f(cols[2])?,
                lr: f(cols[3])?,
            });
        }
        let (best_epoch, test_auroc, seed) = summary.ok_or_else(|| bad(0, "missing summary line".into()))?;
        if best_epoch == 0 || best_epoch > epochs.len() {
            return Err(bad(0, format!("best_epoch {best_epoch} outside 1..={}", epochs.len())));
        }
        Ok(TrainReport {
            epochs,
            best_epoch,
            test_auroc,
            test_skipped: Vec::new(),
            seed,
            checkpoint: None,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let r = TrainReport {
            epochs: vec![
                EpochRecord { epoch: 1, train_loss: 0.7, val_auroc: 0.61, lr: 4e-4 },
                EpochRecord { epoch: 2, train_loss: 0.1 + 0.2, val_auroc: 2.0 / 3.0, lr: 1e-2 },
            ],
            best_epoch: 2,
            test_auroc: 0.6543210987654321,
            test_skipped: vec![],
            seed: 42,
            checkpoint: None,
        };
        let back = TrainReport::from_csv(&r.to_csv()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.best_val_auroc(), 2.0 / 3.0);
    }

    #[test]
    fn missing_summary_is_error() {
        assert!(TrainReport::from_csv(&format!("{REPORT_HEADER}\n1,0.5,0.5,0.1\n")).is_err());
    }
}
