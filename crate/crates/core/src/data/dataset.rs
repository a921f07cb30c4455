use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::task::TaskSpec;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::signal::LeadStats;

pub const NUM_FOLDS: u8 = 10;
pub const VAL_FOLD: u8 = 9;
pub const TEST_FOLD: u8 = 10;

/// One multi-lead recording with its fold tag and labels for the active task.
#[derive(Clone, Debug, PartialEq)]
pub struct EcgRecord {
    pub record_id: String,
    /// 1..=10
    pub fold: u8,
    /// Lead-major samples: `signal[lead * samples + t]`.
    pub signal: Vec<f32>,
    /// Raw statement codes as they appeared in the source.
    pub statements: Vec<String>,
    /// Multi-hot over the task's classes.
    pub labels: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<EcgRecord>,
    pub task: TaskSpec,
    pub fs_hz: f64,
    pub leads: usize,
    pub samples: usize,
    /// Standardization statistics, once applied.
    pub stats: Option<LeadStats>,
    /// Statements seen during ingestion that the task does not map.
    pub unknown_statements: usize,
}

impl Dataset {
    pub fn new(records: Vec<EcgRecord>, task: TaskSpec, fs_hz: f64, leads: usize, samples: usize) -> Result<Self> {
        if leads == 0 || samples == 0 {
            return Err(Error::invalid("dataset needs at least one lead and one sample"));
        }
        for r in &records {
            if r.signal.len() != leads * samples {
                return Err(Error::invalid(format!(
                    "record {} has {} values, expected {leads} leads x {samples} samples",
                    r.record_id,
                    r.signal.len()
                )));
            }
            if !(1..=NUM_FOLDS).contains(&r.fold) {
                return Err(Error::invalid(format!("record {} has fold {}", r.record_id, r.fold)));
            }
            if r.labels.len() != task.num_classes() {
                return Err(Error::invalid(format!(
                    "record {} has {} labels, task {} has {} classes",
                    r.record_id,
                    r.labels.len(),
                    task.name,
                    task.num_classes()
                )));
            }
        }
        Ok(Dataset {
            records,
            task,
            fs_hz,
            leads,
            samples,
            stats: None,
            unknown_statements: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.task.num_classes()
    }

    pub fn lead<'a>(&self, record: &'a EcgRecord, lead: usize) -> &'a [f32] {
        &record.signal[lead * self.samples..(lead + 1) * self.samples]
    }

    /// Relabels every record for another task from its stored statements.
    pub fn with_task(mut self, task: TaskSpec) -> Self {
        let mut unknown = 0;
        for r in &mut self.records {
            let (labels, u) = task.encode(&r.statements);
            r.labels = labels;
            unknown += u;
        }
        self.task = task;
        self.unknown_statements = unknown;
        self
    }

    pub fn all(&self) -> Split<'_> {
        Split {
            data: self,
            indices: (0..self.records.len()).collect(),
        }
    }

    pub fn folds(&self, folds: &[u8]) -> Split<'_> {
        Split {
            data: self,
            indices: (0..self.records.len())
                .filter(|&i| folds.contains(&self.records[i].fold))
                .collect(),
        }
    }

    /// Folds 1–8 train, 9 validation, 10 test.
    pub fn split_folds(&self) -> Result<Splits<'_>> {
        let train = self.folds(&[1, 2, 3, 4, 5, 6, 7, 8]);
        let val = self.folds(&[VAL_FOLD]);
        let test = self.folds(&[TEST_FOLD]);
        for (name, s) in [("training", &train), ("validation", &val), ("test", &test)] {
            if s.is_empty() {
                return Err(Error::EmptySplit(name));
            }
        }
        Ok(Splits { train, val, test })
    }
}

/// Index view over a dataset.
#[derive(Clone, Debug)]
pub struct Split<'a> {
    pub data: &'a Dataset,
    pub indices: Vec<usize>,
}

pub struct Splits<'a> {
    pub train: Split<'a>,
    pub val: Split<'a>,
    pub test: Split<'a>,
}

#[derive(Clone, Debug)]
pub struct Batch {
    /// `[B, leads, samples]`
    pub signals: Tensor,
    /// `[B, classes]`, 0/1
    pub labels: Tensor,
    /// Dataset record indices in batch order.
    pub indices: Vec<usize>,
}

impl<'a> Split<'a> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &'a EcgRecord> + '_ {
        self.indices.iter().map(|&i| &self.data.records[i])
    }

    /// Record order for one epoch; shuffled order depends only on `(seed, epoch)`.
    pub fn order(&self, shuffle: bool, seed: u64, epoch: u64) -> Vec<usize> {
        let mut order = self.indices.clone();
        if shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(epoch);
            order.shuffle(&mut rng);
        }
        order
    }

    /// Batches in `order(shuffle, seed, epoch)`; the last batch may be partial.
    pub fn batches(&self, batch_size: usize, shuffle: bool, seed: u64, epoch: u64) -> Result<BatchIter<'a>> {
        if batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        Ok(BatchIter {
            data: self.data,
            order: self.order(shuffle, seed, epoch),
            batch_size,
            pos: 0,
        })
    }

    /// `[N, classes]` label matrix in split order.
    pub fn label_rows(&self) -> Vec<Vec<u8>> {
        self.records().map(|r| r.labels.clone()).collect()
    }
}

pub struct BatchIter<'a> {
    data: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(make_batch(self.data, indices))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (n, Some(n))
    }
}

impl ExactSizeIterator for BatchIter<'_> {}

pub fn make_batch(data: &Dataset, indices: Vec<usize>) -> Batch {
    let b = indices.len();
    let mut signals = Vec::with_capacity(b * data.leads * data.samples);
    let mut labels = Vec::with_capacity(b * data.num_classes());
    for &i in &indices {
        let r = &data.records[i];
        signals.extend(r.signal.iter().map(|&v| v as f64));
        labels.extend(r.labels.iter().map(|&v| v as f64));
    }
    Batch {
        signals: Tensor::new(&[b, data.leads, data.samples], signals).expect("validated record sizes"),
        labels: Tensor::new(&[b, data.num_classes()], labels).expect("validated label sizes"),
        indices,
    }
}
