//! Deterministic ECG-shaped synthetic data for desk-scale experiments.
//!
//! Each class owns a clean template drawn from one of three waveform
//! families (sinusoid, Gaussian spike train, sawtooth bursts) with class-
//! specific rate. A record sums the templates of its positive classes,
//! scales them per lead, and adds white noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::{Dataset, EcgRecord, NUM_FOLDS};
use super::task::TaskSpec;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub num_records: usize,
    pub classes: usize,
    /// Probability of each class being a record's primary label; sums to 1.
    pub imbalance_ratios: Vec<f64>,
    pub fs_hz: f64,
    pub seconds: f64,
    pub leads: usize,
    pub noise_sigma: f64,
    /// Chance that a record also carries a second, independently drawn class.
    pub extra_label_prob: f64,
}

impl SynthSpec {
    pub fn new(num_records: usize, imbalance_ratios: Vec<f64>) -> Self {
        SynthSpec {
            num_records,
            classes: imbalance_ratios.len(),
            imbalance_ratios,
            fs_hz: 100.0,
            seconds: 10.0,
            leads: crate::model::ECG_LEADS,
            noise_sigma: 0.5,
            extra_label_prob: 0.0,
        }
    }

    pub fn samples(&self) -> usize {
        (self.fs_hz * self.seconds).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::invalid("synthetic data needs at least 2 classes"));
        }
        if self.imbalance_ratios.len() != self.classes {
            return Err(Error::invalid(format!(
                "{} imbalance ratios for {} classes",
                self.imbalance_ratios.len(),
                self.classes
            )));
        }
        let sum: f64 = self.imbalance_ratios.iter().sum();
        if self.imbalance_ratios.iter().any(|&r| !(0.0..=1.0).contains(&r)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "imbalance ratios must be probabilities summing to 1, got {:?}",
                self.imbalance_ratios
            )));
        }
        if self.leads == 0 || self.samples() == 0 || self.num_records == 0 {
            return Err(Error::invalid("synthetic spec needs records, leads and samples"));
        }
        if self.noise_sigma < 0.0 || !(0.0..=1.0).contains(&self.extra_label_prob) {
            return Err(Error::invalid("noise_sigma must be >= 0 and extra_label_prob in [0, 1]"));
        }
        Ok(())
    }
}

pub fn class_names(classes: usize) -> Vec<String> {
    (0..classes).map(|k| format!("class{k}")).collect()
}

/// Clean single-lead template of class `k`.
pub fn class_template(k: usize, samples: usize, fs_hz: f64) -> Vec<f64> {
    let tier = (k / 3) as f64;
    (0..samples)
        .map(|i| {
            let t = i as f64 / fs_hz;
            match k % 3 {
                0 => {
                    let f = 3.0 + 4.0 * tier;
                    (2.0 * PI * f * t).sin()
                }
                1 => {
                    let rate = 1.0 + 0.6 * tier;
                    let period = 1.0 / rate;
                    let phase = t.rem_euclid(period) - 0.5 * period;
                    let width = 0.04;
                    1.5 * (-0.5 * (phase / width).powi(2)).exp()
                }
                _ => {
                    let f = 5.0 + 2.0 * tier;
                    let burst_on = t.rem_euclid(2.0) < 1.0;
                    if burst_on {
                        2.0 * (t * f).rem_euclid(1.0) - 1.0
                    } else {
                        0.0
                    }
                }
            }
        })
        .collect()
}

fn lead_gain(lead: usize) -> f64 {
    0.5 + 0.5 * ((lead * 7) % 12) as f64 / 11.0
}

fn draw_class(rng: &mut impl Rng, ratios: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &r) in ratios.iter().enumerate() {
        acc += r;
        if u < acc {
            return k;
        }
    }
    ratios.iter().rposition(|&r| r > 0.0).unwrap_or(0)
}

/// Records get folds 1..=10 round-robin, so every fold is populated once
/// there are at least ten records.
pub fn synth_dataset(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let samples = spec.samples();
    let templates: Vec<Vec<f64>> = (0..spec.classes)
        .map(|k| class_template(k, samples, spec.fs_hz))
        .collect();
    let names = class_names(spec.classes);
    let task = TaskSpec::identity("synthetic", &names);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).map_err(|e| Error::invalid(e.to_string()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(spec.num_records);
    for i in 0..spec.num_records {
        let mut labels = vec![0u8; spec.classes];
        labels[draw_class(&mut rng, &spec.imbalance_ratios)] = 1;
        if spec.extra_label_prob > 0.0 && rng.random::<f64>() < spec.extra_label_prob {
            labels[draw_class(&mut rng, &spec.imbalance_ratios)] = 1;
        }
        let mut signal = Vec::with_capacity(spec.leads * samples);
        for lead in 0..spec.leads {
            let g = lead_gain(lead);
            for t in 0..samples {
                let clean: f64 = labels
                    .iter()
                    .zip(&templates)
                    .filter(|(&on, _)| on == 1)
                    .map(|(_, tpl)| tpl[t])
                    .sum();
                let eps = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                signal.push((g * clean + eps) as f32);
            }
        }
        let statements = labels
            .iter()
            .zip(&names)
            .filter(|(&on, _)| on == 1)
            .map(|(_, n)| n.clone())
            .collect();
        records.push(EcgRecord {
            record_id: format!("syn{i:05}"),
            fold: (i % NUM_FOLDS as usize) as u8 + 1,
            signal,
            statements,
            labels,
        });
    }
    Dataset::new(records, task, spec.fs_hz, spec.leads, samples)
}
