use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};

/// Per-lead mean and population standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct LeadStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl LeadStats {
    pub fn leads(&self) -> usize {
        self.mean.len()
    }
}

pub fn fit_stats(split: &Split<'_>) -> Result<LeadStats> {
    if split.is_empty() {
        return Err(Error::EmptySplit("training"));
    }
    let ds = split.data;
    let mut mean = vec![0.0; ds.leads];
    let mut std = vec![0.0; ds.leads];
    let n = (split.len() * ds.samples) as f64;
    for lead in 0..ds.leads {
        let m = split.records().flat_map(|r| ds.lead(r, lead)).map(|&v| v as f64).sum::<f64>() / n;
        let var = split
            .records()
            .flat_map(|r| ds.lead(r, lead))
            .map(|&v| (v as f64 - m).powi(2))
            .sum::<f64>()
            / n;
        let sd = var.sqrt();
        if !(sd > 1e-12 * m.abs().max(1.0)) {
            return Err(Error::ZeroVariance(lead));
        }
        mean[lead] = m;
        std[lead] = sd;
    }
    Ok(LeadStats { mean, std })
}

pub fn apply_stats(ds: &Dataset, stats: &LeadStats) -> Result<Dataset> {
    if stats.leads() != ds.leads {
        return Err(Error::invalid(format!(
            "stats cover {} leads, dataset has {}",
            stats.leads(),
            ds.leads
        )));
    }
    let mut out = ds.clone();
    for r in &mut out.records {
        for (lead, chunk) in r.signal.chunks_mut(ds.samples).enumerate() {
            let (m, s) = (stats.mean[lead], stats.std[lead]);
            for v in chunk {
                *v = ((*v as f64 - m) / s) as f32;
            }
        }
    }
    out.stats = Some(stats.clone());
    Ok(out)
}

/// Z-scores every lead with statistics from the training folds only.
pub fn standardize(ds: &Dataset) -> Result<Dataset> {
    let train = ds.folds(&[1, 2, 3, 4, 5, 6, 7, 8]);
    let stats = fit_stats(&train)?;
    apply_stats(ds, &stats)
}

pub fn write_stats(stats: &LeadStats, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (i, (m, s)) in stats.mean.iter().zip(&stats.std).enumerate() {
        // {:?} prints the shortest string that round-trips
        writeln!(out, "{i},{m:?},{s:?}").unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_stats(path: impl AsRef<Path>) -> Result<LeadStats> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, reason: String| Error::Parse {
        context: format!("{}:{line}", path.display()),
        reason,
    };
    let mut stats = LeadStats { mean: vec![], std: vec![] };
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(bad(i + 1, "expected `index,mean,std`".into()));
        }
        let idx: usize = cols[0].parse().map_err(|e| bad(i + 1, format!("{e}")))?;
        if idx != stats.mean.len() {
            return Err(bad(i + 1, format!("lead index {idx} out of order")));
        }
        let m: f64 = cols[1].parse().map_err(|e| bad(i + 1, format!("{e}")))?;
        let s: f64 = cols[2].parse().map_err(|e| bad(i + 1, format!("{e}")))?;
        if !(s > 0.0) {
            return Err(Error::ZeroVariance(idx));
        }
        stats.mean.push(m);
        stats.std.push(s);
    }
    if stats.mean.is_empty() {
        return Err(bad(0, "no leads".into()));
    }
    Ok(stats)
}
