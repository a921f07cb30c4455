//! Rank-based AUROC.

use crate::error::{Error, Result};

/// Mann–Whitney AUROC with midranks for ties.
///
/// Returns [`Error::AurocUndefined`] when `labels` lacks either class.
pub fn auroc_binary(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            shape: vec![labels.len()],
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::InvalidTarget(bad as f64));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("auroc scores"));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::AurocUndefined);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean
        let midrank = (i + j + 2) as f64 / 2.0;
        let tied_pos = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        pos_rank_sum += midrank * tied_pos as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MacroAuroc {
    pub value: f64,
    pub per_class: Vec<Option<f64>>,
    /// Classes without both a positive and a negative example.
    pub skipped: Vec<usize>,
}

/// Unweighted mean of per-class AUROC over `[N, C]` row-major scores,
/// excluding classes that lack a positive or a negative.
pub fn macro_auroc(scores: &[f64], labels: &[u8], classes: usize) -> Result<MacroAuroc> {
    if classes == 0 || scores.len() != labels.len() || scores.len() % classes != 0 {
        return Err(Error::invalid(format!(
            "score matrix of {} and label matrix of {} values do not form [N, {classes}]",
            scores.len(),
            labels.len()
        )));
    }
    let n = scores.len() / classes;
    if n < 2 {
        return Err(Error::MacroAurocUndefined(format!("{n} records")));
    }
    let mut per_class = Vec::with_capacity(classes);
    let mut skipped = Vec::new();
    let mut col_s = vec![0.0; n];
    let mut col_y = vec![0u8; n];
    for c in 0..classes {
        for i in 0..n {
            col_s[i] = scores[i * classes + c];
            col_y[i] = labels[i * classes + c];
        }
        match auroc_binary(&col_s, &col_y) {
            Ok(v) => per_class.push(Some(v)),
            Err(Error::AurocUndefined) => {
                per_class.push(None);
                skipped.push(c);
            }
            Err(e) => return Err(e),
        }
    }
    let included: Vec<f64> = per_class.iter().flatten().copied().collect();
    if included.is_empty() {
        return Err(Error::MacroAurocUndefined(format!("all {classes} classes lack a positive or a negative")));
    }
    Ok(MacroAuroc {
        value: included.iter().sum::<f64>() / included.len() as f64,
        per_class,
        skipped,
    })
}
