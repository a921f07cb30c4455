//! Manifest ingestion: `record_id,fold,signal_file,labels` rows pointing at
//! raw little-endian f32 signal files (lead-major) or text files with one
//! comma-separated lead per line.

use std::fs;
use std::path::{Path, PathBuf};

use super::dataset::{Dataset, EcgRecord, NUM_FOLDS};
use super::task::TaskSpec;
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: &str = "record_id,fold,signal_file,labels";

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestOptions {
    pub leads: usize,
    pub fs_hz: f64,
}

impl Default for ManifestOptions {
    fn default() -> Self {
        ManifestOptions {
            leads: crate::model::ECG_LEADS,
            fs_hz: 100.0,
        }
    }
}

fn is_text_signal(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("txt") | Some("csv")
    )
}

pub fn read_signal_file(path: &Path, leads: usize) -> Result<Vec<f32>> {
    if is_text_signal(path) {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if rows.len() != leads {
            return Err(Error::Parse {
                context: path.display().to_string(),
                reason: format!("{} lead rows, expected {leads}", rows.len()),
            });
        }
        let mut out = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for tok in row.split(',') {
                out.push(tok.trim().parse::<f32>().map_err(|e| Error::Parse {
                    context: path.display().to_string(),
                    reason: format!("lead {i}: {e}"),
                })?);
            }
        }
        Ok(out)
    } else {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::Parse {
                context: path.display().to_string(),
                reason: format!("{} bytes is not a whole number of f32 values", bytes.len()),
            });
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

pub fn write_signal_file(path: &Path, signal: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = signal.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads every manifest row and maps statements through `task`.
///
/// Statements the task does not know are ignored and counted in
/// [`Dataset::unknown_statements`]; the record is kept.
pub fn load_manifest(manifest: impl AsRef<Path>, task: &TaskSpec, opts: &ManifestOptions) -> Result<Dataset> {
    let manifest = manifest.as_ref();
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == MANIFEST_HEADER => {}
        _ => {
            return Err(Error::MalformedRow {
                row: 1,
                reason: format!("expected header `{MANIFEST_HEADER}`"),
            })
        }
    }

    let mut records = Vec::new();
    let mut samples = None;
    let mut unknown = 0;
    for (lineno, line) in lines {
        let row = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.splitn(4, ',').map(str::trim).collect();
        if cols.len() < 3 {
            return Err(Error::MalformedRow {
                row,
                reason: format!("expected 4 columns, got {}", cols.len()),
            });
        }
        let fold: i64 = cols[1].parse().map_err(|_| Error::MalformedRow {
            row,
            reason: format!("fold {:?} is not an integer", cols[1]),
        })?;
        if !(1..=NUM_FOLDS as i64).contains(&fold) {
            return Err(Error::FoldOutOfRange { row, fold });
        }
        let statements: Vec<String> = cols
            .get(3)
            .map(|s| s.split(';').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect())
            .unwrap_or_default();

        let sig_path = base.join(cols[2]);
        let signal = read_signal_file(&sig_path, opts.leads).map_err(|e| match e {
            Error::Io { path, source } => Error::MalformedRow {
                row,
                reason: format!("{}: {source}", path.display()),
            },
            other => other,
        })?;
        if signal.len() % opts.leads != 0 {
            return Err(Error::MalformedRow {
                row,
                reason: format!("{} values do not split into {} leads", signal.len(), opts.leads),
            });
        }
        let n = signal.len() / opts.leads;
        match samples {
            None => samples = Some(n),
            Some(s) if s != n => {
                return Err(Error::MalformedRow {
                    row,
                    reason: format!("{n} samples per lead, earlier records have {s}"),
                })
            }
            _ => {}
        }
        let (labels, u) = task.encode(&statements);
        unknown += u;
        records.push(EcgRecord {
            record_id: cols[0].to_string(),
            fold: fold as u8,
            signal,
            statements,
            labels,
        });
    }
    let samples = samples.ok_or_else(|| Error::MalformedRow {
        row: 1,
        reason: "manifest lists no records".into(),
    })?;
    let mut ds = Dataset::new(records, task.clone(), opts.fs_hz, opts.leads, samples)?;
    ds.unknown_statements = unknown;
    Ok(ds)
}

/// Writes `manifest.csv` plus one `signals/<record_id>.bin` per record under `dir`.
pub fn write_manifest(ds: &Dataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let sig_dir = dir.join("signals");
    fs::create_dir_all(&sig_dir).map_err(|e| Error::io(&sig_dir, e))?;
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for r in &ds.records {
        let rel = format!("signals/{}.bin", r.record_id);
        write_signal_file(&dir.join(&rel), &r.signal)?;
        out.push_str(&format!("{},{},{},{}\n", r.record_id, r.fold, rel, r.statements.join(";")));
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
