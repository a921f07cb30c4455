//! Run configuration: `key = value` config files with per-task sections,
//! flag overrides, and the effective-config echo.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use incepse::data::{load_manifest, Dataset, ManifestOptions, TaskKind, TaskSpec};
use incepse::model::IncepSEConfig;
use incepse::training::TrainConfig;
use incepse::{Error, Result};

/// Mapping file that `synth` writes next to its manifest.
pub const TASKS_FILE: &str = "tasks.txt";
pub const EFFECTIVE_CONFIG: &str = "effective_config.txt";

/// Parsed config file: global lines plus `[section]` blocks, in file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    pub entries: Vec<(Option<String>, String, String)>,
}

impl ConfigFile {
    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut section = None;
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(name.trim().to_ascii_lowercase());
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                context: context.to_string(),
                reason: format!("line {}: expected `key = value`", i + 1),
            })?;
            entries.push((section.clone(), k.trim().to_string(), v.trim().to_string()));
        }
        Ok(ConfigFile { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Global entries followed by those of `task`'s section.
    pub fn for_task<'a>(&'a self, task: &str) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        let task = task.to_ascii_lowercase();
        let global = self.entries.iter().filter(|(s, _, _)| s.is_none());
        let own: Vec<_> = self.entries.iter().filter(|(s, _, _)| s.as_deref() == Some(task.as_str())).collect();
        global.chain(own).map(|(_, k, v)| (k.as_str(), v.as_str()))
    }
}

const MODEL_KEYS: [&str; 6] = [
    "depth",
    "branch_channels",
    "bottleneck_channels",
    "kernel_sizes",
    "se_reduction",
    "even_kernels",
];

fn set_model_key(m: &mut IncepSEConfig, key: &str, value: &str) -> Result<()> {
    let bad = |e: String| Error::Parse {
        context: format!("config key {key}"),
        reason: e,
    };
    let u = |v: &str| v.trim().parse::<usize>().map_err(|e| bad(format!("{v:?}: {e}")));
    match key {
        "depth" => m.depth = u(value)?,
        "branch_channels" => m.branch_channels = u(value)?,
        "bottleneck_channels" => m.bottleneck_channels = u(value)?,
        "se_reduction" => m.se_reduction = u(value)?,
        "kernel_sizes" => m.kernel_sizes = value.split(',').map(u).collect::<Result<_>>()?,
        "even_kernels" => {
            m.allow_even_kernels = value.parse().map_err(|e: std::str::ParseBoolError| bad(e.to_string()))?
        }
        _ => unreachable!(),
    }
    Ok(())
}

/// Flag values that override the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub clip_norm: Option<String>,
    pub weight_decay: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    /// Extra `key=value` pairs.
    pub set: Vec<String>,
}

/// Fully resolved training run.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub train: TrainConfig,
    pub model: IncepSEConfig,
}

impl RunSpec {
    /// Per-task defaults, then the config file (global lines,
    /// then the task section), then flags. Tasks outside PTB-XL start from
    /// the `super` row.
    pub fn resolve(task: &str, num_classes: usize, leads: usize, file: Option<&ConfigFile>, o: &Overrides) -> Result<Self> {
        let kind = task.parse::<TaskKind>().unwrap_or(TaskKind::Super);
        let mut train = TrainConfig::for_task(kind);
        train.task = task.to_string();
        let mut model = IncepSEConfig::new(num_classes);
        model.input_channels = leads;
        let mut apply = |k: &str, v: &str| -> Result<()> {
            if MODEL_KEYS.contains(&k) {
                set_model_key(&mut model, k, v)
            } else if k == "task" {
                Ok(())
            } else {
                train.set(k, v)
            }
        };
        if let Some(f) = file {
            for (k, v) in f.for_task(task) {
                apply(k, v)?;
            }
        }
        if let Some(c) = &o.clip_norm {
            apply("clip_norm", c)?;
        }
        for kv in &o.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse {
                context: "--set".into(),
                reason: format!("expected key=value, got {kv:?}"),
            })?;
            apply(k.trim(), v.trim())?;
        }
        if let Some(w) = o.weight_decay {
            train.weight_decay = w;
        }
        if let Some(b) = o.batch_size {
            train.batch_size = b;
        }
        if let Some(e) = o.epochs {
            train.epochs = e;
        }
        if let Some(lr) = o.lr {
            train.base_lr = lr;
        }
        if let Some(s) = o.seed {
            train.seed = s;
        }
        train.validate()?;
        model.dropout_p = train.dropout_p;
        model.validate()?;
        Ok(RunSpec { train, model })
    }

    /// `key = value` text that [`RunSpec::resolve`] reads back.
    pub fn to_config_text(&self) -> String {
        let mut s = self.train.to_string();
        let m = &self.model;
        writeln!(s, "depth = {}", m.depth).unwrap();
        writeln!(s, "branch_channels = {}", m.branch_channels).unwrap();
        writeln!(s, "bottleneck_channels = {}", m.bottleneck_channels).unwrap();
        let ks: Vec<String> = m.kernel_sizes.iter().map(usize::to_string).collect();
        writeln!(s, "kernel_sizes = {}", ks.join(",")).unwrap();
        writeln!(s, "se_reduction = {}", m.se_reduction).unwrap();
        writeln!(s, "even_kernels = {}", m.allow_even_kernels).unwrap();
        s
    }
}

/// Writes the resolved settings of a command into `dir` before it runs.
pub fn echo_config(dir: &Path, command: &str, lines: &[(&str, String)], body: Option<&str>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut text = format!("# incepse {command}\n");
    for (k, v) in lines {
        writeln!(text, "{k} = {v}").unwrap();
    }
    if let Some(b) = body {
        text.push_str(b);
    }
    let path = dir.join(EFFECTIVE_CONFIG);
    fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
}

/// `3`, `0-9` (inclusive) or `1,4,7`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = |reason: String| Error::Parse {
        context: "--seeds".into(),
        reason,
    };
    let num = |v: &str| v.trim().parse::<u64>().map_err(|e| bad(format!("{v:?}: {e}")));
    let mut out = Vec::new();
    for part in s.split(',') {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if b < a {
                    return Err(bad(format!("empty range {part}")));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    Ok(out)
}

/// Task spec from an explicit mapping file, the built-in PTB-XL table, or
/// a `tasks.txt` next to the manifest.
pub fn resolve_task(task: &str, mapping: Option<&Path>, manifest: Option<&Path>) -> Result<TaskSpec> {
    if let Some(m) = mapping {
        return TaskSpec::from_mapping_file(m, task);
    }
    if let Ok(kind) = task.parse::<TaskKind>() {
        return TaskSpec::ptbxl(kind);
    }
    if let Some(dir) = manifest.and_then(Path::parent) {
        let side = dir.join(TASKS_FILE);
        if side.exists() {
            return TaskSpec::from_mapping_file(side, task);
        }
    }
    Err(Error::UnknownTask(task.to_string()))
}

pub fn load_data(manifest: &Path, task: &TaskSpec, leads: usize, fs_hz: f64) -> Result<Dataset> {
    load_manifest(manifest, task, &ManifestOptions { leads, fs_hz })
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_override_globals() {
        let f = ConfigFile::parse("lr = 0.5\nepochs = 3\n[super]\nlr = 0.02 # peak\n[sub]\nlr = 9\n", "t").unwrap();
        let r = RunSpec::resolve("super", 5, 12, Some(&f), &Overrides::default()).unwrap();
        assert_eq!(r.train.base_lr, 0.02);
        assert_eq!(r.train.epochs, 3);
        assert_eq!(r.train.dropout_p, 0.11);
    }

    #[test]
    fn flags_beat_file() {
        let f = ConfigFile::parse("clip_norm = 0.5\nbatch_size = 8\ndepth = 2\n", "t").unwrap();
        let o = Overrides {
            clip_norm: Some("none".into()),
            batch_size: Some(4),
            set: vec!["branch_channels=6".into()],
            ..Default::default()
        };
        let r = RunSpec::resolve("sub", 23, 12, Some(&f), &o).unwrap();
        assert_eq!(r.train.clip_norm, None);
        assert_eq!(r.train.batch_size, 4);
        assert_eq!((r.model.depth, r.model.branch_channels), (2, 6));
    }

    #[test]
    fn effective_config_round_trips() {
        let f = ConfigFile::parse("depth = 3\nkernel_sizes = 5,7\n[rhythm]\nweight_decay = 0.01\n", "t").unwrap();
        let r = RunSpec::resolve("rhythm", 12, 12, Some(&f), &Overrides::default()).unwrap();
        let back = ConfigFile::parse(&r.to_config_text(), "echo").unwrap();
        let r2 = RunSpec::resolve("rhythm", 12, 12, Some(&back), &Overrides::default()).unwrap();
        assert_eq!(r2.train, r.train);
        assert_eq!(r2.model, r.model);
    }

    #[test]
    fn seeds() {
        assert_eq!(parse_seeds("0-3").unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(parse_seeds("5,1,2-2").unwrap(), vec![5, 1, 2]);
        assert!(parse_seeds("3-1").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn population_std() {
        assert_eq!(mean_std(&[0.9]), (0.9, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
