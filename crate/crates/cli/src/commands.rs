use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use incepse::data::{synth_dataset, write_manifest, Dataset, SynthSpec};
use incepse::model::load_checkpoint_for;
use incepse::signal::{filter_dataset, standardize, write_stats, BandpassSpec};
use incepse::training::{evaluate, fit, predict_split, worker_count, TrainReport};
use incepse::verify::{run_suite, Scale};
use incepse::{Error, Result};

use crate::run::{
    echo_config, load_data, mean_std, parse_seeds, resolve_task, ConfigFile, Overrides, RunSpec, TASKS_FILE,
};

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    fs::write(path, text).map_err(io(path))
}

/// Where to find the data and how to read it.
#[derive(Clone, Debug)]
pub struct DataArgs {
    pub manifest: PathBuf,
    pub task: String,
    pub mapping: Option<PathBuf>,
    pub leads: usize,
    pub fs_hz: f64,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let task = resolve_task(&self.task, self.mapping.as_deref(), Some(&self.manifest))?;
        load_data(&self.manifest, &task, self.leads, self.fs_hz)
    }

    fn echo(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("data", self.manifest.display().to_string()),
            ("task", self.task.clone()),
            ("leads", self.leads.to_string()),
            ("fs_hz", format!("{:?}", self.fs_hz)),
        ];
        if let Some(m) = &self.mapping {
            v.push(("mapping", m.display().to_string()));
        }
        v
    }
}

pub struct SynthArgs {
    pub out: PathBuf,
    pub records: usize,
    pub ratios: Vec<f64>,
    pub seconds: f64,
    pub noise: f64,
    pub leads: usize,
    pub fs_hz: f64,
    pub extra_label_prob: f64,
    pub seed: u64,
}

pub fn synth(a: &SynthArgs) -> CmdResult {
    let mut spec = SynthSpec::new(a.records, a.ratios.clone());
    spec.seconds = a.seconds;
    spec.noise_sigma = a.noise;
    spec.leads = a.leads;
    spec.fs_hz = a.fs_hz;
    spec.extra_label_prob = a.extra_label_prob;
    let ratios: Vec<String> = a.ratios.iter().map(|r| format!("{r:?}")).collect();
    echo_config(
        &a.out,
        "synth",
        &[
            ("records", a.records.to_string()),
            ("ratios", ratios.join(",")),
            ("seconds", format!("{:?}", a.seconds)),
            ("noise", format!("{:?}", a.noise)),
            ("leads", a.leads.to_string()),
            ("fs_hz", format!("{:?}", a.fs_hz)),
            ("extra_label_prob", format!("{:?}", a.extra_label_prob)),
            ("seed", a.seed.to_string()),
        ],
        None,
    )?;
    let ds = synth_dataset(&spec, a.seed)?;
    let manifest = write_manifest(&ds, &a.out)?;
    let mut tasks = String::from("[synthetic]\n");
    for c in &ds.task.class_names {
        writeln!(tasks, "{c},{c}").unwrap();
    }
    write(&a.out.join(TASKS_FILE), &tasks)?;
    println!("wrote {} records to {}", ds.len(), manifest.display());
    Ok(())
}

pub struct PreprocessArgs {
    pub data: DataArgs,
    pub out: PathBuf,
    pub band: BandpassSpec,
    pub standardize: bool,
}

pub fn preprocess(a: &PreprocessArgs) -> CmdResult {
    a.band.validate()?;
    let mut lines = a.data.echo();
    lines.extend([
        ("low_hz", format!("{:?}", a.band.low_hz)),
        ("high_hz", format!("{:?}", a.band.high_hz)),
        ("order", a.band.order.to_string()),
        ("standardize", a.standardize.to_string()),
    ]);
    echo_config(&a.out, "preprocess", &lines, None)?;
    let ds = a.data.load()?;
    let mut out = filter_dataset(&ds, &a.band)?;
    if a.standardize {
        out = standardize(&out)?;
        write_stats(out.stats.as_ref().expect("set by standardize"), a.out.join("stats.txt"))?;
    }
    let manifest = write_manifest(&out, &a.out)?;
    if let Some(dir) = a.data.manifest.parent() {
        let side = dir.join(TASKS_FILE);
        if side.exists() {
            fs::copy(&side, a.out.join(TASKS_FILE)).map_err(io(&side))?;
        }
    }
    println!("wrote {} filtered records to {}", out.len(), manifest.display());
    Ok(())
}

pub struct TrainArgs {
    pub data: DataArgs,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub overrides: Overrides,
    pub seeds: Option<String>,
}

/// Outcome of one seed.
pub struct SeedRun {
    pub seed: u64,
    pub result: std::result::Result<TrainReport, String>,
}

pub struct Aggregate {
    pub label: String,
    pub runs: Vec<SeedRun>,
}

impl Aggregate {
    pub fn test_aurocs(&self) -> Vec<f64> {
        self.runs.iter().filter_map(|r| r.result.as_ref().ok()).map(|r| r.test_auroc).collect()
    }

    pub fn final_val_aurocs(&self) -> Vec<f64> {
        self.runs
            .iter()
            .filter_map(|r| r.result.as_ref().ok())
            .map(|r| r.final_val_auroc())
            .collect()
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.result.is_err()).count()
    }

    fn row(&self) -> String {
        let (m, s) = mean_std(&self.test_aurocs());
        let (vm, vs) = mean_std(&self.final_val_aurocs());
        format!(
            "{},{},{},{m:?},{s:?},{vm:?},{vs:?}",
            self.label,
            self.runs.len(),
            self.failures()
        )
    }
}

pub const AGGREGATE_HEADER: &str =
    "setting,runs,failures,test_auroc_mean,test_auroc_std,final_val_auroc_mean,final_val_auroc_std";
/// Runs per setting when no seeds are given.
pub const DEFAULT_RUNS: u64 = 10;

pub const RUNS_HEADER: &str = "seed,status,best_epoch,best_val_auroc,final_val_auroc,test_auroc";

/// `--seeds`, else the single `--seed`, else ten runs from the config seed.
fn seeds_for(a: &TrainArgs, spec: &RunSpec) -> Result<Vec<u64>> {
    match (&a.seeds, a.overrides.seed) {
        (Some(s), _) => parse_seeds(s),
        (None, Some(s)) => Ok(vec![s]),
        (None, None) => Ok((0..DEFAULT_RUNS).map(|i| spec.train.seed + i).collect()),
    }
}

fn resolve(a: &TrainArgs, ds: &Dataset) -> Result<RunSpec> {
    let file = a.config.as_deref().map(ConfigFile::read).transpose()?;
    RunSpec::resolve(&a.data.task, ds.num_classes(), ds.leads, file.as_ref(), &a.overrides)
}

/// Runs every seed (in parallel over `INCEPSE_WORKERS` threads), writing
/// `seed_<s>/report.csv` and `seed_<s>/best.ckpt` under `dir`.
fn run_seeds(spec: &RunSpec, ds: &Dataset, seeds: &[u64], dir: &Path, label: &str) -> Result<Aggregate> {
    let one = |seed: u64| -> SeedRun {
        let mut cfg = spec.train.clone();
        cfg.seed = seed;
        let run_dir = dir.join(format!("seed_{seed}"));
        let result = fs::create_dir_all(&run_dir)
            .map_err(io(&run_dir))
            .and_then(|_| fit(&cfg, &spec.model, ds, Some(&run_dir)))
            .and_then(|out| {
                out.report.write(run_dir.join("report.csv"))?;
                Ok(out.report)
            })
            .map_err(|e| e.to_string());
        if let Err(e) = &result {
            eprintln!("{label} seed {seed} failed: {e}");
        }
        SeedRun { seed, result }
    };
    let workers = worker_count().min(seeds.len()).max(1);
    let runs: Vec<SeedRun> = if workers == 1 {
        seeds.iter().map(|&s| one(s)).collect()
    } else {
        let per = seeds.len().div_ceil(workers);
        std::thread::scope(|sc| {
            let handles: Vec<_> = seeds
                .chunks(per)
                .map(|chunk| sc.spawn(move || chunk.iter().map(|&s| one(s)).collect::<Vec<_>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("seed worker panicked")).collect()
        })
    };
    let agg = Aggregate {
        label: label.to_string(),
        runs,
    };
    let mut table = format!("{RUNS_HEADER}\n");
    for r in &agg.runs {
        match &r.result {
            Ok(rep) => writeln!(
                table,
                "{},ok,{},{:?},{:?},{:?}",
                r.seed,
                rep.best_epoch,
                rep.best_val_auroc(),
                rep.final_val_auroc(),
                rep.test_auroc
            ),
            Err(_) => writeln!(table, "{},failed,,,,", r.seed),
        }
        .unwrap();
    }
    write(&dir.join("runs.csv"), &table)?;
    Ok(agg)
}

fn finish(aggs: &[Aggregate], table: &Path) -> CmdResult {
    let mut text = format!("{AGGREGATE_HEADER}\n");
    for a in aggs {
        writeln!(text, "{}", a.row()).unwrap();
        let (m, s) = mean_std(&a.test_aurocs());
        println!(
            "{:<20} runs {:>2}  failed {}  test AUROC {m:.4} ± {s:.2e}",
            a.label,
            a.runs.len(),
            a.failures()
        );
    }
    write(table, &text)?;
    let failed: usize = aggs.iter().map(Aggregate::failures).sum();
    if failed > 0 {
        let first = aggs
            .iter()
            .flat_map(|a| &a.runs)
            .find_map(|r| r.result.as_ref().err())
            .cloned()
            .unwrap_or_default();
        return Err(CmdError::RunsFailed(format!("{failed} run(s) failed; first: {first}")));
    }
    Ok(())
}

/// Command failure: a library error, or runs/checks that completed but failed.
#[derive(Debug)]
pub enum CmdError {
    Lib(Error),
    RunsFailed(String),
    ChecksFailed,
}

impl From<Error> for CmdError {
    fn from(e: Error) -> Self {
        CmdError::Lib(e)
    }
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CmdError::Lib(e) => write!(f, "{e}"),
            CmdError::RunsFailed(m) => write!(f, "{m}"),
            CmdError::ChecksFailed => write!(f, "gradient check failed"),
        }
    }
}

impl CmdError {
    /// 2 for bad input, 1 for failures at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Lib(e) if e.is_validation() => 2,
            _ => 1,
        }
    }
}

pub type CmdResult = std::result::Result<(), CmdError>;

pub fn train(a: &TrainArgs) -> CmdResult {
    let ds = a.data.load()?;
    let spec = resolve(a, &ds)?;
    let seeds = seeds_for(a, &spec)?;
    echo_run(a, &spec, &seeds, "train", &[])?;
    let agg = run_seeds(&spec, &ds, &seeds, &a.out, &a.data.task)?;
    finish(&[agg], &a.out.join("aggregate.csv"))
}

fn echo_run(a: &TrainArgs, spec: &RunSpec, seeds: &[u64], command: &str, extra: &[(&str, String)]) -> Result<()> {
    let mut lines = a.data.echo();
    let seed_list: Vec<String> = seeds.iter().map(u64::to_string).collect();
    lines.push(("seeds", seed_list.join(",")));
    lines.push(("workers", worker_count().to_string()));
    lines.extend(extra.iter().cloned());
    // the task line is already in the data block
    let body: String = spec
        .to_config_text()
        .lines()
        .filter(|l| !l.starts_with("task ="))
        .map(|l| format!("{l}\n"))
        .collect();
    echo_config(&a.out, command, &lines, Some(&body))
}

pub fn ablate_clip(a: &TrainArgs, values: &str) -> CmdResult {
    let ds = a.data.load()?;
    let spec = resolve(a, &ds)?;
    let seeds = seeds_for(a, &spec)?;
    let mut settings = Vec::new();
    for v in values.split(',').map(str::trim) {
        let mut s = spec.clone();
        s.train.set("clip_norm", v)?;
        s.train.validate()?;
        let label = match s.train.clip_norm {
            Some(c) => format!("clip {c}"),
            None => "no clip".to_string(),
        };
        settings.push((label, s));
    }
    echo_run(a, &spec, &seeds, "ablate-clip", &[("clip_values", values.to_string())])?;
    let mut aggs = Vec::new();
    for (label, s) in &settings {
        let dir = a.out.join(label.replace(' ', "_"));
        aggs.push(run_seeds(s, &ds, &seeds, &dir, label)?);
    }
    finish(&aggs, &a.out.join("ablate_clip.csv"))
}

/// Clipping + weight decay, weight decay only, neither.
pub fn ablate_stability(a: &TrainArgs) -> CmdResult {
    let ds = a.data.load()?;
    let spec = resolve(a, &ds)?;
    let seeds = seeds_for(a, &spec)?;
    if spec.train.clip_norm.is_none() || spec.train.weight_decay == 0.0 {
        return Err(Error::InvalidArgument(
            "ablate-stability needs a clip norm and a nonzero weight decay to ablate".into(),
        )
        .into());
    }
    echo_run(a, &spec, &seeds, "ablate-stability", &[])?;
    let mut decay_only = spec.clone();
    decay_only.train.clip_norm = None;
    let mut none = decay_only.clone();
    none.train.weight_decay = 0.0;
    let mut aggs = Vec::new();
    for (label, dir, s) in [
        ("clipping+decay", "clip_decay", &spec),
        ("decay", "decay", &decay_only),
        ("none", "none", &none),
    ] {
        aggs.push(run_seeds(s, &ds, &seeds, &a.out.join(dir), label)?);
    }
    finish(&aggs, &a.out.join("ablate_stability.csv"))
}

pub struct EvalArgs {
    pub data: DataArgs,
    pub checkpoint: PathBuf,
    pub split: String,
    pub batch_size: usize,
    pub out: Option<PathBuf>,
}

fn split_folds(name: &str) -> Result<Vec<u8>> {
    Ok(match name {
        "train" => (1..=8).collect(),
        "val" => vec![9],
        "test" => vec![10],
        "all" => (1..=10).collect(),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown split {other:?} (train, val, test, all)"
            )))
        }
    })
}

pub fn evaluate_cmd(a: &EvalArgs) -> CmdResult {
    let folds = split_folds(&a.split)?;
    if let Some(out) = &a.out {
        let mut lines = a.data.echo();
        lines.extend([
            ("checkpoint", a.checkpoint.display().to_string()),
            ("split", a.split.clone()),
            ("batch_size", a.batch_size.to_string()),
        ]);
        echo_config(out, "evaluate", &lines, None)?;
    }
    let ds = a.data.load()?;
    let model = load_checkpoint_for(&a.checkpoint, ds.leads, ds.num_classes())?;
    let split = ds.folds(&folds);
    if split.is_empty() {
        return Err(Error::EmptySplit("evaluation").into());
    }
    let ev = evaluate(&model, &split, a.batch_size)?;
    let mut text = format!("macro_auroc = {:?}\nrecords = {}\n", ev.auroc.value, split.len());
    let skipped: Vec<&str> = ev.auroc.skipped.iter().map(|&c| ds.task.class_names[c].as_str()).collect();
    writeln!(text, "skipped = {}", skipped.join(",")).unwrap();
    for (c, a) in ev.auroc.per_class.iter().enumerate() {
        if let Some(v) = a {
            writeln!(text, "auroc.{} = {v:?}", ds.task.class_names[c]).unwrap();
        }
    }
    print!("{text}");
    if let Some(out) = &a.out {
        write(&out.join("evaluation.txt"), &text)?;
    }
    Ok(())
}

pub struct PredictArgs {
    pub data: DataArgs,
    pub checkpoint: PathBuf,
    pub batch_size: usize,
    pub out: PathBuf,
}

pub fn predict(a: &PredictArgs) -> CmdResult {
    let mut lines = a.data.echo();
    lines.extend([
        ("checkpoint", a.checkpoint.display().to_string()),
        ("batch_size", a.batch_size.to_string()),
    ]);
    echo_config(&a.out, "predict", &lines, None)?;
    let ds = a.data.load()?;
    let model = load_checkpoint_for(&a.checkpoint, ds.leads, ds.num_classes())?;
    let all = ds.all();
    let probs = predict_split(&model, &all, a.batch_size, worker_count())?;
    let c = ds.num_classes();
    let mut text = format!("record_id,{}\n", ds.task.class_names.join(","));
    for (r, row) in ds.records.iter().zip(probs.chunks(c)) {
        let cells: Vec<String> = row.iter().map(|p| format!("{p:?}")).collect();
        writeln!(text, "{},{}", r.record_id, cells.join(",")).unwrap();
    }
    let path = a.out.join("predictions.csv");
    write(&path, &text)?;
    println!("wrote {} rows to {}", ds.len(), path.display());
    Ok(())
}

pub fn gradcheck(scales: &[Scale], seed: u64) -> CmdResult {
    let mut ok = true;
    for &scale in scales {
        let t = std::time::Instant::now();
        for r in run_suite(scale, seed)? {
            let status = if r.passed() { "PASS" } else { "FAIL" };
            ok &= r.passed();
            println!(
                "{status} {:<40} max rel err {:.3e} (tol {:.0e}, {} elements)",
                r.name, r.report.max_rel_err, r.tolerance, r.report.checked
            );
        }
        println!("{scale:?} suite took {:.2?}", t.elapsed());
    }
    if ok {
        Ok(())
    } else {
        Err(CmdError::ChecksFailed)
    }
}
