mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use incepse::signal::BandpassSpec;
use incepse::verify::Scale;

use commands::{CmdResult, DataArgs, EvalArgs, PredictArgs, PreprocessArgs, SynthArgs, TrainArgs};
use run::Overrides;

/// IncepSE: preprocessing, training, evaluation and ablations for
/// multi-label 1D signal classification.
#[derive(Parser)]
#[command(name = "incepse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataOpts {
    /// Manifest CSV (`record_id,fold,signal_file,labels`).
    #[arg(long)]
    data: PathBuf,
    /// all, diag, sub, super, form, rhythm, or a task in the mapping file.
    #[arg(long, default_value = "super")]
    task: String,
    /// `statement,class` mapping file with `[task]` sections.
    #[arg(long)]
    mapping: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    leads: usize,
    /// Sampling rate in Hz.
    #[arg(long, default_value_t = 100.0)]
    fs: f64,
}

impl DataOpts {
    fn args(&self) -> DataArgs {
        DataArgs {
            manifest: self.data.clone(),
            task: self.task.clone(),
            mapping: self.mapping.clone(),
            leads: self.leads,
            fs_hz: self.fs,
        }
    }
}

#[derive(Args)]
struct TrainOpts {
    #[command(flatten)]
    data: DataOpts,
    /// `key = value` config file; `[task]` sections override global lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Single run with this seed. Without --seed or --seeds, ten runs start
    /// from the config seed.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Seed list: `0-9` (inclusive) or `1,4,7`.
    #[arg(long)]
    seeds: Option<String>,
    /// Global gradient-norm cap, or `none`.
    #[arg(long)]
    clip_norm: Option<String>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Any config key as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl TrainOpts {
    fn args(&self) -> TrainArgs {
        TrainArgs {
            data: self.data.args(),
            out: self.out.clone(),
            config: self.config.clone(),
            overrides: Overrides {
                clip_norm: self.clip_norm.clone(),
                weight_decay: self.weight_decay,
                batch_size: self.batch_size,
                epochs: self.epochs,
                lr: self.lr,
                seed: self.seed,
                set: self.set.clone(),
            },
            seeds: self.seeds.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-label data set in manifest form.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        records: usize,
        /// Class prevalences, summing to 1.
        #[arg(long, value_delimiter = ',', default_value = "0.9,0.1")]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        #[arg(long, default_value_t = 12)]
        leads: usize,
        #[arg(long, default_value_t = 100.0)]
        fs: f64,
        #[arg(long, default_value_t = 0.0)]
        extra_label_prob: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Bandpass-filter (and standardize) every record.
    Preprocess {
        #[command(flatten)]
        data: DataOpts,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        low: f64,
        #[arg(long, default_value_t = 45.0)]
        high: f64,
        #[arg(long, default_value_t = 3)]
        order: usize,
        /// Skip per-lead standardization.
        #[arg(long)]
        no_standardize: bool,
    },
    /// Train one model per seed and aggregate test AUROC.
    Train(TrainOpts),
    /// Macro AUROC of a checkpoint on one split.
    Evaluate {
        #[command(flatten)]
        data: DataOpts,
        #[arg(long)]
        checkpoint: PathBuf,
        /// train, val, test or all.
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = 128)]
        batch_size: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-record class probabilities for every manifest row.
    Predict {
        #[command(flatten)]
        data: DataOpts,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 128)]
        batch_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep clipping values over seeds.
    AblateClip {
        #[command(flatten)]
        train: TrainOpts,
        #[arg(long, default_value = "none,0.5,0.3,0.1")]
        values: String,
    },
    /// Clipping + weight decay vs weight decay only vs neither.
    AblateStability(TrainOpts),
    /// Finite-difference gradient checks.
    Gradcheck {
        /// op, layer, mini or all.
        #[arg(long, default_value = "all")]
        scale: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Synth {
            out,
            records,
            ratios,
            seconds,
            noise,
            leads,
            fs,
            extra_label_prob,
            seed,
        } => commands::synth(&SynthArgs {
            out,
            records,
            ratios,
            seconds,
            noise,
            leads,
            fs_hz: fs,
            extra_label_prob,
            seed,
        }),
        Command::Preprocess {
            data,
            out,
            low,
            high,
            order,
            no_standardize,
        } => commands::preprocess(&PreprocessArgs {
            band: BandpassSpec {
                low_hz: low,
                high_hz: high,
                fs_hz: data.fs,
                order,
            },
            data: data.args(),
            out,
            standardize: !no_standardize,
        }),
        Command::Train(t) => commands::train(&t.args()),
        Command::Evaluate {
            data,
            checkpoint,
            split,
            batch_size,
            out,
        } => commands::evaluate_cmd(&EvalArgs {
            data: data.args(),
            checkpoint,
            split,
            batch_size,
            out,
        }),
        Command::Predict {
            data,
            checkpoint,
            batch_size,
            out,
        } => commands::predict(&PredictArgs {
            data: data.args(),
            checkpoint,
            batch_size,
            out,
        }),
        Command::AblateClip { train, values } => commands::ablate_clip(&train.args(), &values),
        Command::AblateStability(t) => commands::ablate_stability(&t.args()),
        Command::Gradcheck { scale, seed } => {
            let scales = if scale == "all" {
                vec![Scale::Op, Scale::Layer, Scale::Mini]
            } else {
                vec![scale.parse::<Scale>()?]
            };
            commands::gradcheck(&scales, seed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
