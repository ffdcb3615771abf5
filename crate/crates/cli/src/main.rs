//! `netab` command-line entry point.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.

mod commands;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use netab::eval::EvalError;
use netab::synth::SynthConfig;
use netab::training::{GateScores, Method, TrainError};

use crate::commands::{absolute_opt, default_methods};
use crate::manifest::{absolute, CorruptRun, SweepRun, TrainRun};

#[derive(Parser)]
#[command(name = "netab", version, about = "Sentence polarity classification under label noise")]
struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and report clean test metrics.
    Train(TrainArgs),
    /// Train both methods across noise rates and seeds.
    Sweep(SweepArgs),
    /// Score a checkpoint on a labeled corpus.
    Evaluate(EvaluateArgs),
    /// Flip an exact fraction of labels.
    Corrupt(CorruptArgs),
    /// Repeat a run recorded in a manifest.
    Replay(ReplayArgs),
    /// Write the bundled toy corpus or a planted-token synthetic corpus.
    Synth(SynthArgs),
}

/// Hyperparameter overrides; each maps to the config-file key of the same
/// name.
#[derive(Args, Default)]
struct HyperFlags {
    /// Key=value file applied before these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "epochs")]
    total_epochs: Option<usize>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long = "dropout")]
    dropout_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    fine_tune_embeddings: Option<bool>,
    #[arg(long)]
    gate_scores: Option<GateScores>,
    #[arg(long)]
    share_optimizer_state: Option<bool>,
    #[arg(long)]
    grad_clip_norm: Option<f64>,
    #[arg(long)]
    pin_identity_transition: Option<bool>,
    #[arg(long)]
    force_gate_open: Option<bool>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    feature_maps: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
}

impl HyperFlags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        fn put<T: ToString>(out: &mut Vec<(&'static str, String)>, key: &'static str, v: &Option<T>) {
            if let Some(v) = v {
                out.push((key, v.to_string()));
            }
        }
        let mut out = Vec::new();
        put(&mut out, "total_epochs", &self.total_epochs);
        put(&mut out, "warmup_epochs", &self.warmup_epochs);
        put(&mut out, "batch_size", &self.batch_size);
        put(&mut out, "lr", &self.lr);
        put(&mut out, "lr_decay", &self.lr_decay);
        put(&mut out, "dropout_rate", &self.dropout_rate);
        put(&mut out, "seed", &self.seed);
        put(&mut out, "fine_tune_embeddings", &self.fine_tune_embeddings);
        let gate = self.gate_scores.map(|g| serde_json::to_value(g).expect("enum serializes").as_str().expect("string").to_string());
        put(&mut out, "gate_scores", &gate);
        put(&mut out, "share_optimizer_state", &self.share_optimizer_state);
        put(&mut out, "grad_clip_norm", &self.grad_clip_norm);
        put(&mut out, "pin_identity_transition", &self.pin_identity_transition);
        put(&mut out, "force_gate_open", &self.force_gate_open);
        put(&mut out, "embed_dim", &self.embed_dim);
        put(&mut out, "feature_maps", &self.feature_maps);
        put(&mut out, "max_len", &self.max_len);
        out
    }

    fn resolve(&self) -> Result<settings::Settings> {
        settings::resolve(self.config.as_deref(), &self.pairs())
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Validation corpus; without it a tenth of the test corpus is held out.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Whitespace-separated word-vector file (token then values).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value = "netab")]
    method: Method,
    /// Fraction of training labels to flip before training.
    #[arg(long, default_value_t = 0.0)]
    noise_rate: f64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    hyper: HyperFlags,
}

#[derive(Args)]
struct SweepArgs {
    /// One corpus, split 80/20 with a tenth of the 20 held out for validation.
    #[arg(long, conflicts_with_all = ["train", "test"])]
    corpus: Option<PathBuf>,
    #[arg(long, requires = "test")]
    train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    test: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5")]
    rates: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "netab,cnn")]
    methods: Vec<Method>,
    #[arg(long, env = "NETAB_WORKERS", default_value_t = 1)]
    workers: usize,
    /// Seed for the train / validation / test partition.
    #[arg(long, default_value_t = 1)]
    split_seed: u64,
    /// Store measured seconds per run instead of 0 (output then varies).
    #[arg(long)]
    record_wall_time: bool,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    hyper: HyperFlags,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    test: PathBuf,
}

#[derive(Args)]
struct CorruptArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    rate: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory (file for corrupt runs); defaults to the original.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Write the bundled 40-sentence toy corpus instead.
    #[arg(long)]
    toy: bool,
    #[arg(long, default_value_t = 2000)]
    sentences: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => {
            commands::check_rate(a.noise_rate)?;
            let run = TrainRun {
                train: absolute(&a.train)?,
                test: absolute(&a.test)?,
                val: absolute_opt(a.val.as_deref())?,
                embeddings: absolute_opt(a.embeddings.as_deref())?,
                method: a.method,
                noise_rate: a.noise_rate,
                settings: a.hyper.resolve()?,
            };
            commands::run_train(&run, &a.out)
        }
        Command::Sweep(a) => {
            for &r in &a.rates {
                commands::check_rate(r)?;
            }
            let methods = if a.methods.is_empty() { default_methods() } else { a.methods };
            let run = SweepRun {
                corpus: absolute_opt(a.corpus.as_deref())?,
                train: absolute_opt(a.train.as_deref())?,
                test: absolute_opt(a.test.as_deref())?,
                embeddings: absolute_opt(a.embeddings.as_deref())?,
                rates: a.rates,
                seeds: a.seeds,
                methods,
                split_seed: a.split_seed,
                workers: a.workers.max(1),
                record_wall_time: a.record_wall_time,
                settings: a.hyper.resolve()?,
            };
            commands::run_sweep(&run, &a.out)
        }
        Command::Evaluate(a) => commands::run_evaluate(&a.checkpoint, &a.test),
        Command::Corrupt(a) => commands::run_corrupt(&CorruptRun { input: absolute(&a.input)?, rate: a.rate, seed: a.seed }, &a.out),
        Command::Replay(a) => commands::run_replay(&a.manifest, a.out.as_deref()),
        Command::Synth(a) => {
            let config = SynthConfig { sentences: a.sentences, ..SynthConfig::default() };
            commands::run_synth(&a.out, a.toy, &config, a.seed)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err.chain().any(|c| {
        c.downcast_ref::<TrainError>().is_some_and(TrainError::is_numerical) || c.downcast_ref::<EvalError>().is_some_and(EvalError::is_numerical)
    });
    if numerical {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).target(env_logger::Target::Stderr).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
