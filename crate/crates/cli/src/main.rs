//! `hiergi`: train, evaluate and run hierarchical GI classifiers and double
//! encoder-decoder polyp segmenters.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod experiment;
mod infer;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hiergi::data::synthetic::{make_classification, make_segmentation, DEFAULT_HEIGHT, DEFAULT_WIDTH};
use hiergi::data::DATA_DIR_ENV;
use hiergi::{Aggregation, Execution, LabelHierarchy, Task};

/// Error with its exit code attached.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config, paths or incompatible inputs (exit 2).
    Usage(anyhow::Error),
    /// Anything that fails once work has started (exit 1).
    Runtime(anyhow::Error),
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub trait Classify<T> {
    fn usage(self) -> CmdResult<T>;
    fn runtime(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn runtime(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

pub fn usage_error(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(anyhow::anyhow!("{msg}"))
}

#[derive(Parser, Debug)]
#[command(name = "hiergi", version, about, long_about = None)]
#[command(after_help = format!(
    "Relative manifest and hierarchy paths are resolved against ${DATA_DIR_ENV} when it is set."
))]
struct Cli {
    /// Run data-parallel loops on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,

    /// Thread bound; `cv` trains this many folds concurrently.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Log more (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model, validating on `val_manifest` or on the holdout fold.
    Train(RunArgs),
    /// k-fold cross-validation; optionally scores the fold ensemble on a test manifest.
    Cv(RunArgs),
    /// Score checkpoints (ensembled when several) or precomputed masks on a manifest.
    Eval(infer::EvalArgs),
    /// Write predictions for a directory or CSV list of images.
    Predict(infer::PredictArgs),
    /// Generate a synthetic dataset in the repository's manifest formats.
    MakeSynthetic(SyntheticArgs),
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Experiment config (JSON). Missing fields take the task defaults.
    #[arg(short, long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Task; required when the config does not name one.
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,

    #[arg(long, value_name = "CSV")]
    pub train_manifest: Option<PathBuf>,

    #[arg(long, value_name = "CSV")]
    pub val_manifest: Option<PathBuf>,

    #[arg(long, value_name = "CSV")]
    pub test_manifest: Option<PathBuf>,

    /// Hierarchy JSON (classification); defaults to the built-in taxonomy.
    #[arg(long, value_name = "FILE")]
    pub hierarchy: Option<PathBuf>,

    /// Model registry key, e.g. tiny-cnn or double-tiny-unet.
    #[arg(long, value_name = "KEY")]
    pub model: Option<String>,

    #[arg(long, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,

    #[arg(long)]
    pub name: Option<String>,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub folds: Option<usize>,

    #[arg(long)]
    pub epochs_per_cycle: Option<usize>,

    #[arg(long)]
    pub cycles: Option<usize>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    #[arg(long)]
    pub lr: Option<f64>,

    /// Disable flip test-time augmentation.
    #[arg(long)]
    pub no_tta: bool,

    /// Continue from a checkpoint (stem, .ckpt file or run directory). `train` only.
    #[arg(long, value_name = "CHECKPOINT")]
    pub resume: Option<PathBuf>,

    /// Print the fully materialized config and exit.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskArg {
    Classify,
    Segment,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Classify => Task::Classify,
            TaskArg::Segment => Task::Segment,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AggregationArg {
    #[default]
    PerImageMean,
    Pooled,
}

impl From<AggregationArg> for Aggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::PerImageMean => Aggregation::PerImageMean,
            AggregationArg::Pooled => Aggregation::Pooled,
        }
    }
}

#[derive(Args, Debug)]
struct SyntheticArgs {
    #[arg(long, value_enum)]
    task: TaskArg,

    /// Number of images (classification: spread evenly over the findings).
    #[arg(short, long)]
    n: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(short, long, value_name = "DIR")]
    out: PathBuf,

    /// Hierarchy whose findings name the classes (classification).
    #[arg(long, value_name = "FILE")]
    hierarchy: Option<PathBuf>,

    #[arg(long, default_value_t = DEFAULT_WIDTH)]
    width: u32,

    #[arg(long, default_value_t = DEFAULT_HEIGHT)]
    height: u32,
}

pub struct Context {
    pub exec: Execution,
    pub jobs: usize,
}

fn make_synthetic(args: SyntheticArgs) -> CmdResult {
    if args.n == 0 || args.width < 8 || args.height < 8 {
        return Err(usage_error("need n >= 1 and images of at least 8x8 pixels"));
    }
    let summary = match args.task {
        TaskArg::Classify => {
            let h = match &args.hierarchy {
                Some(p) => LabelHierarchy::from_path(hiergi::data::resolve_data_path(p)).usage()?,
                None => LabelHierarchy::default_taxonomy(),
            };
            if args.n < h.n_find() {
                log::warn!("{} images for {} findings: some findings get none", args.n, h.n_find());
            }
            make_classification(&args.out, args.n, args.seed, &h, args.width, args.height).runtime()?
        }
        TaskArg::Segment => make_segmentation(&args.out, args.n, args.seed, args.width, args.height).runtime()?,
    };
    println!("wrote {} samples; manifest {}", summary.n, summary.manifest.display());
    if let Some(h) = summary.hierarchy {
        println!("hierarchy {}", h.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let ctx = Context {
        exec,
        jobs: cli.jobs.unwrap_or(1),
    };
    let result = match cli.command {
        Command::Train(a) => experiment::train(a, &ctx),
        Command::Cv(a) => experiment::cv(a, &ctx),
        Command::Eval(a) => infer::eval(a, &ctx),
        Command::Predict(a) => infer::predict(a, &ctx),
        Command::MakeSynthetic(a) => make_synthetic(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
