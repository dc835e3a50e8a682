//! `coactivity`: simulate, infer, localize, correct faces, summarize,
//! sweep and evaluate.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use coactivity::Error;

#[derive(Parser, Debug)]
#[command(
    name = "coactivity",
    version,
    about = "Collaborative activity inference from multi-actor GPS and video streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Base seed; overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON run configuration. Missing keys take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (for `sweep`, the curve CSV).
    #[arg(long)]
    pub out: PathBuf,
}

/// Where inputs come from.
#[derive(Args, Debug, Clone)]
pub struct Inputs {
    /// Stream directory; overrides `data_dir` in the config.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory holding `chain_*.jsonl` from `infer`; defaults to --out.
    #[arg(long)]
    pub run: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Keyframes,
    Map,
    Video,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset: stream CSVs, truth.json and a config
    /// pointing at them.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the sampler chains and write chain_<k>.jsonl.
    Infer {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Trajectory posteriors conditioned on the sampled activities.
    Localize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        /// Only this actor (registry name); default all tracked actors.
        #[arg(long)]
        actor: Option<String>,
    },
    /// Posterior-corrected face identities.
    Faces {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Activity-aware summaries of the frame streams.
    Summarize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Keyframe count (keyframes, map); overrides the config.
        #[arg(long)]
        k: Option<usize>,
        /// Output video length in frames; overrides the config.
        #[arg(long)]
        length: Option<usize>,
    },
    /// Count error against meeting-place spread on synthetic data.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated place std values in metres.
        #[arg(long, value_delimiter = ',')]
        stds: Option<Vec<f64>>,
        /// Trials per std value.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Compare chains against truth.json.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        /// Ground truth; defaults to truth.json in the data directory.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

/// Failures the CLI maps to exit statuses.
#[derive(Debug)]
pub enum Fail {
    Usage(String),
    Run(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Run(e)
    }
}

pub fn usage(msg: impl Into<String>) -> Fail {
    Fail::Usage(msg.into())
}

/// Usage line of one subcommand.
pub fn usage_text(sub: &str) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    match cmd.find_subcommand_mut(sub) {
        Some(c) => c.render_usage().to_string(),
        None => cmd.render_usage().to_string(),
    }
}

fn exit_code(f: &Fail) -> u8 {
    match f {
        Fail::Usage(_) | Fail::Run(Error::Config(_)) => 1,
        Fail::Run(Error::Numerical(_)) => 3,
        Fail::Run(_) => 2,
    }
}

fn threads_from_env() -> Result<(), Fail> {
    let Ok(v) = std::env::var("COACTIVITY_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        usage(format!(
            "COACTIVITY_THREADS must be a positive integer, got '{v}'"
        ))
    })?;
    coactivity::par::set_thread_cap(n);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Fail> {
    threads_from_env()?;
    match cli.command {
        Command::Simulate { common } => commands::simulate(&common),
        Command::Infer { common, inputs } => commands::infer(&common, &inputs),
        Command::Localize {
            common,
            inputs,
            actor,
        } => commands::localize(&common, &inputs, actor.as_deref()),
        Command::Faces { common, inputs } => commands::faces(&common, &inputs),
        Command::Summarize {
            common,
            inputs,
            mode,
            k,
            length,
        } => commands::summarize(&common, &inputs, mode, k, length),
        Command::Sweep {
            common,
            stds,
            trials,
        } => commands::sweep(&common, stds, trials),
        Command::Eval {
            common,
            inputs,
            truth,
        } => commands::eval(&common, &inputs, truth),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Fail::Usage(m) => eprintln!("error: {m}"),
                Fail::Run(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(exit_code(&f))
        }
    }
}
