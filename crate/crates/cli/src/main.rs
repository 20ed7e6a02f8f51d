//! `darnn`: featurize recordings, generate synthetic data, train, adapt and
//! evaluate the anticipation network.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use darnn_core::network::Checkpoint;
use darnn_core::{Error, Precision, Result};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "darnn", version, about = "Driving manoeuvre anticipation with domain-adversarial RNNs")]
struct Cli {
    /// Worker threads. Results do not depend on the count.
    #[arg(long, global = true, env = "DARNN_THREADS")]
    threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration (`version = 1`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `precision`.
    #[arg(long)]
    precision: Option<Precision>,
}

#[derive(Subcommand)]
enum Command {
    /// Turn per-frame tracker CSVs into a feature dataset.
    Featurize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        context: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mirror_x: bool,
        #[arg(long, conflicts_with = "include_speed")]
        exclude_speed: bool,
        #[arg(long)]
        include_speed: bool,
    },
    /// Generate a synthetic dataset from the `[synth]` section.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Overrides `synth.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Supervised training on a labelled source set.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        source: PathBuf,
        /// Validation set; split from the source when absent.
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Domain-adversarial training against an unlabelled target set.
    Adapt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        /// Donor checkpoint; its extractor initializes the model (fine-tuning).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Overrides `experiment.train.adversarial.lambda`.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Online anticipation and metrics for a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = darnn_core::evaluation::DEFAULT_THRESHOLD)]
        p_th: f64,
        /// Also write per-sequence probability trajectories.
        #[arg(long)]
        trajectories: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-driver-out comparison of the three conditions.
    Lodo {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Source-to-target comparison of the three conditions.
    Crossdomain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every analytic gradient.
    Gradcheck {
        /// Hidden sizes to test, comma separated.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "f64")]
        precision: Precision,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_common(c: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(c.config.as_deref())?;
    if let Some(s) = c.seed {
        cfg.experiment.seed = s;
    }
    if let Some(p) = c.precision {
        cfg.precision = p;
    }
    Ok(cfg)
}

macro_rules! by_precision {
    ($p:expr, $f:ident ( $($arg:expr),* )) => {
        match $p {
            Precision::F64 => commands::$f::<f64>($($arg),*),
            Precision::F32 => commands::$f::<f32>($($arg),*),
        }
    };
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Featurize { input, context, output, config, mirror_x, exclude_speed, include_speed } => {
            let mut features = RunConfig::load(config.as_deref())?.features;
            features.mirror_x |= mirror_x;
            if exclude_speed {
                features.exclude_speed = true;
            }
            if include_speed {
                features.exclude_speed = false;
            }
            commands::featurize(&commands::FeaturizeArgs { input: &input, context: &context, output: &output, features })?;
        }
        Command::Synth { config, output, seed } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            if let Some(s) = seed {
                cfg.synth.seed = s;
            }
            commands::synth(&cfg, &output)?;
        }
        Command::Train { common, source, val, out } => {
            let cfg = load_common(&common)?;
            by_precision!(cfg.precision, train(&cfg, &source, val.as_deref(), &out))?;
        }
        Command::Adapt { common, source, target, val, checkpoint, lambda, out } => {
            let mut cfg = load_common(&common)?;
            if let Some(l) = lambda {
                cfg.experiment.train.adversarial.lambda = l;
            }
            let args = commands::AdaptArgs {
                source: &source,
                target: &target,
                val: val.as_deref(),
                donor: checkpoint.as_deref(),
                out: &out,
            };
            by_precision!(cfg.precision, adapt(&cfg, &args))?;
        }
        Command::Eval { checkpoint, data, p_th, trajectories, out } => {
            let ck = Checkpoint::load(&checkpoint)?;
            by_precision!(ck.precision, eval(&ck, &data, p_th, trajectories, &out))?;
        }
        Command::Lodo { common, source, out } => {
            let cfg = load_common(&common)?;
            by_precision!(cfg.precision, lodo(&cfg, &source, &out))?;
        }
        Command::Crossdomain { common, source, target, out } => {
            let cfg = load_common(&common)?;
            by_precision!(cfg.precision, crossdomain(&cfg, &source, &target, &out))?;
        }
        Command::Gradcheck { sizes, seed, precision, out } => {
            let args = commands::GradcheckArgs { precision, sizes, seed, out: out.as_deref() };
            return commands::gradcheck(&args);
        }
    }
    Ok(true)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: gradient check failed");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
