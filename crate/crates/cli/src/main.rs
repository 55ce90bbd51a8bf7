//! `pg4d`: synthesize datasets, fit, render, evaluate, ablate and check gradients.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use progress4d::error::{Error, ErrorKind};

#[derive(Parser)]
#[command(name = "pg4d", version, about = "Two-stage progressive 4D splat reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset from a scene spec, or the whole standard suite.
    Synth(SynthArgs),
    /// Fit static splats and a deformation field to a dataset.
    Fit {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Run configuration JSON; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render one camera of a checkpoint at a normalized time.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        camera: usize,
        #[arg(long)]
        time: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint against every frame of a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run both stage-2 modes on every scene of a suite directory.
    Ablate {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare analytic gradients with finite differences on seeded scenes.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Perturbs one analytic component; the check must then fail.
        #[arg(long, hide = true)]
        corrupt: bool,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct SynthSource {
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Write every standard suite scene into a subdirectory of --out.
    #[arg(long)]
    suite: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    source: SynthSource,
    #[arg(long)]
    out: PathBuf,
}

/// Failure carrying the process exit status.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Invalid => 2,
            ErrorKind::Io => 3,
            ErrorKind::Diverged => 4,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("PG4D_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| Failure {
        code: 2,
        message: format!("PG4D_THREADS must be a positive integer, got {v:?}"),
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure {
            code: 2,
            message: format!("thread pool: {e}"),
        })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Synth(a) => match (a.source.spec, a.source.suite) {
            (Some(spec), _) => commands::synth(&spec, &a.out),
            (None, _) => commands::synth_suite(&a.out),
        },
        Command::Fit {
            dataset,
            config,
            out,
        } => commands::fit(dataset.as_deref(), config.as_deref(), out.as_deref()),
        Command::Render {
            checkpoint,
            camera,
            time,
            out,
        } => commands::render(&checkpoint, camera, time, &out),
        Command::Eval {
            checkpoint,
            dataset,
            report,
        } => commands::eval(&checkpoint, &dataset, &report),
        Command::Ablate { suite, out, config } => commands::ablate(&suite, &out, config.as_deref()),
        Command::Gradcheck { seed, corrupt } => commands::gradcheck(seed, corrupt),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("pg4d: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
