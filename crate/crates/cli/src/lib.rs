//! The `flowdj` command line: `train`, `sweep`, `diagnose` and `report`.
//!
//! Every command writes into its own run directory (see [`output`]) together
//! with a manifest of sha256 digests. Exit codes are listed in [`error::exit`].

pub mod diagnose;
pub mod error;
pub mod output;
pub mod report;
pub mod sweep;
pub mod train;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use flowdj::solver::SolverKind;

pub use diagnose::{cmd_diagnose, DiagnoseArgs};
pub use error::{exit, CliError, CliResult};
pub use report::cmd_report;
pub use sweep::{cmd_sweep, SweepArgs};
pub use train::{cmd_train, TrainRunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "flowdj",
    version,
    about = "Flow-matching policies with dense-jump integration"
)]
struct Cli {
    /// Output directory for this run. Defaults to $FLOWDJ_OUT/<command>-<tag>, or runs/<command>-<tag>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate demonstrations and fit a velocity model.
    Train {
        /// JSON run config (task or dataset, plus training settings).
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint over step budgets and solvers.
    Sweep {
        /// checkpoint.txt from a train run.
        #[arg(long)]
        ckpt: PathBuf,
        /// Preset name or JSON task file.
        #[arg(long, default_value = "two_mode_reach")]
        task: String,
        /// Comma-separated step budgets N.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,16,64")]
        steps: Vec<usize>,
        /// Comma-separated solvers: uniform, dense_jump.
        #[arg(long, value_delimiter = ',', default_value = "uniform,dense_jump")]
        solver: Vec<String>,
        #[arg(long, default_value_t = 0.5)]
        t_jump: f64,
        /// Rollouts per (solver, N) cell.
        #[arg(long, default_value_t = 100)]
        rollouts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Drift, Lipschitz and curvature probes of a trained field.
    Diagnose {
        /// checkpoint.txt from a train run.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// dataset.jsonl the checkpoint was trained on.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Probe closed-form fields instead of a checkpoint.
        #[arg(long)]
        analytic: bool,
        /// Time grid as lo,hi,n [default: 0.05,0.95,20].
        #[arg(long)]
        t_grid: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Noise draws per held-out row at each t.
        #[arg(long, default_value_t = 4)]
        draws: usize,
        /// Held-out episode fraction; defaults to the checkpoint's validation_fraction.
        #[arg(long)]
        heldout_fraction: Option<f64>,
    },
    /// Merge sweep runs into method x step-budget tables.
    Report {
        /// Sweep run directories; other runs are skipped.
        dirs: Vec<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> CliResult<PathBuf> {
    let out = cli.out.as_deref();
    match cli.command {
        Cmd::Train { config } => cmd_train(&config, out),
        Cmd::Sweep {
            ckpt,
            task,
            steps,
            solver,
            t_jump,
            rollouts,
            seed,
        } => {
            let solvers = solver
                .iter()
                .map(|s| s.parse::<SolverKind>())
                .collect::<Result<Vec<_>, _>>()?;
            let args = SweepArgs {
                checkpoint: ckpt,
                task,
                steps,
                solvers,
                t_jump,
                rollouts,
                seed,
            };
            cmd_sweep(&args, out)
        }
        Cmd::Diagnose {
            ckpt,
            data,
            analytic,
            t_grid,
            seed,
            draws,
            heldout_fraction,
        } => {
            let t_grid = match t_grid {
                Some(s) => diagnose::parse_grid(&s)?,
                None => DiagnoseArgs::default_grid(),
            };
            let args = DiagnoseArgs {
                checkpoint: ckpt,
                data,
                analytic,
                t_grid,
                seed,
                draws_per_row: draws,
                heldout_fraction,
            };
            cmd_diagnose(&args, out)
        }
        Cmd::Report { dirs } => cmd_report(&dirs, out),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            };
        }
    };
    match dispatch(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            exit::OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
