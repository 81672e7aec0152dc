use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tissue::cli::{run_from_path, Command, Overrides};
use tissue::periodic::Method;

/// Electrical conduction in periodic two-phase tissue with a nonlinear
/// dynamic membrane.
///
/// Every subcommand reads a TOML config, writes `config.toml` plus CSV and
/// JSON artifacts into the output directory, and exits with 0 (ok),
/// 1 (solver failure), 2 (parse error), 3 (invalid input or missing
/// dependency) or 4 (invariant check failed). Logging is controlled by
/// `TISSUE_LOG` (for example `TISSUE_LOG=debug`).
#[derive(Parser)]
#[command(name = "tissue", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for subcommands that run independent problems.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Picard,
    Delta,
}

#[derive(Subcommand)]
enum Sub {
    /// Integrate the micro problem over `time.horizon`.
    ///
    /// simulate.csv: t, L2_bulk, L2_grad, L2_jump, dissipation_residual, newton_iters
    Simulate(Common),
    /// Compute the time-periodic micro solution.
    ///
    /// periodic.csv: t, jump_norm, bulk_energy. Also writes orbit.json,
    /// which `decay` reads.
    Periodic {
        #[command(flatten)]
        common: Common,
        /// Fixed-point iteration or the regularized sequence.
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Periodicity tolerance; overrides `periodic.tol`.
        #[arg(long)]
        tol: Option<f64>,
        /// Iteration cap; overrides `periodic.max_iters`.
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Measure convergence of a transient run to the stored periodic orbit.
    ///
    /// decay.csv: t, norm_L2, norm_grad, norm_jump, E
    Decay(Common),
    /// Solve the two-scale limit problem and its periodic orbit.
    ///
    /// homogenize.csv: t, norm_H1, norm_corrector, norm_grad_y, norm_jump, E
    Homogenize(Common),
    /// Run the invariant suite; exits 4 if any check fails.
    ///
    /// verify.json: checks with name, pass, value, tolerance
    Verify(Common),
    /// Compare micro solutions against the two-scale limit over `compare.epsilons`.
    ///
    /// compare.csv: epsilon, l2_error
    Compare(Common),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TISSUE_LOG", "warn")).init();
    let cli = Cli::parse();
    let (command, common, mut overrides) = match cli.command {
        Sub::Simulate(c) => (Command::Simulate, c, Overrides::default()),
        Sub::Decay(c) => (Command::Decay, c, Overrides::default()),
        Sub::Homogenize(c) => (Command::Homogenize, c, Overrides::default()),
        Sub::Verify(c) => (Command::Verify, c, Overrides::default()),
        Sub::Compare(c) => (Command::Compare, c, Overrides::default()),
        Sub::Periodic {
            common,
            method,
            tol,
            max_iters,
        } => {
            let method = method.map(|m| match m {
                MethodArg::Picard => Method::Picard,
                MethodArg::Delta => Method::DeltaSequence,
            });
            let o = Overrides {
                method,
                tol,
                max_iters,
                ..Default::default()
            };
            (Command::Periodic, common, o)
        }
    };
    overrides.out = common.out;
    overrides.threads = Some(common.threads);
    std::process::exit(run_from_path(command, &common.config, &overrides));
}
