//! `b3kit` binary: verify | bench | fit-pfe | metrics | report.
//!
//! Exit codes: 0 success, 1 property failure, 2 config error, 3 runtime
//! error. The master seed comes from `--seed`, then the `B3KIT_SEED`
//! environment variable, then the config's `scene.seed`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use b3kit_cli::commands::{self, parse_fault};
use b3kit_cli::CommandContext;

#[derive(Parser)]
#[command(name = "b3kit", version, about = "Posterior bridge fusion verification and benchmark driver")]
struct Cli {
    /// TOML run configuration (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output root; artifacts land in `<out>/<config hash>/`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed override (takes precedence over B3KIT_SEED and the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Parallel trial workers.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every property suite; exit 0 only if all pass.
    Verify {
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Run seeded fusion benchmark trials and emit CSV/JSON reports.
    Bench,
    /// Fit the precision estimator and write its parameters and loss curve.
    FitPfe,
    /// Compute transfer gains from a `task,direction,st_value,mt_value` CSV.
    Metrics { input: PathBuf },
    /// Print the summary of a previous output directory.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Command::Report { dir } = &cli.command {
        return exit_from(commands::cmd_report(dir));
    }

    let ctx = match CommandContext::resolve(
        cli.config.as_deref(),
        cli.out.as_deref(),
        cli.seed,
        cli.jobs,
    ) {
        Ok(ctx) => ctx,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code as u8);
        }
    };

    let result = match &cli.command {
        Command::Verify { inject_fault } => parse_fault(inject_fault.as_deref())
            .and_then(|fault| commands::cmd_verify(&ctx, fault)),
        Command::Bench => commands::cmd_bench(&ctx),
        Command::FitPfe => commands::cmd_fit_pfe(&ctx),
        Command::Metrics { input } => commands::cmd_metrics(&ctx, input),
        Command::Report { .. } => unreachable!("handled above"),
    };
    exit_from(result)
}

fn exit_from(result: b3kit_cli::CliResult<i32>) -> ExitCode {
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code as u8)
        }
    }
}
