use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chsmc_cli::commands::{self, DesignParams, OdeParams};
use chsmc_cli::{exit, CliError, Outcome, RunConfig};

/// Viscous Cahn-Hilliard simulator with sliding-mode control.
#[derive(Parser)]
#[command(name = "chsmc", version)]
struct Cli {
    /// Output directory; overrides CHSMC_OUT.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only report errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured problem and write diagnostics and snapshots.
    Simulate(ConfigArg),
    /// Calibrate, design the gain, run and check sliding.
    SlidingCheck(ConfigArg),
    /// Continuous-dependence sweep.
    Contdep(ConfigArg),
    /// Comparison ODE: closed form next to the regularized integration.
    OdeOracle {
        #[arg(long)]
        w0: f64,
        #[arg(long)]
        m: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 1e-2)]
        eps: f64,
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Volume threshold and threshold gain from the structural constants.
    DesignRho {
        #[arg(long)]
        chat: f64,
        #[arg(long)]
        cstr: f64,
        #[arg(long, default_value_t = 0.0)]
        betastar: f64,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long)]
        w0: f64,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long)]
        vol: f64,
        /// Evaluate this gain as well.
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Run every requested or applicable check for a configuration.
    VerifyAll(ConfigArg),
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os("CHSMC_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("chsmc_out"))
}

fn dispatch(cli: &Cli, msg: &mut dyn Write) -> Result<Outcome, CliError> {
    let out = out_dir(cli);
    let load = |c: &ConfigArg| RunConfig::from_file(&c.config);
    match &cli.command {
        Command::Simulate(c) => commands::simulate(&load(c)?, &out, msg),
        Command::SlidingCheck(c) => commands::sliding_check(&load(c)?, &out, msg),
        Command::Contdep(c) => commands::contdep(&load(c)?, &out, msg),
        Command::VerifyAll(c) => commands::verify_all(&load(c)?, &out, msg),
        &Command::OdeOracle { w0, m, rho, tau, eps, dt, horizon } => {
            commands::ode_oracle(&OdeParams { w0, m, rho, tau, eps, dt, horizon }, msg)
        }
        &Command::DesignRho { chat, cstr, betastar, tau, w0, horizon, vol, rho } => {
            commands::design_rho(&DesignParams { chat, cstr, betastar, tau, w0, horizon, vol, rho }, msg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {} threads: {}", n, e);
            return ExitCode::from(exit::CONFIG as u8);
        }
    }
    let mut stdout = std::io::stdout();
    let mut sink = std::io::sink();
    let msg: &mut dyn Write = if cli.quiet { &mut sink } else { &mut stdout };
    let code = match dispatch(&cli, msg) {
        Ok(outcome) => {
            if outcome == Outcome::VerificationFailed {
                eprintln!("verification failed");
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {}", e);
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
