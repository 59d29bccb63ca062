use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rmpc::controllers::FeedbackMode;
use rmpc::sim::Strategy;
use rmpc_cli::commands::{self, CliError, Overrides, DEFAULT_SWEEP_GAINS};

#[derive(Parser)]
#[command(name = "rmpc", version, about = "Robust MPC for unicycle trajectory tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print derived constants and every sufficient condition.
    Certify(Common),
    /// Simulate the configured strategy.
    Run(Common),
    /// Simulate both strategies on the same disturbance sequence.
    Compare(Common),
    /// Simulate tube MPC for several ancillary gains.
    GainSweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated gains applied to both channels.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        gains: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run even when certification fails.
    #[arg(long)]
    force: bool,
    #[arg(long, value_enum)]
    feedback: Option<FeedbackArg>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Write zero into the solve-time column.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeedbackArg {
    Continuous,
    Zoh,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Tube,
    Nrmpc,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            force: self.force,
            feedback: self.feedback.map(|f| match f {
                FeedbackArg::Continuous => FeedbackMode::Continuous,
                FeedbackArg::Zoh => FeedbackMode::ZeroOrderHold,
            }),
            strategy: self.strategy.map(|s| match s {
                StrategyArg::Tube => Strategy::Tube,
                StrategyArg::Nrmpc => Strategy::Nrmpc,
            }),
            no_timing: self.no_timing,
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Certify(c) => {
            let o = c.overrides();
            let cfg = commands::load_config(&c.config, &o)?;
            commands::certify(&cfg, o.strategy, &mut out)
        }
        Command::Run(c) => {
            let o = c.overrides();
            let cfg = commands::load_config(&c.config, &o)?;
            commands::run(&cfg, !o.no_timing, &mut out).map(drop)
        }
        Command::Compare(c) => {
            let o = c.overrides();
            let cfg = commands::load_config(&c.config, &o)?;
            commands::compare(&cfg, !o.no_timing, &mut out).map(drop)
        }
        Command::GainSweep { common, gains } => {
            let o = common.overrides();
            let cfg = commands::load_config(&common.config, &o)?;
            let gains = gains.unwrap_or_else(|| DEFAULT_SWEEP_GAINS.to_vec());
            commands::gain_sweep(&cfg, &gains, !o.no_timing, &mut out).map(drop)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
