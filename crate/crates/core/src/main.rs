use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracflow::harness::{run, verify_goldens, write_goldens, GoldenStatus, Kind, RunConfig};
use fracflow::{Error, Result};

#[derive(Parser)]
#[command(name = "fracflow", version, about = "Fractional Allen-Cahn and fractional mean curvature flow experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment kind.
    #[command(flatten)]
    Run(RunCommand),
    /// Recompute the golden quantities and compare them with stored values.
    VerifyGoldens {
        #[arg(long, default_value = "crates/core/goldens")]
        dir: PathBuf,
        /// Overwrite the stored values instead of comparing.
        #[arg(long)]
        write: bool,
    },
}

#[derive(Subcommand)]
enum RunCommand {
    /// Operator constants, c0 and omega.
    Constants(RunArgs),
    /// The standing-wave layer profile.
    Layer(RunArgs),
    /// Layer profile with the corrector.
    Corrector(RunArgs),
    /// Shrinking-circle benchmark of the sharp-interface flow.
    Fmcf(RunArgs),
    /// Allen-Cahn evolution from well-prepared data.
    Allencahn(RunArgs),
    /// Diffuse versus sharp fronts along an epsilon ladder.
    Compare(RunArgs),
    /// Barrier residual and auxiliary-field consistency.
    BarrierCheck(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set physics.sigma=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunCommand {
    fn split(self) -> (Kind, RunArgs) {
        match self {
            RunCommand::Constants(a) => (Kind::Constants, a),
            RunCommand::Layer(a) => (Kind::Layer, a),
            RunCommand::Corrector(a) => (Kind::Corrector, a),
            RunCommand::Fmcf(a) => (Kind::Fmcf, a),
            RunCommand::Allencahn(a) => (Kind::Allencahn, a),
            RunCommand::Compare(a) => (Kind::Compare, a),
            RunCommand::BarrierCheck(a) => (Kind::BarrierCheck, a),
        }
    }
}

fn execute(cmd: RunCommand) -> Result<()> {
    let (kind, args) = cmd.split();
    let text = args.config.as_ref().map(|p| fs::read_to_string(p).map_err(|e| Error::io(p, e))).transpose()?;
    let mut cfg = RunConfig::resolve(text.as_deref(), &args.sets)?;
    cfg.run.kind = kind;
    if let Some(out) = args.out {
        cfg.output.dir = out;
    }
    let manifest = run(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))?);
    Ok(())
}

fn goldens(dir: PathBuf, write: bool) -> Result<bool> {
    if write {
        println!("wrote {}", write_goldens(&dir)?.display());
        return Ok(true);
    }
    let report = verify_goldens(&dir)?;
    for e in &report.entries {
        let status = match e.status {
            GoldenStatus::Pass => "pass",
            GoldenStatus::Fail => "FAIL",
            GoldenStatus::Absent => "absent",
        };
        println!("{status:>6}  {:<24} computed {:.16e}  golden {:?}", e.quantity, e.computed, e.golden);
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Run(cmd) => execute(cmd).map(|_| true),
        Command::VerifyGoldens { dir, write } => goldens(dir, write),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
