use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mcis::run::{self, Outcome, Overrides};
use mcis::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "mcis", version, about = "Multichannel inverse scattering on the line")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reflection table and bound states of the configured potential.
    Forward(Common),
    /// Potential from a reflection table, with bound states from file, fit or omitted.
    Invert {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        reflection: Option<PathBuf>,
    },
    /// Forward solve, inversion and comparison with the original.
    Roundtrip(Common),
    /// Partner potentials without the deepest bound state.
    SusyPartner(Common),
    /// Bound-state parameters from the reflection table alone.
    FitBound {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        reflection: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Spatial step.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    kmax: Option<f64>,
    /// Number of bound states assumed by the fit.
    #[arg(long)]
    nb: Option<usize>,
    /// Bound-state file.
    #[arg(long)]
    bound: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(&self.config)?;
        let o =
            Overrides { h: self.h, k_max: self.kmax, n_b: self.nb, bound: self.bound.clone(), out: self.out.clone() };
        o.apply(&mut cfg)?;
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Forward(c) => run::cmd_forward(&c.load()?),
        Command::Invert { common, reflection } => run::cmd_invert(&common.load()?, reflection.as_deref()),
        Command::Roundtrip(c) => run::cmd_roundtrip(&c.load()?),
        Command::SusyPartner(c) => run::cmd_susy_partner(&c.load()?),
        Command::FitBound { common, reflection } => run::cmd_fit_bound(&common.load()?, reflection.as_deref()),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(out) => {
            print!("{}", out.summary);
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            if out.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(4)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
