use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use diffsim_cli::{run, Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "diffsim", version, about = "Gradient-aligned coordinates and diffusions on level-set manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Potential and density on a 3-D grid, with superlevel components.
    Field(RunArgs),
    /// Gradient components on z slices.
    Stream(RunArgs),
    /// Principal axis, initial directions and the ρ/θ coordinate curves.
    Coords(RunArgs),
    /// Drift-correction field on a quadrant of a level set.
    Drift(RunArgs),
    /// Euler–Maruyama chains and their moments.
    Sde(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Field(a) => (Command::Field, a),
        Cmd::Stream(a) => (Command::Stream, a),
        Cmd::Coords(a) => (Command::Coords, a),
        Cmd::Drift(a) => (Command::Drift, a),
        Cmd::Sde(a) => (Command::Sde, a),
    };
    let overrides = Overrides { out: args.out, seed: args.seed };
    let result = RunConfig::load(command, &args.config, &overrides).and_then(|cfg| run(&cfg));
    match result {
        Ok(m) if m.converged => ExitCode::SUCCESS,
        Ok(m) => {
            for f in &m.flags {
                eprintln!("not converged: {f}");
            }
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
