use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use quadenhance_harness::{run, Command, Overrides};

#[derive(Debug, Parser)]
#[command(
    name = "quadenhance",
    version,
    about = "Quadratic enhancer experiments"
)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON config; every field has a default.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, `./out` by default.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
    };
    let mut stdout = std::io::stdout().lock();
    match run(cli.command, cli.config.as_deref(), &overrides, &mut stdout) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
