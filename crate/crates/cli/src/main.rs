use std::process::ExitCode;

use clap::Parser;

use spinphase_cli::args::Cli;
use spinphase_cli::{output, run, CliError};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap reports --help and --version through the error path too.
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match drive(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spinphase: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn drive(cli: Cli) -> Result<(), CliError> {
    let cfg = cli.into_config()?;
    output::prepare_output_dir(&cfg)?;
    let outcome = run::execute(&cfg)?;
    for path in output::write_outputs(&outcome, &cfg)? {
        println!("{}", path.display());
    }
    Ok(())
}
