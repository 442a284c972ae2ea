//! Command-line front end for `dta-influence`.

pub mod args;
pub mod commands;
pub mod error;
pub mod figures;
pub mod report;

pub use args::{Cli, Command, RunConfig};
pub use commands::{cmd_analyze, cmd_simulate, cmd_validate_sampler, configure_threads, ReportBundle};
pub use error::{exit, CliError};

/// Runs a parsed command and maps the outcome to an exit status.
pub fn run(cli: Cli) -> i32 {
    let outcome = configure_threads().and_then(|()| match cli.command {
        Command::Analyze(a) => {
            let config = RunConfig::try_from(a)?;
            let bundle = cmd_analyze(&config)?;
            println!("wrote {} files to {}", bundle.files.len() + 1, bundle.dir.display());
            Ok(())
        }
        Command::Simulate(a) => {
            let path = cmd_simulate(&a)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::ValidateSampler(a) => {
            cmd_validate_sampler(&a)?;
            println!("sampler validation passed");
            Ok(())
        }
    });
    match outcome {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
