//! Command line and HTTP front end for the `lvdisc` pipeline.

pub mod api;
pub mod cli;
pub mod commands;
pub mod session;

use clap::Parser;

/// Parses `args`, runs the command and returns the process exit code:
/// 0 success, 2 when some slices failed, 1 on any fatal error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match cli::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                commands::EXIT_FATAL
            } else {
                commands::EXIT_OK
            };
        }
    };
    let outcome = match &cli.command {
        cli::Command::Segment(a) => cli::RunConfig::from_args(a)
            .and_then(|c| commands::cmd_segment(&c))
            .map(|(_, code)| code),
        cli::Command::Serve(a) => commands::cmd_serve(a).map(|_| commands::EXIT_OK),
        cli::Command::Phantom(a) => commands::cmd_phantom(a).map(|_| commands::EXIT_OK),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            commands::EXIT_FATAL
        }
    }
}
