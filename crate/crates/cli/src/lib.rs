//! Command-line front end: configuration files, trace CSVs, reports and the
//! subcommands of the `nuotdr` binary.

pub mod cli;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod report;

pub use cli::Cli;
pub use error::{exit, CliError};

/// Parse `args`, run the command and return the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::Parser;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    if let Some(n) = cli.workers {
        if n == 0 {
            let _ = writeln!(err, "error: --workers must be at least 1");
            return exit::USAGE;
        }
        // Only the first configuration of the global pool takes effect in a process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut io = commands::Streams { out, err };
    match commands::run(&cli, &mut io) {
        Ok(()) => exit::OK,
        Err(e) => {
            let _ = writeln!(io.err, "error: {e}");
            e.exit_code()
        }
    }
}
