use thiserror::Error;

/// Process exit codes. Stable; documented in the README.
pub mod exit {
    pub const OK: i32 = 0;
    /// Bad command line (clap's own code).
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const CAMPAIGN: i32 = 4;
    /// A bin saturated; output was written with lower bounds.
    pub const SATURATION: i32 = 5;
    /// The campaign could not reach the end of the link; output was written.
    pub const PARTIAL_COVERAGE: i32 = 6;
    pub const COMPARISON: i32 = 7;
    pub const IO: i32 = 8;
    pub const STITCH: i32 = 9;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("campaign: {0}")]
    Campaign(String),

    #[error("saturation: {0}")]
    Saturation(String),

    #[error("partial coverage: link unmeasured beyond {0:.3} km")]
    PartialCoverage(f64),

    #[error("comparison: {0}")]
    Comparison(String),

    #[error("io: {0}")]
    Io(String),

    #[error("stitch: {0}")]
    Stitch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Config(_) => exit::CONFIG,
            CliError::Campaign(_) => exit::CAMPAIGN,
            CliError::Saturation(_) => exit::SATURATION,
            CliError::PartialCoverage(_) => exit::PARTIAL_COVERAGE,
            CliError::Comparison(_) => exit::COMPARISON,
            CliError::Io(_) => exit::IO,
            CliError::Stitch(_) => exit::STITCH,
        }
    }
}

impl From<nuotdr::Error> for CliError {
    fn from(e: nuotdr::Error) -> Self {
        use nuotdr::Error as E;
        match e {
            E::Campaign(m) => CliError::Campaign(m),
            E::Saturated { .. } => CliError::Saturation(e.to_string()),
            E::Stitch(m) => CliError::Stitch(m),
            E::Range { .. } | E::Domain(_) | E::Invalid { .. } | E::Schedule(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
