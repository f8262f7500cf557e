use std::fmt;

/// Exit status 2 for configuration problems, 1 for everything else.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn config(msg: impl fmt::Display) -> CliError {
    CliError::Config(msg.to_string())
}

pub fn runtime(msg: impl fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}

impl From<sonoseg::config::ConfigError> for CliError {
    fn from(e: sonoseg::config::ConfigError) -> Self {
        config(e)
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                runtime(e)
            }
        })*
    };
}

runtime_from!(
    sonoseg::data::DataError,
    sonoseg::train::TrainError,
    sonoseg::train::CheckpointError,
    sonoseg::report::ReportError,
    sonoseg::ensemble::EnsembleError,
    sonoseg::interpret::InterpretError,
    sonoseg::model::ModelError,
    sonoseg::stats::StatsError,
    sonoseg::metrics::MetricError,
    std::io::Error,
    serde_json::Error
);
