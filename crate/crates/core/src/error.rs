use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("could not place user {user} at least {min_distance_m} m from every BS after {attempts} attempts")]
    GenerationFailure {
        user: usize,
        min_distance_m: f64,
        attempts: usize,
    },

    #[error("league is stale: user {user} is no longer on channel {expected_channel}")]
    StaleLeague { user: usize, expected_channel: usize },

    #[error("instance too large: {what} needs {required} evaluations (limit {limit})")]
    InstanceTooLarge {
        what: &'static str,
        required: f64,
        limit: f64,
    },

    #[error("negative-loop search exceeded its budget of {0} path extensions")]
    BudgetExhausted(usize),

    #[error("config error: {0}")]
    Config(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
