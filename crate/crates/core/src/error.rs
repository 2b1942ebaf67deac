use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid value for `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("node index {node} is outside 0..={max}")]
    NodeOutOfRange { node: usize, max: usize },

    #[error("protocol {protocol} is not defined for scheme {scheme}")]
    IllegalProtocol { scheme: String, protocol: String },

    #[error("threshold policy violation: {0}")]
    PolicyViolation(String),

    #[error("interval {interval} has the wrong parity for half-duplex node R{node}")]
    ParityMismatch { node: usize, interval: usize },

    #[error("a relay network needs at least one relay (got Q = {0})")]
    NotARelayNetwork(usize),

    #[error("search range is empty")]
    EmptyRange,

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("configuration key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("unknown preset `{name}`; valid presets: {valid}")]
    UnknownPreset { name: String, valid: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
