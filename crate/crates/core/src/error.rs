use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("missing field `{0}`")]
    MissingField(String),

    #[error("data error at record {index}: {message}")]
    Data { index: usize, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("out of bounds: {0}")]
    Bounds(String),

    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    Checksum { stored: u64, computed: u64 },

    #[error("scene has no primitives")]
    EmptyScene,

    #[error("region is empty")]
    EmptyRegion,

    #[error("invalid configuration: {0}")]
    Config(String),
}
