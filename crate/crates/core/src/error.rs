use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid variance schedule: {0}")]
    InvalidSchedule(String),

    #[error("time step {t} outside 1..={t_steps}")]
    TimeStepOutOfRange { t: usize, t_steps: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("noise must be zero at the final reverse step (t = 1)")]
    NonzeroFinalNoise,

    #[error("unsupported modulation order {0}; expected a square QAM order (4, 16, 64, 256)")]
    UnsupportedOrder(usize),

    #[error("symbol index {index} outside 0..{order}")]
    IndexOutOfRange { index: usize, order: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status for command-line front ends: 2 for configuration
    /// errors, 3 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::InvalidConfig(_) => 2,
            _ => 3,
        }
    }
}
