use thiserror::Error;

/// CLI-level errors with the exit-code contract:
/// 0 pass, 1 verification failure, 2 input error, 3 solver divergence.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] psvb_core::Error),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("bad magic: not a PSVB container")]
    BadMagic,

    #[error("unsupported container version {got} (expected {expected})")]
    VersionMismatch { got: u16, expected: u16 },

    #[error("container holds {got}, expected {expected}")]
    KindMismatch {
        expected: &'static str,
        got: String,
    },

    #[error("container truncated: needed {needed} more bytes")]
    Truncated { needed: usize },

    #[error("payload CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("verification failed: {0}")]
    VerificationFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::VerificationFailed(_) => 1,
            CliError::Core(psvb_core::Error::Divergence { .. }) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
