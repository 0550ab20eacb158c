use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported ADC resolution: {0} bits (expected 1 to 4)")]
    UnsupportedBits(u32),
    #[error("{value} is not an output level of the {bits}-bit quantizer")]
    NotALevel { value: f64, bits: u32 },
    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("matrix is singular even after regularization")]
    Singular,
    #[error("exhaustive search over {0} candidates exceeds the limit")]
    SearchTooLarge(u128),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty sample set")]
    Empty,
    #[error("training diverged at epoch {epoch}: loss {loss} stayed above 10x the initial loss {initial}")]
    Diverged { epoch: usize, loss: f64, initial: f64 },
    #[error("missing trained parameters for {method} at {snr_db} dB")]
    MissingCheckpoint { method: String, snr_db: f64 },
    #[error("checkpoint parse error on line {line}: {message}")]
    Checkpoint { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
