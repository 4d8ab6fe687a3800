use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Input(String),

    /// No usable direct-path peak; usually a dead or disconnected microphone.
    #[error("anchor failure on channel {channel}: {reason}")]
    Anchor { channel: usize, reason: String },

    #[error("non-finite value in {layer}: {detail}")]
    Numeric { layer: String, detail: String },

    #[error("degenerate bone {bone} (length {length_mm:.3} mm)")]
    DegenerateBone { bone: String, length_mm: f64 },

    #[error("cannot normalize pose: {0}")]
    Normalization(String),

    #[error("training diverged in stage {stage} at step {step} (loss {loss})")]
    Divergence { stage: String, step: usize, loss: f64 },

    #[error("malformed {kind} file: {detail}")]
    Format { kind: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(kind: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            kind,
            detail: detail.into(),
        }
    }
}
