use alloc::string::String;
use core::fmt;

/// Errors surfaced by the engine. Shape and argument problems are programmer
/// errors caught at op boundaries; `NonFinite` is the NaN/Inf error state the
/// tensor contract promises to detect after any forward or backward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoreError {
    /// Operand shapes don't satisfy an op's contract.
    Shape { op: &'static str, detail: String },
    /// A non-shape argument is out of range (stride 0, bad mode, ...).
    InvalidArg { op: &'static str, detail: String },
    /// An op produced NaN or Inf.
    NonFinite { op: &'static str },
    /// Batch norm ran in train mode on a batch of fewer than 2 examples.
    BatchTooSmall { op: &'static str },
    /// A parameter name was looked up that the store doesn't contain.
    MissingParam { name: String },
    /// The optimizer was stepped while a trainable parameter had no gradient.
    MissingGrad { name: String },
}

pub type Result<V> = core::result::Result<V, CoreError>;

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Shape { op, detail } => write!(f, "{op}: shape mismatch: {detail}"),
            CoreError::InvalidArg { op, detail } => write!(f, "{op}: invalid argument: {detail}"),
            CoreError::NonFinite { op } => write!(f, "{op}: produced non-finite values"),
            CoreError::BatchTooSmall { op } => {
                write!(f, "{op}: train mode requires a batch of at least 2 examples")
            }
            CoreError::MissingParam { name } => write!(f, "no parameter named `{name}` in store"),
            CoreError::MissingGrad { name } => {
                write!(f, "parameter `{name}` has no gradient; run backward first")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CoreError {}
