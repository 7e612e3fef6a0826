use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Rejected input to a constructor or operation.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A buffer or dimension does not have the required size.
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// Two operands that must share width/height/channels do not.
    ShapeMismatch(&'static str),
    /// A value lies outside its allowed range (or is not finite).
    OutOfRange { what: &'static str, value: f64 },
    /// An input that must be non-empty is empty.
    Empty(&'static str),
    /// A parameter violates its documented constraint.
    InvalidParameter { name: &'static str, reason: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension {
                what,
                expected,
                found,
            } => write!(f, "{what}: expected {expected}, found {found}"),
            Error::ShapeMismatch(what) => write!(f, "shape mismatch: {what}"),
            Error::OutOfRange { what, value } => write!(f, "{what} out of range: {value}"),
            Error::Empty(what) => write!(f, "{what} must not be empty"),
            Error::InvalidParameter { name, reason } => {
                write!(f, "invalid parameter `{name}`: {reason}")
            }
        }
    }
}

impl core::error::Error for Error {}

/// Failure reported by a scorer.
///
/// External scorers attach the request id and the raw reply so a malformed
/// payload can be diagnosed after the fact.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreError {
    pub request_id: Option<u64>,
    pub message: String,
    pub payload: Option<String>,
}

impl ScoreError {
    pub fn new(message: impl Into<String>) -> Self {
        ScoreError {
            request_id: None,
            message: message.into(),
            payload: None,
        }
    }

    pub fn with_request(mut self, id: u64) -> Self {
        self.request_id = Some(id);
        self
    }

    pub fn with_payload(mut self, payload: impl Into<String>) -> Self {
        self.payload = Some(payload.into());
        self
    }
}

impl fmt::Display for ScoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.request_id {
            Some(id) => write!(f, "scoring request {id} failed: {}", self.message)?,
            None => write!(f, "scoring failed: {}", self.message)?,
        }
        if let Some(p) = &self.payload {
            write!(f, " (payload: {p})")?;
        }
        Ok(())
    }
}

impl core::error::Error for ScoreError {}

/// Which masked input a scoring failure belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartContext {
    /// The unmasked input, scored to pick the explained class.
    Reference,
    /// A sliding window centered at `(x, y)`.
    Window { x: usize, y: usize },
    /// Part `part` of segmenter config `config` in run `run` (1-based).
    Segment { run: u8, config: usize, part: usize },
    /// Token-level explanation, token `index`.
    Token { index: usize },
    /// Insertion curve stage `index`.
    Stage { index: usize },
}

impl fmt::Display for PartContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PartContext::Reference => f.write_str("unmasked input"),
            PartContext::Window { x, y } => write!(f, "window centered at ({x}, {y})"),
            PartContext::Segment { run, config, part } => {
                write!(f, "run {run}, segmenter config {config}, part {part}")
            }
            PartContext::Token { index } => write!(f, "token {index}"),
            PartContext::Stage { index } => write!(f, "insertion stage {index}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EngineError {
    Input(Error),
    /// The requested class is not produced by the scorer.
    InvalidClass { class: usize, arity: usize },
    Score {
        context: PartContext,
        source: ScoreError,
    },
    /// Every segmenter config failed; the messages are kept in config order.
    AllSegmentersFailed(Vec<String>),
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineError::Input(e) => write!(f, "invalid input: {e}"),
            EngineError::InvalidClass { class, arity } => {
                write!(f, "class {class} is out of range for a scorer with {arity} outputs")
            }
            EngineError::Score { context, source } => write!(f, "{context}: {source}"),
            EngineError::AllSegmentersFailed(msgs) => {
                write!(f, "all {} segmenter configs failed", msgs.len())?;
                if let Some(first) = msgs.first() {
                    write!(f, " (first: {first})")?;
                }
                Ok(())
            }
        }
    }
}

impl core::error::Error for EngineError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            EngineError::Input(e) => Some(e),
            EngineError::Score { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl From<Error> for EngineError {
    fn from(e: Error) -> Self {
        EngineError::Input(e)
    }
}
