//! Token estimation for context limits and compression reporting.

/// Counts tokens of a text. Implementations must be deterministic.
pub trait TokenEstimator: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// `ceil(bytes / 4)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ByteEstimator;

impl TokenEstimator for ByteEstimator {
    fn count(&self, text: &str) -> usize {
        text.len().div_ceil(4)
    }
}
