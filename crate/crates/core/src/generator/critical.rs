use serde::{Deserialize, Serialize};

use super::GenError;

/// Half-open token range `[start, end)`. Serialized as `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

impl From<(usize, usize)> for Span {
    fn from((start, end): (usize, usize)) -> Self {
        Span { start, end }
    }
}

impl From<Span> for (usize, usize) {
    fn from(s: Span) -> Self {
        (s.start, s.end)
    }
}

/// Strips the longest common prefix, then the longest common suffix of what
/// remains, and returns the residual span on each side. A pure insertion or
/// deletion leaves an empty span at the edit point on the shorter side.
pub fn critical_region<T: PartialEq>(good: &[T], bad: &[T]) -> Result<(Span, Span), GenError> {
    if good == bad {
        return Err(GenError::NoDifference);
    }
    let prefix = good.iter().zip(bad).take_while(|(g, b)| g == b).count();
    let max_suffix = (good.len() - prefix).min(bad.len() - prefix);
    let suffix = good
        .iter()
        .rev()
        .zip(bad.iter().rev())
        .take(max_suffix)
        .take_while(|(g, b)| g == b)
        .count();
    Ok((
        Span::new(prefix, good.len() - suffix),
        Span::new(prefix, bad.len() - suffix),
    ))
}
