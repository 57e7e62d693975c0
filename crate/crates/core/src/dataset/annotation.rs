use std::fmt;

use serde::{Deserialize, Serialize};

/// Per-label ground truth. `Unknown` covers both unannotated and uncertain labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnnotationState {
    Positive,
    Negative,
    #[default]
    Unknown,
}

impl AnnotationState {
    pub fn is_known(self) -> bool {
        !matches!(self, AnnotationState::Unknown)
    }

    pub fn is_positive(self) -> bool {
        matches!(self, AnnotationState::Positive)
    }

    /// Binary target for a known annotation.
    pub fn target(self) -> Option<f64> {
        match self {
            AnnotationState::Positive => Some(1.0),
            AnnotationState::Negative => Some(0.0),
            AnnotationState::Unknown => None,
        }
    }

    /// Parses a manifest cell: `1` positive, `0` negative, `-1` or empty unknown.
    /// Decimal spellings (`1.0`, `-1.0`) are accepted.
    pub fn parse_cell(cell: &str) -> Option<AnnotationState> {
        let cell = cell.trim();
        if cell.is_empty() {
            return Some(AnnotationState::Unknown);
        }
        let value: f64 = cell.parse().ok()?;
        if value == 1.0 {
            Some(AnnotationState::Positive)
        } else if value == 0.0 {
            Some(AnnotationState::Negative)
        } else if value == -1.0 {
            Some(AnnotationState::Unknown)
        } else {
            None
        }
    }

    /// Canonical manifest cell.
    pub fn as_cell(self) -> &'static str {
        match self {
            AnnotationState::Positive => "1",
            AnnotationState::Negative => "0",
            AnnotationState::Unknown => "",
        }
    }
}

impl fmt::Display for AnnotationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnnotationState::Positive => "positive",
            AnnotationState::Negative => "negative",
            AnnotationState::Unknown => "unknown",
        })
    }
}
