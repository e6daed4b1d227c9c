//! Constraints and their canonical identity.
//!
//! A constraint is the smallest explicit restriction an instruction imposes.
//! Two constraints are the same constraint (for dedup, for search-state
//! identity, for the K-limit) exactly when their canonical keys are equal:
//! lowercased text, whitespace runs collapsed, trailing punctuation
//! stripped. Semantic near-duplicates are deliberately distinct.

use alloc::string::{String, ToString};
use core::fmt;

use serde::{Deserialize, Serialize};

/// The six constraint categories the decomposition prompt assigns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintCategory {
    Content,
    Numerical,
    #[serde(rename = "Style/Tone")]
    StyleTone,
    Format,
    Language,
    #[serde(rename = "Input Placeholder")]
    InputPlaceholder,
}

impl ConstraintCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConstraintCategory::Content => "Content",
            ConstraintCategory::Numerical => "Numerical",
            ConstraintCategory::StyleTone => "Style/Tone",
            ConstraintCategory::Format => "Format",
            ConstraintCategory::Language => "Language",
            ConstraintCategory::InputPlaceholder => "Input Placeholder",
        }
    }

    /// Map a model-produced category label to a category. Labels come back
    /// in assorted spellings ("Format Constraints", "style / tone", ...);
    /// anything unrecognized degrades to `Content` and reports `false` so
    /// one bad label cannot kill a batch.
    pub fn from_label(label: &str) -> (Self, bool) {
        let mut norm = label.trim().to_lowercase();
        for suffix in [" constraints", " constraint"] {
            if let Some(stripped) = norm.strip_suffix(suffix) {
                norm = stripped.to_string();
            }
        }
        let norm = norm.replace(['-', '_'], " ");
        let compact: String = norm
            .split_whitespace()
            .collect::<alloc::vec::Vec<_>>()
            .join(" ");
        let category = match compact.as_str() {
            "content" => ConstraintCategory::Content,
            "numerical" | "numeric" | "number" => ConstraintCategory::Numerical,
            "style/tone" | "style / tone" | "style" | "tone" | "style tone" => {
                ConstraintCategory::StyleTone
            }
            "format" | "formatting" => ConstraintCategory::Format,
            "language" => ConstraintCategory::Language,
            "input placeholder" | "placeholder" => ConstraintCategory::InputPlaceholder,
            _ => return (ConstraintCategory::Content, false),
        };
        (category, true)
    }
}

impl fmt::Display for ConstraintCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Canonical key for constraint text: lowercase, whitespace runs collapsed
/// to single spaces, trailing ASCII punctuation stripped. Idempotent and
/// deterministic; no normalization beyond case-folding is attempted.
pub fn canonicalize_constraint(text: &str) -> String {
    let lowered = text.to_lowercase();
    let collapsed: String = lowered
        .split_whitespace()
        .collect::<alloc::vec::Vec<_>>()
        .join(" ");
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation())
        .trim_end()
        .to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintError {
    /// Constraint text was empty after trimming.
    EmptyText,
}

impl fmt::Display for ConstraintError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintError::EmptyText => f.write_str("constraint text is empty after trimming"),
        }
    }
}

impl core::error::Error for ConstraintError {}

/// One constraint with its category and canonical identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRecord {
    pub text: String,
    pub category: ConstraintCategory,
    pub canonical_key: String,
    /// Set when the model's category label was unrecognized and degraded
    /// to Content.
    #[serde(default, skip_serializing_if = "is_false")]
    pub category_fallback: bool,
    /// The decomposition prompt's per-constraint "simplified query".
    /// Carried as auxiliary metadata; the search never reads it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simplified_query: Option<String>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl ConstraintRecord {
    pub fn new(
        text: impl Into<String>,
        category: ConstraintCategory,
    ) -> Result<Self, ConstraintError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ConstraintError::EmptyText);
        }
        let canonical_key = canonicalize_constraint(&text);
        Ok(ConstraintRecord {
            text,
            category,
            canonical_key,
            category_fallback: false,
            simplified_query: None,
        })
    }

    /// Build a record from a raw model label, degrading unknown labels to
    /// Content with the fallback flag set.
    pub fn from_label(text: impl Into<String>, label: &str) -> Result<Self, ConstraintError> {
        let (category, recognized) = ConstraintCategory::from_label(label);
        let mut record = Self::new(text, category)?;
        record.category_fallback = !recognized;
        Ok(record)
    }

    pub fn with_simplified_query(mut self, query: impl Into<String>) -> Self {
        self.simplified_query = Some(query.into());
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalize_strips_trailing_punctuation() {
        assert_eq!(
            canonicalize_constraint("Must be concise."),
            "must be concise"
        );
    }

    #[test]
    fn canonicalize_collapses_whitespace() {
        assert_eq!(
            canonicalize_constraint("Must  be \t under 200   words"),
            "must be under 200 words"
        );
    }

    #[test]
    fn canonicalize_case_folds() {
        assert_eq!(
            canonicalize_constraint("Must be under 200 words"),
            canonicalize_constraint("must be under 200 WORDS"),
        );
    }

    #[test]
    fn canonicalize_idempotent() {
        for text in [
            "  Mixed   CASE text!?  ",
            "plain",
            "ends with spaces   ",
            "...",
        ] {
            let once = canonicalize_constraint(text);
            assert_eq!(canonicalize_constraint(&once), once);
        }
    }

    #[test]
    fn empty_text_rejected() {
        assert_eq!(
            ConstraintRecord::new("   ", ConstraintCategory::Content).unwrap_err(),
            ConstraintError::EmptyText
        );
    }

    #[test]
    fn label_mapping() {
        assert_eq!(
            ConstraintCategory::from_label("Format Constraints"),
            (ConstraintCategory::Format, true)
        );
        assert_eq!(
            ConstraintCategory::from_label("Content Constraints"),
            (ConstraintCategory::Content, true)
        );
        assert_eq!(
            ConstraintCategory::from_label("style/tone"),
            (ConstraintCategory::StyleTone, true)
        );
        assert_eq!(
            ConstraintCategory::from_label("Input Placeholder"),
            (ConstraintCategory::InputPlaceholder, true)
        );
        assert_eq!(
            ConstraintCategory::from_label("Numerical"),
            (ConstraintCategory::Numerical, true)
        );
        assert_eq!(
            ConstraintCategory::from_label("whimsy"),
            (ConstraintCategory::Content, false)
        );
    }

    #[test]
    fn unknown_label_sets_fallback_flag() {
        let rec = ConstraintRecord::from_label("Must rhyme", "vibes").unwrap();
        assert_eq!(rec.category, ConstraintCategory::Content);
        assert!(rec.category_fallback);
        let ok = ConstraintRecord::from_label("Must rhyme", "Style/Tone").unwrap();
        assert!(!ok.category_fallback);
    }
}
