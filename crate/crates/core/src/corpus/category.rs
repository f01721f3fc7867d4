use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// The six standard emotion classes of the ECA benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EmotionCategory {
    Happiness,
    Sadness,
    Fear,
    Anger,
    Disgust,
    Surprise,
}

impl EmotionCategory {
    pub const ALL: [EmotionCategory; 6] = [
        EmotionCategory::Happiness,
        EmotionCategory::Sadness,
        EmotionCategory::Fear,
        EmotionCategory::Anger,
        EmotionCategory::Disgust,
        EmotionCategory::Surprise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionCategory::Happiness => "Happiness",
            EmotionCategory::Sadness => "Sadness",
            EmotionCategory::Fear => "Fear",
            EmotionCategory::Anger => "Anger",
            EmotionCategory::Disgust => "Disgust",
            EmotionCategory::Surprise => "Surprise",
        }
    }
}

impl fmt::Display for EmotionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown emotion category {0:?}")]
pub struct UnknownCategory(pub String);

impl FromStr for EmotionCategory {
    type Err = UnknownCategory;

    /// Case-insensitive, surrounding whitespace ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let needle = s.trim();
        EmotionCategory::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(needle))
            .ok_or_else(|| UnknownCategory(s.to_string()))
    }
}

/// A category label in canonical spelling, as resolved by a [`CategorySet`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Category(String);

impl Category {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<EmotionCategory> for Category {
    fn from(c: EmotionCategory) -> Self {
        Category(c.as_str().to_string())
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The closed set of labels a corpus may use. Defaults to [`EmotionCategory::ALL`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategorySet {
    labels: Vec<String>,
}

impl Default for CategorySet {
    fn default() -> Self {
        CategorySet::standard()
    }
}

impl CategorySet {
    pub fn standard() -> Self {
        CategorySet {
            labels: EmotionCategory::ALL.iter().map(|c| c.as_str().to_string()).collect(),
        }
    }

    /// Builds a set from explicit labels. Labels are trimmed; duplicates
    /// (case-insensitive) and empty labels are rejected.
    pub fn from_labels<I, S>(labels: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out: Vec<String> = Vec::new();
        for label in labels {
            let label = label.as_ref().trim();
            if label.is_empty() {
                return Err(CorpusError::InvalidCategorySet("empty label".into()));
            }
            if out.iter().any(|l| l.eq_ignore_ascii_case(label)) {
                return Err(CorpusError::InvalidCategorySet(format!("duplicate label {label:?}")));
            }
            out.push(label.to_string());
        }
        if out.is_empty() {
            return Err(CorpusError::InvalidCategorySet("no labels".into()));
        }
        Ok(CategorySet { labels: out })
    }

    /// One label per line; blank lines and `#` comments are skipped.
    pub fn from_file(path: &Path) -> Result<Self, CorpusError> {
        let raw = std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        CategorySet::from_labels(
            raw.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    /// Resolves a raw label, ignoring case and surrounding whitespace.
    pub fn resolve(&self, raw: &str) -> Option<Category> {
        let needle = raw.trim();
        self.labels
            .iter()
            .find(|l| l.eq_ignore_ascii_case(needle))
            .map(|l| Category(l.clone()))
    }

    pub fn contains(&self, category: &Category) -> bool {
        self.labels.iter().any(|l| l == category.as_str())
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactly_six_standard_members() {
        assert_eq!(EmotionCategory::ALL.len(), 6);
        assert_eq!(CategorySet::standard().len(), 6);
    }

    #[test]
    fn parse_rejects_other_labels() {
        assert_eq!("fear".parse::<EmotionCategory>().unwrap(), EmotionCategory::Fear);
        assert_eq!(" Surprise ".parse::<EmotionCategory>().unwrap(), EmotionCategory::Surprise);
        assert!("Joy".parse::<EmotionCategory>().is_err());
        assert!("Excited".parse::<EmotionCategory>().is_err());
        assert!("".parse::<EmotionCategory>().is_err());
    }

    #[test]
    fn resolve_canonicalizes_spelling() {
        let set = CategorySet::standard();
        assert_eq!(set.resolve("  hAPPINESS ").unwrap().as_str(), "Happiness");
        assert!(set.resolve("Happy").is_none());
    }

    #[test]
    fn custom_sets_reject_duplicates() {
        assert!(CategorySet::from_labels(["Joy", "joy"]).is_err());
        let set = CategorySet::from_labels(["Joy", "Love"]).unwrap();
        assert_eq!(set.resolve("love").unwrap().as_str(), "Love");
    }
}
