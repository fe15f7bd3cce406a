use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Hierarchical display label of a step, e.g. `3.2`.
///
/// Ordering is lexicographic over the numeric segments, which matches
/// depth-first pre-order of the step tree.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StepLabel(Vec<u32>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid step label `{0}`")]
pub struct LabelError(pub String);

impl StepLabel {
    pub fn new(segments: Vec<u32>) -> Result<Self, LabelError> {
        if segments.is_empty() || segments.contains(&0) {
            let shown = segments.iter().map(u32::to_string).collect::<Vec<_>>().join(".");
            return Err(LabelError(shown));
        }
        Ok(Self(segments))
    }

    pub fn top(index: u32) -> Self {
        Self(vec![index.max(1)])
    }

    pub fn segments(&self) -> &[u32] {
        &self.0
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn parent(&self) -> Option<StepLabel> {
        if self.0.len() > 1 {
            Some(StepLabel(self.0[..self.0.len() - 1].to_vec()))
        } else {
            None
        }
    }

    /// Label of the `index`-th (1-based) child of this step.
    pub fn child(&self, index: u32) -> StepLabel {
        let mut segments = self.0.clone();
        segments.push(index.max(1));
        StepLabel(segments)
    }

    /// Last segment: position among siblings, 1-based.
    pub fn ordinal(&self) -> u32 {
        *self.0.last().expect("label has at least one segment")
    }

    /// True when `self` equals `other` or lies inside its subtree.
    pub fn is_within(&self, other: &StepLabel) -> bool {
        self.0.starts_with(&other.0)
    }
}

impl fmt::Display for StepLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, seg) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{seg}")?;
        }
        Ok(())
    }
}

impl FromStr for StepLabel {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let segments = trimmed
            .split('.')
            .map(|part| {
                if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
                    return None;
                }
                part.parse::<u32>().ok()
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| LabelError(trimmed.to_string()))?;
        StepLabel::new(segments).map_err(|_| LabelError(trimmed.to_string()))
    }
}

impl Serialize for StepLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StepLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}
