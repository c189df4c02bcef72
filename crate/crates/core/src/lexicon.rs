//! Feature-annotated vocabulary and the constraint queries used by rule
//! resolution.
//!
//! The on-disk form is newline-delimited JSON, one entry per line:
//!
//! ```text
//! {"surface":"王先生","features":{"gender":"m","pos":"NN"}}
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Constraint value that matches any value of a feature, as long as the entry
/// carries that feature.
pub const ANY_VALUE: &str = "*";

pub type FeatureMap = BTreeMap<String, String>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LexiconError {
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: duplicate entry {surface:?} (first seen on line {first})")]
    Duplicate {
        line: usize,
        first: usize,
        surface: String,
    },
    #[error("vocabulary contains no entries")]
    Empty,
    #[error("invalid entry {surface:?}: {reason}")]
    InvalidEntry { surface: String, reason: String },
    #[error("referent {surface:?} has no feature {feature:?}")]
    MissingReferentFeature { surface: String, feature: String },
    #[error("io error: {0}")]
    Io(String),
}

/// A surface form plus its feature map.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexicalEntry {
    pub surface: String,
    pub features: FeatureMap,
}

impl LexicalEntry {
    pub fn new<S: Into<String>>(surface: S, features: &[(&str, &str)]) -> Self {
        LexicalEntry {
            surface: surface.into(),
            features: features
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    pub fn feature(&self, name: &str) -> Option<&str> {
        self.features.get(name).map(String::as_str)
    }

    /// True when every constraint pair holds for this entry.
    pub fn satisfies(&self, constraints: &FeatureMap) -> bool {
        constraints.iter().all(|(k, v)| match self.features.get(k) {
            Some(have) => v == ANY_VALUE || have == v,
            None => false,
        })
    }

    pub fn validate(&self) -> Result<(), LexiconError> {
        let fail = |reason: &str| LexiconError::InvalidEntry {
            surface: self.surface.clone(),
            reason: reason.to_string(),
        };
        if self.surface.is_empty() {
            return Err(fail("empty surface"));
        }
        if self.surface.contains(['\n', '\r']) {
            return Err(fail("surface contains a newline"));
        }
        for (k, v) in &self.features {
            if k.is_empty() {
                return Err(fail("empty feature name"));
            }
            if v.is_empty() {
                return Err(fail(&format!("empty value for feature {k:?}")));
            }
            if v == ANY_VALUE {
                return Err(fail(&format!("reserved value {ANY_VALUE:?} for feature {k:?}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for LexicalEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.surface)?;
        for (k, v) in &self.features {
            write!(f, " {k}:{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Match,
    Mismatch,
}

/// An immutable, indexed vocabulary.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: Vec<LexicalEntry>,
    index: HashMap<(String, String), Vec<usize>>,
}

impl PartialEq for Lexicon {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Lexicon {
    /// Builds a lexicon from entries, rejecting invalid entries and exact
    /// duplicates.
    pub fn from_entries(entries: Vec<LexicalEntry>) -> Result<Self, LexiconError> {
        let mut seen: HashMap<&LexicalEntry, usize> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            e.validate()?;
            if let Some(first) = seen.insert(e, i) {
                return Err(LexiconError::Duplicate {
                    line: i + 1,
                    first: first + 1,
                    surface: e.surface.clone(),
                });
            }
        }
        let mut lex = Lexicon {
            entries,
            index: HashMap::new(),
        };
        lex.rebuild_index();
        Ok(lex)
    }

    /// Parses the newline-delimited vocabulary format. Blank lines are
    /// skipped but still counted for error line numbers.
    pub fn load<R: BufRead>(source: R) -> Result<Self, LexiconError> {
        let mut entries = Vec::new();
        let mut seen: HashMap<LexicalEntry, usize> = HashMap::new();
        for (i, line) in source.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| LexiconError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: LexicalEntry =
                serde_json::from_str(&line).map_err(|e| LexiconError::Malformed {
                    line: line_no,
                    reason: e.to_string(),
                })?;
            entry.validate().map_err(|e| LexiconError::Malformed {
                line: line_no,
                reason: e.to_string(),
            })?;
            if let Some(&first) = seen.get(&entry) {
                return Err(LexiconError::Duplicate {
                    line: line_no,
                    first,
                    surface: entry.surface,
                });
            }
            seen.insert(entry.clone(), line_no);
            entries.push(entry);
        }
        if entries.is_empty() {
            return Err(LexiconError::Empty);
        }
        let mut lex = Lexicon {
            entries,
            index: HashMap::new(),
        };
        lex.rebuild_index();
        Ok(lex)
    }

    pub fn load_str(source: &str) -> Result<Self, LexiconError> {
        Self::load(source.as_bytes())
    }

    /// Serializes to the vocabulary format, one entry per line, keys sorted.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    fn rebuild_index(&mut self) {
        self.index.clear();
        for (pos, e) in self.entries.iter().enumerate() {
            for (k, v) in &e.features {
                self.index
                    .entry((k.clone(), v.clone()))
                    .or_default()
                    .push(pos);
            }
        }
    }

    /// Returns a new lexicon with `entry` appended. The receiver is left
    /// untouched so concurrent readers keep a consistent snapshot.
    pub fn with_entry(&self, entry: LexicalEntry) -> Result<Self, LexiconError> {
        entry.validate()?;
        if let Some(first) = self.entries.iter().position(|e| *e == entry) {
            return Err(LexiconError::Duplicate {
                line: self.entries.len() + 1,
                first: first + 1,
                surface: entry.surface,
            });
        }
        let mut next = self.clone();
        let pos = next.entries.len();
        for (k, v) in &entry.features {
            next.index.entry((k.clone(), v.clone())).or_default().push(pos);
        }
        next.entries.push(entry);
        Ok(next)
    }

    pub fn entries(&self) -> &[LexicalEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Positions of entries posted under `(name, value)` in the index.
    pub fn postings(&self, name: &str, value: &str) -> &[usize] {
        self.index
            .get(&(name.to_string(), value.to_string()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// All entries satisfying every constraint, in lexicon order.
    pub fn query(&self, constraints: &FeatureMap) -> Vec<&LexicalEntry> {
        // Drive the scan from the shortest exact-value posting list.
        let shortest = constraints
            .iter()
            .filter(|(_, v)| v.as_str() != ANY_VALUE)
            .map(|(k, v)| self.postings(k, v))
            .min_by_key(|p| p.len());
        match shortest {
            Some(postings) => postings
                .iter()
                .map(|&i| &self.entries[i])
                .filter(|e| e.satisfies(constraints))
                .collect(),
            None => self
                .entries
                .iter()
                .filter(|e| e.satisfies(constraints))
                .collect(),
        }
    }

    /// Filters `query(constraints)` by (dis)agreement with `referent` on
    /// `feature`. Entries lacking the feature are excluded under both
    /// polarities.
    pub fn query_matched(
        &self,
        constraints: &FeatureMap,
        referent: &LexicalEntry,
        feature: &str,
        polarity: Polarity,
    ) -> Result<Vec<&LexicalEntry>, LexiconError> {
        let want = referent
            .feature(feature)
            .ok_or_else(|| LexiconError::MissingReferentFeature {
                surface: referent.surface.clone(),
                feature: feature.to_string(),
            })?;
        Ok(self
            .query(constraints)
            .into_iter()
            .filter(|e| match (e.feature(feature), polarity) {
                (Some(v), Polarity::Match) => v == want,
                (Some(v), Polarity::Mismatch) => v != want,
                (None, _) => false,
            })
            .collect())
    }
}
