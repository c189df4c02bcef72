//! Grammar templates: rules, grammars, paradigms and the phrase library.
//!
//! A paradigm file is a JSON object with `id`, `phenomenon`, `source`,
//! `good` and `bad` (plus an optional `split` annotation). `good`/`bad` are
//! arrays of rule objects discriminated by `kind`:
//!
//! ```text
//! {"kind":"Lexical","constraints":{"pos":"NN"}}
//! {"kind":"Direct","literals":["自己"]}
//! {"kind":"Matched","constraints":{"pos":"PN"},"m_pos":0,"feature":"gender","polarity":"match"}
//! {"kind":"Phrase","phrase":"ReflV","max_depth":2}
//! ```
//!
//! A phrase library maps each phrase name to a list of alternative
//! expansions, each one a rule array. Canonical serialization sorts object
//! keys, pretty-prints with two-space indentation and ends with a newline.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::lexicon::{FeatureMap, Polarity};

pub const DEFAULT_MAX_DEPTH: u32 = 2;

const RULE_KINDS: [&str; 4] = ["Lexical", "Direct", "Matched", "Phrase"];

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TemplateError {
    #[error("malformed template: {0}")]
    Malformed(String),
    #[error("{side} rule {position}: unknown rule kind {kind:?}")]
    UnknownRuleKind {
        side: String,
        position: usize,
        kind: String,
    },
    #[error("{side} rule {position}: m_pos {m_pos} must point to an earlier position")]
    BadBackReference {
        side: String,
        position: usize,
        m_pos: usize,
    },
    #[error("{side} rule {position}: {reason}")]
    InvalidRule {
        side: String,
        position: usize,
        reason: String,
    },
    #[error("invalid paradigm: {0}")]
    InvalidParadigm(String),
    #[error("duplicate paradigm id {0:?}")]
    DuplicateId(String),
    #[error("{side} rule {position}: unresolved phrase {phrase:?}")]
    UnresolvedPhrase {
        side: String,
        position: usize,
        phrase: String,
    },
}

/// One template position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Rule {
    Lexical {
        constraints: FeatureMap,
    },
    Direct {
        literals: Vec<String>,
    },
    Matched {
        constraints: FeatureMap,
        m_pos: usize,
        feature: String,
        polarity: Polarity,
    },
    Phrase {
        phrase: String,
        #[serde(default = "default_depth")]
        max_depth: u32,
    },
}

fn default_depth() -> u32 {
    DEFAULT_MAX_DEPTH
}

impl Rule {
    pub fn kind(&self) -> &'static str {
        match self {
            Rule::Lexical { .. } => "Lexical",
            Rule::Direct { .. } => "Direct",
            Rule::Matched { .. } => "Matched",
            Rule::Phrase { .. } => "Phrase",
        }
    }

    fn check(&self, side: &str, position: usize) -> Result<(), TemplateError> {
        let invalid = |reason: String| TemplateError::InvalidRule {
            side: side.to_string(),
            position,
            reason,
        };
        let check_constraints = |c: &FeatureMap| {
            if c.is_empty() {
                return Err(invalid("constraints must not be empty".into()));
            }
            if c.iter().any(|(k, v)| k.is_empty() || v.is_empty()) {
                return Err(invalid("constraint names and values must be non-empty".into()));
            }
            Ok(())
        };
        match self {
            Rule::Lexical { constraints } => check_constraints(constraints),
            Rule::Direct { literals } => {
                if literals.is_empty() {
                    return Err(invalid("Direct rule needs at least one literal".into()));
                }
                if literals.iter().any(|l| l.is_empty() || l.contains(['\n', '\r'])) {
                    return Err(invalid("Direct literals must be non-empty single-line text".into()));
                }
                Ok(())
            }
            Rule::Matched {
                constraints,
                m_pos,
                feature,
                ..
            } => {
                check_constraints(constraints)?;
                if *m_pos >= position {
                    return Err(TemplateError::BadBackReference {
                        side: side.to_string(),
                        position,
                        m_pos: *m_pos,
                    });
                }
                if feature.is_empty() {
                    return Err(invalid("Matched feature must be non-empty".into()));
                }
                Ok(())
            }
            Rule::Phrase { phrase, max_depth } => {
                if phrase.is_empty() {
                    return Err(invalid("phrase name must be non-empty".into()));
                }
                if *max_depth == 0 {
                    return Err(invalid("max_depth must be positive".into()));
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kv = |c: &FeatureMap| {
            c.iter()
                .map(|(k, v)| format!("{k}:{v}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        match self {
            Rule::Lexical { constraints } => write!(f, "Lexical{{{}}}", kv(constraints)),
            Rule::Direct { literals } => write!(f, "Direct{literals:?}"),
            Rule::Matched {
                constraints,
                m_pos,
                feature,
                polarity,
            } => write!(
                f,
                "Matched{{{} mPos:{m_pos} mPro:{feature} {polarity:?}}}",
                kv(constraints)
            ),
            Rule::Phrase { phrase, max_depth } => write!(f, "Phrase{{{phrase} depth<={max_depth}}}"),
        }
    }
}

/// An ordered rule sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Grammar(pub Vec<Rule>);

impl Grammar {
    pub fn rules(&self) -> &[Rule] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, side: &str) -> Result<(), TemplateError> {
        for (i, r) in self.0.iter().enumerate() {
            r.check(side, i)?;
            if let Rule::Matched { m_pos, .. } = r {
                if !matches!(self.0[*m_pos], Rule::Lexical { .. } | Rule::Matched { .. }) {
                    return Err(TemplateError::InvalidRule {
                        side: side.to_string(),
                        position: i,
                        reason: format!(
                            "m_pos {m_pos} refers to a {} rule, which has no features",
                            self.0[*m_pos].kind()
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    fn phrase_refs(&self) -> impl Iterator<Item = (usize, &str)> {
        self.0.iter().enumerate().filter_map(|(i, r)| match r {
            Rule::Phrase { phrase, .. } => Some((i, phrase.as_str())),
            _ => None,
        })
    }

    fn from_value(value: &Value, side: &str) -> Result<Self, TemplateError> {
        let items = value
            .as_array()
            .ok_or_else(|| TemplateError::Malformed(format!("{side} must be an array of rules")))?;
        let mut rules = Vec::with_capacity(items.len());
        for (position, item) in items.iter().enumerate() {
            let kind = item.get("kind").and_then(Value::as_str).ok_or_else(|| {
                TemplateError::InvalidRule {
                    side: side.to_string(),
                    position,
                    reason: "missing string field \"kind\"".into(),
                }
            })?;
            if !RULE_KINDS.contains(&kind) {
                return Err(TemplateError::UnknownRuleKind {
                    side: side.to_string(),
                    position,
                    kind: kind.to_string(),
                });
            }
            let rule: Rule =
                serde_json::from_value(item.clone()).map_err(|e| TemplateError::InvalidRule {
                    side: side.to_string(),
                    position,
                    reason: e.to_string(),
                })?;
            rules.push(rule);
        }
        let grammar = Grammar(rules);
        grammar.validate(side)?;
        Ok(grammar)
    }
}

/// Rule positions (one per grammar) where the continuation region starts.
/// Used by the prefix/continuation decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitPoint {
    pub good: usize,
    pub bad: usize,
}

/// A good grammar and a bad grammar plus metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paradigm {
    pub id: String,
    pub phenomenon: String,
    pub source: String,
    pub good: Grammar,
    pub bad: Grammar,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitPoint>,
}

pub fn is_slug(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
        && !s.starts_with('.')
}

impl Paradigm {
    /// Parses and validates one paradigm document.
    pub fn parse(source: &str) -> Result<Self, TemplateError> {
        let value: Value =
            serde_json::from_str(source).map_err(|e| TemplateError::Malformed(e.to_string()))?;
        Self::from_value(&value)
    }

    pub fn from_value(value: &Value) -> Result<Self, TemplateError> {
        let obj = value
            .as_object()
            .ok_or_else(|| TemplateError::Malformed("paradigm must be a JSON object".into()))?;
        const FIELDS: [&str; 6] = ["id", "phenomenon", "source", "good", "bad", "split"];
        if let Some(k) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
            return Err(TemplateError::Malformed(format!("unknown field {k:?}")));
        }
        let text = |name: &str| -> Result<String, TemplateError> {
            obj.get(name)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| TemplateError::Malformed(format!("missing string field {name:?}")))
        };
        let grammar = |name: &str| -> Result<Grammar, TemplateError> {
            let v = obj
                .get(name)
                .ok_or_else(|| TemplateError::Malformed(format!("missing field {name:?}")))?;
            Grammar::from_value(v, name)
        };
        let split = match obj.get("split") {
            None | Some(Value::Null) => None,
            Some(v) => Some(
                serde_json::from_value(v.clone())
                    .map_err(|e| TemplateError::Malformed(format!("split: {e}")))?,
            ),
        };
        let p = Paradigm {
            id: text("id")?,
            phenomenon: text("phenomenon")?,
            source: text("source")?,
            good: grammar("good")?,
            bad: grammar("bad")?,
            split,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        if !is_slug(&self.id) {
            return Err(TemplateError::InvalidParadigm(format!(
                "id {:?} is not slug-safe",
                self.id
            )));
        }
        if self.good.is_empty() || self.bad.is_empty() {
            return Err(TemplateError::InvalidParadigm(format!(
                "{}: good and bad grammars need at least one rule",
                self.id
            )));
        }
        self.good.validate("good")?;
        self.bad.validate("bad")?;
        if let Some(s) = self.split {
            if s.good == 0 || s.good >= self.good.len() || s.bad == 0 || s.bad >= self.bad.len() {
                return Err(TemplateError::InvalidParadigm(format!(
                    "{}: split must lie strictly inside both grammars",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Canonical text form: sorted keys, two-space indentation, final newline.
    pub fn to_canonical(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("paradigm serializes"))
    }

    pub fn grammar(&self, side: Side) -> &Grammar {
        match side {
            Side::Good => &self.good,
            Side::Bad => &self.bad,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Good,
    Bad,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Good => "good",
            Side::Bad => "bad",
        })
    }
}

pub fn canonical_json(value: &Value) -> String {
    // serde_json's Map is ordered by key unless `preserve_order` is enabled.
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

/// Parses a batch of paradigm documents, rejecting duplicate ids.
pub fn parse_paradigm_set<'a, I>(sources: I) -> Result<Vec<Paradigm>, TemplateError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for src in sources {
        let p = Paradigm::parse(src)?;
        if !seen.insert(p.id.clone()) {
            return Err(TemplateError::DuplicateId(p.id));
        }
        out.push(p);
    }
    Ok(out)
}

/// Named phrases, each with one or more alternative expansions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhraseLibrary {
    phrases: BTreeMap<String, Vec<Grammar>>,
}

impl PhraseLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(source: &str) -> Result<Self, TemplateError> {
        let value: Value =
            serde_json::from_str(source).map_err(|e| TemplateError::Malformed(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| TemplateError::Malformed("phrase library must be a JSON object".into()))?;
        let mut phrases = BTreeMap::new();
        for (name, alts) in obj {
            let alts = alts.as_array().ok_or_else(|| {
                TemplateError::Malformed(format!("phrase {name:?} must be an array of expansions"))
            })?;
            if alts.is_empty() {
                return Err(TemplateError::Malformed(format!(
                    "phrase {name:?} has no expansions"
                )));
            }
            let mut grammars = Vec::new();
            for (i, alt) in alts.iter().enumerate() {
                let g = Grammar::from_value(alt, &format!("phrase {name}[{i}]"))?;
                if g.is_empty() {
                    return Err(TemplateError::Malformed(format!(
                        "phrase {name:?} expansion {i} is empty"
                    )));
                }
                grammars.push(g);
            }
            phrases.insert(name.clone(), grammars);
        }
        let lib = PhraseLibrary { phrases };
        lib.check_closed()?;
        Ok(lib)
    }

    pub fn insert(&mut self, name: impl Into<String>, expansions: Vec<Grammar>) {
        self.phrases.insert(name.into(), expansions);
    }

    /// Every phrase referenced inside the library must exist in it.
    pub fn check_closed(&self) -> Result<(), TemplateError> {
        for (name, alts) in &self.phrases {
            for (i, g) in alts.iter().enumerate() {
                for (pos, target) in g.phrase_refs() {
                    if !self.phrases.contains_key(target) {
                        return Err(TemplateError::UnresolvedPhrase {
                            side: format!("phrase {name}[{i}]"),
                            position: pos,
                            phrase: target.to_string(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&[Grammar]> {
        self.phrases.get(name).map(Vec::as_slice)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.phrases.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn to_canonical(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("library serializes"))
    }

    /// Minimum expansion depth needed to fully expand each phrase, or `None`
    /// for phrases that can never terminate. A phrase whose expansions hold
    /// no Phrase rules has depth 1.
    pub fn min_depths(&self) -> BTreeMap<String, Option<u32>> {
        let mut depth: BTreeMap<String, Option<u32>> =
            self.phrases.keys().map(|k| (k.clone(), None)).collect();
        loop {
            let mut changed = false;
            for (name, alts) in &self.phrases {
                let best = alts
                    .iter()
                    .filter_map(|g| self.expansion_depth(g, &depth))
                    .min();
                if best.is_some() && (depth[name].is_none() || best < depth[name]) {
                    depth.insert(name.clone(), best);
                    changed = true;
                }
            }
            if !changed {
                return depth;
            }
        }
    }

    /// Depth of one expansion given the current depth estimates: one level
    /// for itself plus the deepest nested phrase.
    pub(crate) fn expansion_depth(
        &self,
        g: &Grammar,
        depth: &BTreeMap<String, Option<u32>>,
    ) -> Option<u32> {
        let mut d = 1;
        for (_, target) in g.phrase_refs() {
            d = d.max(1 + (*depth.get(target)?)?);
        }
        Some(d)
    }
}

/// A paradigm whose phrase references were verified against a library
/// snapshot.
#[derive(Debug, Clone)]
pub struct LinkedParadigm {
    pub paradigm: Arc<Paradigm>,
    pub library: Arc<PhraseLibrary>,
    pub(crate) min_depths: Arc<BTreeMap<String, Option<u32>>>,
}

impl LinkedParadigm {
    pub fn id(&self) -> &str {
        &self.paradigm.id
    }
}

/// Checks every Phrase rule against `lib`. Recursion is not expanded here.
pub fn link(paradigm: &Paradigm, lib: &PhraseLibrary) -> Result<LinkedParadigm, TemplateError> {
    link_shared(Arc::new(paradigm.clone()), Arc::new(lib.clone()))
}

pub fn link_shared(
    paradigm: Arc<Paradigm>,
    lib: Arc<PhraseLibrary>,
) -> Result<LinkedParadigm, TemplateError> {
    let mut missing = BTreeSet::new();
    let mut first = None;
    for side in [Side::Good, Side::Bad] {
        for (pos, name) in paradigm.grammar(side).phrase_refs() {
            if lib.get(name).is_none() {
                missing.insert(name.to_string());
                first.get_or_insert((side, pos, name.to_string()));
            }
        }
    }
    if let Some((side, position, phrase)) = first {
        return Err(TemplateError::UnresolvedPhrase {
            side: side.to_string(),
            position,
            phrase,
        });
    }
    let min_depths = Arc::new(lib.min_depths());
    Ok(LinkedParadigm {
        paradigm,
        library: lib,
        min_depths,
    })
}
