//! Instantiates paradigms into minimal pairs.
//!
//! Every template position draws from its own random stream derived from the
//! pair seed and a slot key. Positions paired by [`align`] use the same slot
//! key on both sides, so identical rules pick identical items and the two
//! sentences differ only where the grammars differ.

mod align;
mod critical;

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{LexicalEntry, Lexicon, LexiconError};
use crate::template::{Grammar, LinkedParadigm, Rule, Side};

pub use align::align;
pub use critical::{critical_region, Span};

/// Attempt budget multiplier used when callers do not pass one.
pub const DEFAULT_BUDGET_FACTOR: usize = 50;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GenError {
    #[error("{side} rule {position}: no lexical item satisfies {constraints}")]
    EmptyCandidates {
        side: Side,
        position: usize,
        constraints: String,
    },
    #[error("{side} rule {position}: phrase {phrase:?} cannot terminate within depth {max_depth}")]
    PhraseTooDeep {
        side: Side,
        position: usize,
        phrase: String,
        max_depth: u32,
    },
    #[error("{side} rule {position}: {source}")]
    Referent {
        side: Side,
        position: usize,
        source: LexiconError,
    },
    #[error("degenerate paradigm: good and bad sentences are identical ({0:?})")]
    Degenerate(String),
    #[error("token lists do not differ")]
    NoDifference,
}

impl GenError {
    /// Short reason key used in generation reports.
    pub fn reason(&self) -> &'static str {
        match self {
            GenError::EmptyCandidates { .. } => "empty-candidates",
            GenError::PhraseTooDeep { .. } => "phrase-depth",
            GenError::Referent { .. } => "missing-referent-feature",
            GenError::Degenerate(_) | GenError::NoDifference => "degenerate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        Sentence {
            text: tokens.concat(),
            tokens,
        }
    }
}

/// Token index (per side) where the continuation region begins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSplit {
    pub good: usize,
    pub bad: usize,
}

/// One generated pair. Field order is the output record order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalPair {
    pub paradigm_id: String,
    pub phenomenon: String,
    pub good: Sentence,
    pub bad: Sentence,
    pub critical_good: Span,
    pub critical_bad: Span,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<TokenSplit>,
}

impl MinimalPair {
    /// Checks the structural invariants of a pair.
    pub fn check(&self) -> Result<(), String> {
        if self.good.text == self.bad.text {
            return Err("good and bad texts are identical".into());
        }
        for s in [&self.good, &self.bad] {
            if s.tokens.concat() != s.text {
                return Err(format!("text {:?} is not the concatenation of its tokens", s.text));
            }
        }
        let (g, b) = (&self.good.tokens, &self.bad.tokens);
        let (cg, cb) = (self.critical_good, self.critical_bad);
        if cg.start > cg.end || cb.start > cb.end || cg.end > g.len() || cb.end > b.len() {
            return Err("critical span out of range".into());
        }
        if cg.is_empty() && cb.is_empty() {
            return Err("both critical spans are empty".into());
        }
        if g[..cg.start] != b[..cb.start] || g[cg.end..] != b[cb.end..] {
            return Err("tokens outside the critical spans differ".into());
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("pair serializes")
    }
}

/// Counts for one generate_paradigm run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub paradigm_id: String,
    pub requested: usize,
    pub produced: usize,
    pub attempts: usize,
    pub rejections: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

impl GenerationReport {
    pub fn shortfall(&self) -> bool {
        self.produced < self.requested
    }
}

/// What one template position produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Realized {
    pub tokens: Vec<String>,
    /// The sampled lexical item for Lexical and Matched rules.
    pub entry: Option<LexicalEntry>,
}

/// Full per-position record of one draw, for post-hoc checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Realization {
    pub good: Vec<Realized>,
    pub bad: Vec<Realized>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from `seed` and a key.
pub fn derive_seed(seed: u64, key: u64) -> u64 {
    splitmix64(seed ^ splitmix64(key))
}

/// The deterministic stream of per-pair seeds used by generate_paradigm.
pub fn pair_seeds(seed: u64) -> impl Iterator<Item = u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::iter::repeat_with(move || rng.next_u64())
}

#[derive(Clone, Copy)]
enum Slot {
    Shared(usize),
    Own(Side, usize),
}

impl Slot {
    fn key(self) -> u64 {
        match self {
            Slot::Shared(i) => i as u64,
            Slot::Own(Side::Good, i) => (1 << 32) | i as u64,
            Slot::Own(Side::Bad, i) => (2 << 32) | i as u64,
        }
    }
}

struct Expander<'a> {
    linked: &'a LinkedParadigm,
    lex: &'a Lexicon,
    side: Side,
    top_position: usize,
}

impl Expander<'_> {
    fn grammar(
        &self,
        rules: &[Rule],
        rng_for: &mut dyn FnMut(usize) -> ChaCha8Rng,
        depth_budget: Option<u32>,
    ) -> Result<Vec<Realized>, GenError> {
        let mut out: Vec<Realized> = Vec::with_capacity(rules.len());
        for (pos, rule) in rules.iter().enumerate() {
            let mut rng = rng_for(pos);
            let realized = self.rule(rule, pos, &out, &mut rng, depth_budget)?;
            out.push(realized);
        }
        Ok(out)
    }

    fn position(&self, pos: usize) -> usize {
        // Errors inside phrase expansions are reported at the top-level rule.
        if self.top_position == usize::MAX {
            pos
        } else {
            self.top_position
        }
    }

    fn pick<'e>(&self, candidates: &[&'e LexicalEntry], rng: &mut ChaCha8Rng) -> &'e LexicalEntry {
        candidates[rng.gen_range(0..candidates.len())]
    }

    fn rule(
        &self,
        rule: &Rule,
        pos: usize,
        earlier: &[Realized],
        rng: &mut ChaCha8Rng,
        depth_budget: Option<u32>,
    ) -> Result<Realized, GenError> {
        match rule {
            Rule::Direct { literals } => {
                let lit = &literals[rng.gen_range(0..literals.len())];
                Ok(Realized {
                    tokens: vec![lit.clone()],
                    entry: None,
                })
            }
            Rule::Lexical { constraints } => {
                let candidates = self.lex.query(constraints);
                if candidates.is_empty() {
                    return Err(GenError::EmptyCandidates {
                        side: self.side,
                        position: self.position(pos),
                        constraints: rule.to_string(),
                    });
                }
                let e = self.pick(&candidates, rng);
                Ok(Realized {
                    tokens: vec![e.surface.clone()],
                    entry: Some(e.clone()),
                })
            }
            Rule::Matched {
                constraints,
                m_pos,
                feature,
                polarity,
            } => {
                let referent = earlier[*m_pos]
                    .entry
                    .as_ref()
                    .expect("validated: Matched referents are lexical positions");
                let candidates = self
                    .lex
                    .query_matched(constraints, referent, feature, *polarity)
                    .map_err(|source| GenError::Referent {
                        side: self.side,
                        position: self.position(pos),
                        source,
                    })?;
                if candidates.is_empty() {
                    return Err(GenError::EmptyCandidates {
                        side: self.side,
                        position: self.position(pos),
                        constraints: format!("{rule} with referent {}", referent.surface),
                    });
                }
                let e = self.pick(&candidates, rng);
                Ok(Realized {
                    tokens: vec![e.surface.clone()],
                    entry: Some(e.clone()),
                })
            }
            Rule::Phrase { phrase, max_depth } => {
                let budget = depth_budget.map_or(*max_depth, |b| b.min(*max_depth));
                let tokens = self.expand(phrase, budget, rng, pos)?;
                Ok(Realized {
                    tokens,
                    entry: None,
                })
            }
        }
    }

    /// Expands a phrase using at most `budget` nested levels, choosing
    /// uniformly among the expansions that fit.
    fn expand(
        &self,
        name: &str,
        budget: u32,
        rng: &mut ChaCha8Rng,
        pos: usize,
    ) -> Result<Vec<String>, GenError> {
        let too_deep = || GenError::PhraseTooDeep {
            side: self.side,
            position: self.position(pos),
            phrase: name.to_string(),
            max_depth: budget,
        };
        let lib = &self.linked.library;
        let alternatives = lib.get(name).ok_or_else(too_deep)?;
        let admissible: Vec<&Grammar> = alternatives
            .iter()
            .filter(|g| {
                lib.expansion_depth(g, &self.linked.min_depths)
                    .is_some_and(|d| d <= budget)
            })
            .collect();
        if admissible.is_empty() {
            return Err(too_deep());
        }
        let chosen = admissible[rng.gen_range(0..admissible.len())];
        let inner = Expander {
            top_position: self.position(pos),
            ..*self
        };
        // Nested rules keep drawing from the phrase's own stream.
        let seed = rng.next_u64();
        let mut child = |i: usize| ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        let parts = inner.grammar(chosen.rules(), &mut child, Some(budget - 1))?;
        Ok(parts.into_iter().flat_map(|r| r.tokens).collect())
    }
}

/// Draws both sentences for one pair seed without building the pair.
pub fn realize(p: &LinkedParadigm, lex: &Lexicon, seed: u64) -> Result<Realization, GenError> {
    let par = &p.paradigm;
    let pairs = align(par.good.rules(), par.bad.rules());
    let mut good_slots: Vec<Slot> = (0..par.good.len()).map(|i| Slot::Own(Side::Good, i)).collect();
    let mut bad_slots: Vec<Slot> = (0..par.bad.len()).map(|i| Slot::Own(Side::Bad, i)).collect();
    for (k, &(g, b)) in pairs.iter().enumerate() {
        good_slots[g] = Slot::Shared(k);
        bad_slots[b] = Slot::Shared(k);
    }
    let side = |side: Side, slots: &[Slot]| {
        let ex = Expander {
            linked: p,
            lex,
            side,
            top_position: usize::MAX,
        };
        let mut rng_for = |pos: usize| ChaCha8Rng::seed_from_u64(derive_seed(seed, slots[pos].key()));
        ex.grammar(par.grammar(side).rules(), &mut rng_for, None)
    };
    Ok(Realization {
        good: side(Side::Good, &good_slots)?,
        bad: side(Side::Bad, &bad_slots)?,
    })
}

/// Generates one minimal pair. Deterministic in `(p, lex, seed)`.
pub fn generate_pair(p: &LinkedParadigm, lex: &Lexicon, seed: u64) -> Result<MinimalPair, GenError> {
    let r = realize(p, lex, seed)?;
    let token_split = |rs: &[Realized], at: usize| rs[..at].iter().map(|x| x.tokens.len()).sum();
    let split = p.paradigm.split.map(|s| TokenSplit {
        good: token_split(&r.good, s.good),
        bad: token_split(&r.bad, s.bad),
    });
    let good = Sentence::from_tokens(r.good.into_iter().flat_map(|x| x.tokens).collect());
    let bad = Sentence::from_tokens(r.bad.into_iter().flat_map(|x| x.tokens).collect());
    if good.text == bad.text {
        return Err(GenError::Degenerate(good.text));
    }
    let (critical_good, critical_bad) = critical_region(&good.tokens, &bad.tokens)?;
    Ok(MinimalPair {
        paradigm_id: p.paradigm.id.clone(),
        phenomenon: p.paradigm.phenomenon.clone(),
        good,
        bad,
        critical_good,
        critical_bad,
        seed,
        split,
    })
}

/// Generates up to `n` pairs unique by `(good.text, bad.text)`, stopping
/// after `budget` attempts. Shortfalls are reported, not raised.
pub fn generate_paradigm(
    p: &LinkedParadigm,
    lex: &Lexicon,
    n: usize,
    seed: u64,
    budget: usize,
) -> (Vec<MinimalPair>, GenerationReport) {
    let mut report = GenerationReport {
        paradigm_id: p.paradigm.id.clone(),
        requested: n,
        ..Default::default()
    };
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut out = Vec::with_capacity(n);
    for pair_seed in pair_seeds(seed) {
        if out.len() >= n || report.attempts >= budget {
            break;
        }
        report.attempts += 1;
        match generate_pair(p, lex, pair_seed) {
            Ok(pair) => {
                if seen.insert((pair.good.text.clone(), pair.bad.text.clone())) {
                    out.push(pair);
                } else {
                    *report.rejections.entry("duplicate".into()).or_default() += 1;
                }
            }
            Err(e) => {
                *report.rejections.entry(e.reason().into()).or_default() += 1;
                report.last_error = Some(e.to_string());
            }
        }
    }
    report.produced = out.len();
    (out, report)
}
