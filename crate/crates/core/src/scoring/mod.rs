//! Sentence scoring by mean log-probability and per-paradigm accuracy.

mod external;
mod ngram;
pub mod protocol;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::MinimalPair;

pub use external::{Endpoint, ExternalConfig, ExternalScorer, LineChannel, ChannelError};
pub use ngram::CharNgram;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScoreError {
    #[error("sentence {index} is empty")]
    EmptySentence { index: usize },
    #[error("backend returned no tokens for sentence {index}")]
    ZeroTokens { index: usize },
    #[error("sentence {index}: {reason}")]
    InvalidScore { index: usize, reason: String },
    #[error("backend failure at sentence {index}: {message}")]
    Backend { index: usize, message: String },
    #[error("backend returned {got} scores for {expected} sentences")]
    CountMismatch { expected: usize, got: usize },
    #[error("protocol violation in request {request}: {reason}")]
    Protocol { request: u64, reason: String },
    #[error("non-monotone response id: expected {expected}, got {got}")]
    NonMonotoneId { expected: u64, got: u64 },
    #[error("timed out waiting for response to request {request}")]
    Timeout { request: u64 },
    #[error("backend connection: {0}")]
    Connection(String),
    #[error("no pairs to score")]
    NoPairs,
    #[error("pairs from several paradigms: {0:?} and {1:?}")]
    MixedParadigms(String, String),
    #[error("invalid n-gram order {0}; expected 1, 2 or 3")]
    InvalidOrder(usize),
    #[error("corpus is empty")]
    EmptyCorpus,
}

impl ScoreError {
    /// Rewrites batch-relative sentence indices to absolute ones.
    fn offset(self, by: usize) -> Self {
        match self {
            ScoreError::EmptySentence { index } => ScoreError::EmptySentence { index: index + by },
            ScoreError::ZeroTokens { index } => ScoreError::ZeroTokens { index: index + by },
            ScoreError::InvalidScore { index, reason } => ScoreError::InvalidScore {
                index: index + by,
                reason,
            },
            ScoreError::Backend { index, message } => ScoreError::Backend {
                index: index + by,
                message,
            },
            other => other,
        }
    }

    pub fn is_timeout(&self) -> bool {
        matches!(self, ScoreError::Timeout { .. })
    }
}

/// Tokens and natural-log probabilities exactly as a backend reports them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawScore {
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
}

/// Anything that can return per-token log-probabilities for sentences.
pub trait ScorerBackend: Send + Sync {
    fn score_batch(&self, sentences: &[String]) -> Result<Vec<RawScore>, ScoreError>;
}

impl<T: ScorerBackend + ?Sized> ScorerBackend for &T {
    fn score_batch(&self, sentences: &[String]) -> Result<Vec<RawScore>, ScoreError> {
        (**self).score_batch(sentences)
    }
}

impl<T: ScorerBackend + ?Sized> ScorerBackend for Box<T> {
    fn score_batch(&self, sentences: &[String]) -> Result<Vec<RawScore>, ScoreError> {
        (**self).score_batch(sentences)
    }
}

/// Compensated (Neumaier) summation.
pub fn stable_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Mean of a non-empty slice of log-probabilities.
pub fn mean_logprob(xs: &[f64]) -> f64 {
    stable_sum(xs) / xs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub tokens: Vec<String>,
    pub token_logprobs: Vec<f64>,
    pub total_logprob: f64,
    pub mlp: f64,
}

impl SentenceScore {
    /// Validates a raw backend score for sentence `index`.
    pub fn from_raw(raw: RawScore, index: usize) -> Result<Self, ScoreError> {
        if raw.tokens.is_empty() || raw.logprobs.is_empty() {
            return Err(ScoreError::ZeroTokens { index });
        }
        if raw.tokens.len() != raw.logprobs.len() {
            return Err(ScoreError::InvalidScore {
                index,
                reason: format!(
                    "{} tokens but {} logprobs",
                    raw.tokens.len(),
                    raw.logprobs.len()
                ),
            });
        }
        if let Some(bad) = raw.logprobs.iter().find(|l| !(l.is_finite() && **l <= 0.0)) {
            return Err(ScoreError::InvalidScore {
                index,
                reason: format!("token logprob {bad} is not a finite value <= 0"),
            });
        }
        let total = stable_sum(&raw.logprobs);
        Ok(SentenceScore {
            mlp: total / raw.logprobs.len() as f64,
            total_logprob: total,
            tokens: raw.tokens,
            token_logprobs: raw.logprobs,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Scores sentences in order. `|S|` is the backend's own token count.
pub fn score_sentences<B: ScorerBackend + ?Sized>(
    backend: &B,
    sentences: &[String],
) -> Result<Vec<SentenceScore>, ScoreError> {
    if let Some(index) = sentences.iter().position(|s| s.is_empty()) {
        return Err(ScoreError::EmptySentence { index });
    }
    let raw = backend.score_batch(sentences)?;
    if raw.len() != sentences.len() {
        return Err(ScoreError::CountMismatch {
            expected: sentences.len(),
            got: raw.len(),
        });
    }
    raw.into_iter()
        .enumerate()
        .map(|(i, r)| SentenceScore::from_raw(r, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub pair: MinimalPair,
    pub good_score: SentenceScore,
    pub bad_score: SentenceScore,
    pub correct: bool,
}

impl PairResult {
    pub fn new(pair: MinimalPair, good_score: SentenceScore, bad_score: SentenceScore) -> Self {
        // Ties are judged incorrect.
        let correct = good_score.mlp > bad_score.mlp;
        PairResult {
            pair,
            good_score,
            bad_score,
            correct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParadigmResult {
    pub paradigm_id: String,
    pub phenomenon: String,
    pub n_pairs: usize,
    pub n_correct: usize,
    /// `n_correct / n_pairs`, one IEEE division.
    pub accuracy: f64,
}

fn check_same_paradigm(pairs: &[MinimalPair]) -> Result<(), ScoreError> {
    let first = pairs.first().ok_or(ScoreError::NoPairs)?;
    if let Some(other) = pairs.iter().find(|p| p.paradigm_id != first.paradigm_id) {
        return Err(ScoreError::MixedParadigms(
            first.paradigm_id.clone(),
            other.paradigm_id.clone(),
        ));
    }
    Ok(())
}

/// Scores every pair of one paradigm.
pub fn score_pairs<B: ScorerBackend + ?Sized>(
    backend: &B,
    pairs: &[MinimalPair],
) -> Result<Vec<PairResult>, ScoreError> {
    check_same_paradigm(pairs)?;
    let sentences: Vec<String> = pairs
        .iter()
        .flat_map(|p| [p.good.text.clone(), p.bad.text.clone()])
        .collect();
    let mut scores = score_sentences(backend, &sentences)?.into_iter();
    Ok(pairs
        .iter()
        .map(|p| {
            let g = scores.next().expect("one score per sentence");
            let b = scores.next().expect("one score per sentence");
            PairResult::new(p.clone(), g, b)
        })
        .collect())
}

pub fn paradigm_result(results: &[PairResult]) -> Result<ParadigmResult, ScoreError> {
    let first = results.first().ok_or(ScoreError::NoPairs)?;
    let n_correct = results.iter().filter(|r| r.correct).count();
    Ok(ParadigmResult {
        paradigm_id: first.pair.paradigm_id.clone(),
        phenomenon: first.pair.phenomenon.clone(),
        n_pairs: results.len(),
        n_correct,
        accuracy: n_correct as f64 / results.len() as f64,
    })
}

/// Fraction of pairs whose good sentence gets the strictly higher MLP.
pub fn score_paradigm<B: ScorerBackend + ?Sized>(
    backend: &B,
    pairs: &[MinimalPair],
) -> Result<ParadigmResult, ScoreError> {
    paradigm_result(&score_pairs(backend, pairs)?)
}

/// Unweighted mean accuracy per phenomenon.
pub fn phenomenon_accuracy(results: &[ParadigmResult]) -> BTreeMap<String, f64> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in results {
        groups.entry(r.phenomenon.clone()).or_default().push(r.accuracy);
    }
    groups
        .into_iter()
        .map(|(k, v)| (k, v.iter().sum::<f64>() / v.len() as f64))
        .collect()
}

/// Backend giving every character the same logprob. Useful as a tie
/// baseline and in tests.
#[derive(Debug, Clone, Copy)]
pub struct ConstantBackend {
    pub logprob: f64,
}

impl ScorerBackend for ConstantBackend {
    fn score_batch(&self, sentences: &[String]) -> Result<Vec<RawScore>, ScoreError> {
        Ok(sentences
            .iter()
            .map(|s| {
                let tokens: Vec<String> = s.chars().map(String::from).collect();
                RawScore {
                    logprobs: vec![self.logprob; tokens.len()],
                    tokens,
                }
            })
            .collect())
    }
}
