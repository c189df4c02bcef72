use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::generator::{MinimalPair, TokenSplit};
use crate::scoring::{mean_logprob, paradigm_result, score_pairs, ScorerBackend, SentenceScore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionDelta {
    pub checkpoint_tokens: u64,
    pub prefix_delta: f64,
    pub continuation_delta: f64,
    pub accuracy: f64,
}

/// Number of backend tokens covering the first `chars` characters of the
/// sentence. Fails when the backend tokens do not spell the text or the
/// boundary falls inside a backend token.
pub fn char_offset_to_token(
    score: &SentenceScore,
    text: &str,
    chars: usize,
) -> Result<usize, String> {
    if score.tokens.concat() != text {
        return Err("backend tokens do not spell the sentence text".into());
    }
    let mut seen = 0usize;
    for (i, tok) in score.tokens.iter().enumerate() {
        if seen == chars {
            return Ok(i);
        }
        seen += tok.chars().count();
        if seen > chars {
            return Err(format!("character offset {chars} falls inside backend token {i} {tok:?}"));
        }
    }
    Ok(score.tokens.len())
}

/// Mean logprob of the prefix and of the continuation given the prefix.
/// An empty continuation contributes 0.
fn split_mlp(score: &SentenceScore, at: usize) -> (f64, f64) {
    let (pre, cont) = score.token_logprobs.split_at(at);
    let prefix = if at == score.len() { score.mlp } else { mean_logprob(pre) };
    let continuation = if cont.is_empty() { 0.0 } else { mean_logprob(cont) };
    (prefix, continuation)
}

/// Splits every pair at a per-side generator-token index (allowed range
/// `1..=len`) and averages the good-minus-bad difference of prefix MLP and
/// of continuation MLP conditioned on the prefix. Each sentence is scored
/// once in full; the prefix boundary is mapped onto the backend's tokens.
pub fn region_decomposition<B: ScorerBackend + ?Sized>(
    backend: &B,
    pairs: &[MinimalPair],
    splits: &[TokenSplit],
    checkpoint_tokens: u64,
) -> Result<RegionDelta, AnalysisError> {
    if pairs.len() != splits.len() {
        return Err(AnalysisError::InvalidInput(format!(
            "{} pairs but {} splits",
            pairs.len(),
            splits.len()
        )));
    }
    for (i, (p, s)) in pairs.iter().zip(splits).enumerate() {
        for (side, split, len) in [("good", s.good, p.good.tokens.len()), ("bad", s.bad, p.bad.tokens.len())] {
            if split == 0 || split > len {
                return Err(AnalysisError::SplitOutOfRange { pair: i, side, split, len });
            }
        }
    }
    let results = score_pairs(backend, pairs)?;
    let mut prefix = Vec::with_capacity(pairs.len());
    let mut continuation = Vec::with_capacity(pairs.len());
    for (i, (r, s)) in results.iter().zip(splits).enumerate() {
        let mut sides = [(0.0, 0.0); 2];
        for (k, (side, score, sentence, split)) in [
            ("good", &r.good_score, &r.pair.good, s.good),
            ("bad", &r.bad_score, &r.pair.bad, s.bad),
        ]
        .into_iter()
        .enumerate()
        {
            let chars: usize = sentence.tokens[..split].iter().map(|t| t.chars().count()).sum();
            let at = char_offset_to_token(score, &sentence.text, chars)
                .map_err(|reason| AnalysisError::Misaligned { pair: i, side, reason })?;
            if at == 0 {
                return Err(AnalysisError::Misaligned {
                    pair: i,
                    side,
                    reason: "prefix covers no backend token".into(),
                });
            }
            sides[k] = split_mlp(score, at);
        }
        prefix.push(sides[0].0 - sides[1].0);
        continuation.push(sides[0].1 - sides[1].1);
    }
    Ok(RegionDelta {
        checkpoint_tokens,
        prefix_delta: mean_logprob(&prefix),
        continuation_delta: mean_logprob(&continuation),
        accuracy: paradigm_result(&results)?.accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{critical_region, Sentence};
    use crate::scoring::{ConstantBackend, RawScore, ScoreError};

    /// One token per character; 走 costs 1 nat, 跑 2, anything else 0.5.
    struct PerChar;

    impl ScorerBackend for PerChar {
        fn score_batch(&self, sentences: &[String]) -> Result<Vec<RawScore>, ScoreError> {
            Ok(sentences
                .iter()
                .map(|s| RawScore {
                    tokens: s.chars().map(String::from).collect(),
                    logprobs: s
                        .chars()
                        .map(|c| match c {
                            '走' => -1.0,
                            '跑' => -2.0,
                            _ => -0.5,
                        })
                        .collect(),
                })
                .collect())
        }
    }

    /// Scores every sentence as a single token.
    struct Whole;

    impl ScorerBackend for Whole {
        fn score_batch(&self, sentences: &[String]) -> Result<Vec<RawScore>, ScoreError> {
            Ok(sentences.iter().map(|s| RawScore { tokens: vec![s.clone()], logprobs: vec![-1.0] }).collect())
        }
    }

    fn pair(good: &[&str], bad: &[&str]) -> MinimalPair {
        let good = Sentence::from_tokens(good.iter().map(|s| s.to_string()).collect());
        let bad = Sentence::from_tokens(bad.iter().map(|s| s.to_string()).collect());
        let (critical_good, critical_bad) = critical_region(&good.tokens, &bad.tokens).unwrap();
        MinimalPair {
            paradigm_id: "p".into(),
            phenomenon: "x".into(),
            good,
            bad,
            critical_good,
            critical_bad,
            seed: 0,
            split: None,
        }
    }

    #[test]
    fn hand_computed_deltas() {
        let p = pair(&["我们", "走", "了"], &["我们", "跑", "了"]);
        let d = region_decomposition(&PerChar, &[p], &[TokenSplit { good: 2, bad: 2 }], 9).unwrap();
        // prefixes 我们走 vs 我们跑: -2/3 - (-1); continuations are both 了.
        assert!((d.prefix_delta - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(d.continuation_delta, 0.0);
        assert_eq!((d.checkpoint_tokens, d.accuracy), (9, 1.0));
    }

    #[test]
    fn continuation_after_shared_prefix() {
        let p = pair(&["我们", "走", "了"], &["我们", "跑", "了"]);
        let d = region_decomposition(&PerChar, &[p], &[TokenSplit { good: 1, bad: 1 }], 0).unwrap();
        // prefix 我们 is shared; continuations 走了 = -0.75, 跑了 = -1.25.
        assert_eq!(d.prefix_delta, 0.0);
        assert!((d.continuation_delta - 0.5).abs() < 1e-15);
    }

    #[test]
    fn symmetric_backend_gives_zero() {
        let pairs = [pair(&["a", "b"], &["a", "c", "d"]), pair(&["e", "f", "g"], &["e", "h"])];
        let splits = [TokenSplit { good: 1, bad: 2 }, TokenSplit { good: 2, bad: 1 }];
        let d = region_decomposition(&ConstantBackend { logprob: -3.0 }, &pairs, &splits, 0).unwrap();
        assert_eq!((d.prefix_delta, d.continuation_delta, d.accuracy), (0.0, 0.0, 0.0));
    }

    #[test]
    fn rejects_bad_splits() {
        let p = pair(&["我们", "走", "了"], &["我们", "跑", "了"]);
        let err = region_decomposition(&PerChar, &[p.clone()], &[TokenSplit { good: 0, bad: 1 }], 0).unwrap_err();
        assert!(matches!(err, AnalysisError::SplitOutOfRange { side: "good", split: 0, .. }));
        let err = region_decomposition(&PerChar, &[p.clone()], &[TokenSplit { good: 1, bad: 4 }], 0).unwrap_err();
        assert!(matches!(err, AnalysisError::SplitOutOfRange { side: "bad", split: 4, len: 3, .. }));
        let err = region_decomposition(&PerChar, &[p.clone()], &[], 0).unwrap_err();
        assert!(matches!(err, AnalysisError::InvalidInput(_)));
        let err = region_decomposition(&Whole, &[p], &[TokenSplit { good: 1, bad: 1 }], 0).unwrap_err();
        assert!(matches!(err, AnalysisError::Misaligned { pair: 0, side: "good", .. }));
    }
}
