//! Character n-gram model with add-one smoothing.
//!
//! Outcomes are the corpus characters plus an end-of-sentence marker and an
//! unknown-character symbol. Contexts are padded with a begin marker, which
//! is never predicted. Each corpus line is one training sentence. Scoring
//! returns one logprob per character; the end marker is not scored, so
//! `|S|` is the character count.

use std::collections::HashMap;
use std::io::Read;

use super::{RawScore, ScoreError, ScorerBackend};

type Sym = u32;
const BOS: Sym = 0;
const EOS: Sym = 1;
const UNK: Sym = 2;

#[derive(Debug, Clone)]
pub struct CharNgram {
    order: usize,
    symbols: HashMap<char, Sym>,
    counts: HashMap<Vec<Sym>, HashMap<Sym, u64>>,
    context_totals: HashMap<Vec<Sym>, u64>,
}

impl CharNgram {
    pub fn train(corpus: &str, order: usize) -> Result<Self, ScoreError> {
        if !(1..=3).contains(&order) {
            return Err(ScoreError::InvalidOrder(order));
        }
        let mut model = CharNgram {
            order,
            symbols: HashMap::new(),
            counts: HashMap::new(),
            context_totals: HashMap::new(),
        };
        let mut any = false;
        for line in corpus.lines().filter(|l| !l.is_empty()) {
            any = true;
            let mut syms = Vec::with_capacity(line.len() + 1);
            for c in line.chars() {
                let next = model.symbols.len() as Sym + 3;
                syms.push(*model.symbols.entry(c).or_insert(next));
            }
            syms.push(EOS);
            let mut history = vec![BOS; order - 1];
            for s in syms {
                let ctx = history.clone();
                *model.counts.entry(ctx.clone()).or_default().entry(s).or_default() += 1;
                *model.context_totals.entry(ctx).or_default() += 1;
                if order > 1 {
                    history.remove(0);
                    history.push(s);
                }
            }
        }
        if !any {
            return Err(ScoreError::EmptyCorpus);
        }
        Ok(model)
    }

    pub fn from_reader<R: Read>(mut reader: R, order: usize) -> Result<Self, ScoreError> {
        let mut text = String::new();
        reader
            .read_to_string(&mut text)
            .map_err(|e| ScoreError::Connection(e.to_string()))?;
        Self::train(&text, order)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Outcome inventory size: characters plus end and unknown markers.
    pub fn vocab_size(&self) -> usize {
        self.symbols.len() + 2
    }

    fn sym(&self, c: char) -> Sym {
        self.symbols.get(&c).copied().unwrap_or(UNK)
    }

    fn logprob(&self, ctx: &[Sym], s: Sym) -> f64 {
        let count = self
            .counts
            .get(ctx)
            .and_then(|m| m.get(&s))
            .copied()
            .unwrap_or(0);
        let total = self.context_totals.get(ctx).copied().unwrap_or(0);
        ((count + 1) as f64 / (total + self.vocab_size() as u64) as f64).ln()
    }

    /// Per-character logprobs of `sentence`.
    pub fn char_logprobs(&self, sentence: &str) -> Vec<f64> {
        let mut history = vec![BOS; self.order - 1];
        let mut out = Vec::new();
        for c in sentence.chars() {
            let s = self.sym(c);
            out.push(self.logprob(&history, s));
            if self.order > 1 {
                history.remove(0);
                history.push(s);
            }
        }
        out
    }

    /// Probabilities of every outcome after the given preceding text (only
    /// the last `order - 1` characters matter).
    pub fn next_distribution(&self, preceding: &str) -> Vec<f64> {
        let mut history = vec![BOS; self.order - 1];
        for c in preceding.chars() {
            if self.order > 1 {
                history.remove(0);
                history.push(self.sym(c));
            }
        }
        let n = self.vocab_size() as Sym;
        (1..=n).map(|s| self.logprob(&history, s).exp()).collect()
    }
}

impl ScorerBackend for CharNgram {
    fn score_batch(&self, sentences: &[String]) -> Result<Vec<RawScore>, ScoreError> {
        Ok(sentences
            .iter()
            .map(|s| RawScore {
                tokens: s.chars().map(String::from).collect(),
                logprobs: self.char_logprobs(s),
            })
            .collect())
    }
}
