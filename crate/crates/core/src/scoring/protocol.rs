//! Newline-delimited JSON scorer protocol.
//!
//! Request:  `{"id":0,"sentences":["...", "..."]}`
//! Response: `{"id":0,"scores":[{"tokens":["..."],"logprobs":[-1.2]}]}`
//!
//! Ids are echoed verbatim, one response per request, in request order.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{RawScore, ScoreError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    pub scores: Vec<RawScore>,
}

impl Request {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }
}

impl Response {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }
}

/// Parses and checks one response line for request `id` carrying
/// `expected` sentences.
pub fn parse_response(line: &str, id: u64, expected: usize) -> Result<Vec<RawScore>, ScoreError> {
    let violation = |reason: String| ScoreError::Protocol { request: id, reason };
    let v: Value =
        serde_json::from_str(line).map_err(|e| violation(format!("malformed response: {e}")))?;
    let got = v
        .get("id")
        .and_then(Value::as_u64)
        .ok_or_else(|| violation("response has no integer id".into()))?;
    if got != id {
        return Err(ScoreError::NonMonotoneId { expected: id, got });
    }
    let scores = v
        .get("scores")
        .and_then(Value::as_array)
        .ok_or_else(|| violation("response has no scores array".into()))?;
    if scores.len() != expected {
        return Err(violation(format!(
            "{} scores for {expected} sentences",
            scores.len()
        )));
    }
    let mut out = Vec::with_capacity(scores.len());
    for (i, s) in scores.iter().enumerate() {
        let tokens = s
            .get("tokens")
            .and_then(Value::as_array)
            .ok_or_else(|| violation(format!("score {i} has no tokens")))?;
        let logprobs = s
            .get("logprobs")
            .and_then(Value::as_array)
            .ok_or_else(|| violation(format!("score {i} has no logprobs")))?;
        let tokens: Vec<String> = tokens
            .iter()
            .map(|t| t.as_str().map(str::to_string))
            .collect::<Option<_>>()
            .ok_or_else(|| violation(format!("score {i}: tokens must be strings")))?;
        let logprobs: Vec<f64> = logprobs
            .iter()
            .map(Value::as_f64)
            .collect::<Option<_>>()
            .ok_or_else(|| violation(format!("score {i}: logprobs must be numbers")))?;
        if tokens.is_empty() {
            return Err(violation(format!("score {i} has zero tokens")));
        }
        if tokens.len() != logprobs.len() {
            return Err(violation(format!(
                "score {i}: {} tokens but {} logprobs",
                tokens.len(),
                logprobs.len()
            )));
        }
        if let Some(lp) = logprobs.iter().find(|l| **l > 0.0) {
            return Err(violation(format!("score {i}: positive logprob {lp}")));
        }
        out.push(RawScore { tokens, logprobs });
    }
    Ok(out)
}

/// Serves the protocol on a line stream until EOF, scoring each request
/// with `score`. Used by reference backends.
pub fn serve<R, W, F>(reader: R, mut writer: W, mut score: F) -> std::io::Result<()>
where
    R: BufRead,
    W: Write,
    F: FnMut(&[String]) -> Vec<RawScore>,
{
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = serde_json::from_str(&line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        let resp = Response {
            id: req.id,
            scores: score(&req.sentences),
        };
        writeln!(writer, "{}", resp.to_line())?;
        writer.flush()?;
    }
    Ok(())
}
