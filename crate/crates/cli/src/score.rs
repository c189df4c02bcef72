use std::collections::BTreeMap;
use std::path::PathBuf;

use minpair::generator::MinimalPair;
use minpair::scoring::{phenomenon_accuracy, score_paradigm, ParadigmResult, ScorerBackend};
use serde::{Deserialize, Serialize};

/// Results of one scoring run. When `complete` is false the run stopped at
/// `error` and only the paradigms before it are listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub backend: String,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub paradigms: Vec<ParadigmResult>,
    /// Unweighted mean over each phenomenon's paradigms.
    pub phenomena: BTreeMap<String, f64>,
    /// Unweighted mean over paradigms; absent when nothing was scored.
    pub overall: Option<f64>,
}

pub fn run(
    backend: &dyn ScorerBackend,
    backend_name: &str,
    groups: &[(PathBuf, Vec<MinimalPair>)],
) -> ScoreReport {
    let mut paradigms = Vec::with_capacity(groups.len());
    let mut error = None;
    for (path, pairs) in groups {
        match score_paradigm(backend, pairs) {
            Ok(r) => paradigms.push(r),
            Err(e) => {
                let kind = if e.is_timeout() { "timeout" } else { "error" };
                error = Some(format!("{kind} while scoring {}: {e}", path.display()));
                break;
            }
        }
    }
    let overall = (!paradigms.is_empty())
        .then(|| paradigms.iter().map(|p| p.accuracy).sum::<f64>() / paradigms.len() as f64);
    ScoreReport {
        backend: backend_name.to_string(),
        complete: error.is_none(),
        error,
        phenomena: phenomenon_accuracy(&paradigms),
        paradigms,
        overall,
    }
}
