use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use anyhow::{Context, Result};
use minpair::generator::{generate_paradigm, GenerationReport, MinimalPair, DEFAULT_BUDGET_FACTOR};
use minpair::lexicon::Lexicon;
use minpair::template::{link_shared, Paradigm, PhraseLibrary};

use crate::io::{to_pretty_json, write_atomic};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_N: usize = 300;

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub n: usize,
    pub seed: u64,
    pub budget_factor: usize,
    pub jobs: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            n: DEFAULT_N,
            seed: DEFAULT_SEED,
            budget_factor: DEFAULT_BUDGET_FACTOR,
            jobs: 1,
        }
    }
}

/// The exact bytes written for one paradigm's pairs.
pub fn pairs_jsonl(pairs: &[MinimalPair]) -> String {
    pairs.iter().map(|p| p.to_json_line() + "\n").collect()
}

/// Generates one paradigm; the same routine backs the CLI and the preview
/// endpoint.
pub fn generate_one(
    paradigm: Paradigm,
    phrases: Arc<PhraseLibrary>,
    lexicon: &Lexicon,
    opts: &GenerateOptions,
) -> Result<(Vec<MinimalPair>, GenerationReport)> {
    let id = paradigm.id.clone();
    let linked = link_shared(Arc::new(paradigm), phrases).with_context(|| format!("linking {id}"))?;
    let budget = opts.n.saturating_mul(opts.budget_factor).max(opts.n);
    Ok(generate_paradigm(&linked, lexicon, opts.n, opts.seed, budget))
}

/// Generates every paradigm, writing `<out>/<id>.jsonl` and
/// `<out>/report.json`. Returns the reports in paradigm-id order.
pub fn run(
    paradigms: Vec<Paradigm>,
    phrases: PhraseLibrary,
    lexicon: &Lexicon,
    opts: &GenerateOptions,
    out: &Path,
) -> Result<Vec<GenerationReport>> {
    let phrases = Arc::new(phrases);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<GenerationReport>>>> =
        Mutex::new((0..paradigms.len()).map(|_| None).collect());
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(p) = paradigms.get(i) else { break };
        let r = generate_one(p.clone(), phrases.clone(), lexicon, opts).and_then(|(pairs, report)| {
            let path: PathBuf = out.join(format!("{}.jsonl", p.id));
            write_atomic(&path, pairs_jsonl(&pairs).as_bytes())?;
            Ok(report)
        });
        results.lock().expect("results lock")[i] = Some(r);
    };
    thread::scope(|s| {
        for _ in 0..opts.jobs.clamp(1, paradigms.len().max(1)) {
            s.spawn(work);
        }
    });
    let mut reports = results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every paradigm processed"))
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by(|a, b| a.paradigm_id.cmp(&b.paradigm_id));
    write_atomic(&out.join("report.json"), to_pretty_json(&reports).as_bytes())?;
    Ok(reports)
}
