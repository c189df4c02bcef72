//! Human-validation questionnaires: sampling pairs into lists with catch
//! trials, exporting them, and scoring responses against gold labels.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::{derive_seed, MinimalPair};

/// Number of catch trials inserted into every list.
pub const CATCH_PER_LIST: usize = 2;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ValidationError {
    #[error("paradigm {paradigm}: {needed} pairs requested but only {available} available")]
    InsufficientPairs {
        paradigm: String,
        needed: usize,
        available: usize,
    },
    #[error("{lists} lists requested for only {items} items")]
    TooManyLists { lists: usize, items: usize },
    #[error("at least one list is required")]
    NoLists,
    #[error("catch pool has {available} distinct pairs; each list needs {CATCH_PER_LIST}")]
    InsufficientCatch { available: usize },
    #[error("response to unknown list {0:?}")]
    UnknownList(String),
    #[error("list {list_id}, respondent {respondent_id}: item {item} does not exist")]
    UnknownItem {
        list_id: String,
        respondent_id: String,
        item: usize,
    },
    #[error("list {list_id}, respondent {respondent_id}: item {item} answered twice")]
    DuplicateAnswer {
        list_id: String,
        respondent_id: String,
        item: usize,
    },
    #[error("list {list_id}, respondent {respondent_id}: {missing} of {total} items unanswered")]
    Incomplete {
        list_id: String,
        respondent_id: String,
        missing: usize,
        total: usize,
    },
    #[error("no valid respondents remain after catch-trial exclusion")]
    NoValidResponses,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Which sentence is shown as option A.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Presentation {
    GoodFirst,
    BadFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionnaireItem {
    pub pair: MinimalPair,
    pub order: Presentation,
    pub is_catch: bool,
}

impl QuestionnaireItem {
    /// The option holding the grammatical sentence.
    pub fn gold(&self) -> Choice {
        match self.order {
            Presentation::GoodFirst => Choice::A,
            Presentation::BadFirst => Choice::B,
        }
    }

    pub fn sentences(&self) -> (&str, &str) {
        let (g, b) = (self.pair.good.text.as_str(), self.pair.bad.text.as_str());
        match self.order {
            Presentation::GoodFirst => (g, b),
            Presentation::BadFirst => (b, g),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionnaireList {
    pub list_id: String,
    pub items: Vec<QuestionnaireItem>,
}

impl QuestionnaireList {
    pub fn catch_count(&self) -> usize {
        self.items.iter().filter(|i| i.is_catch).count()
    }

    /// Number of non-catch items.
    pub fn test_count(&self) -> usize {
        self.items.len() - self.catch_count()
    }

    /// Checks the per-list invariants: exactly two catch items and
    /// presentation flags balanced within one.
    pub fn check(&self) -> Result<(), String> {
        if self.catch_count() != CATCH_PER_LIST {
            return Err(format!(
                "list {} has {} catch items",
                self.list_id,
                self.catch_count()
            ));
        }
        let good_first = self
            .items
            .iter()
            .filter(|i| i.order == Presentation::GoodFirst)
            .count();
        let bad_first = self.items.len() - good_first;
        if good_first.abs_diff(bad_first) > 1 {
            return Err(format!(
                "list {}: {good_first} good-first vs {bad_first} bad-first",
                self.list_id
            ));
        }
        Ok(())
    }
}

/// Samples `pairs_per_paradigm` pairs without replacement from every
/// paradigm, deals them over `n_lists` lists whose sizes differ by at most
/// one, adds two distinct catch trials per list and assigns balanced
/// presentation orders. Fully determined by `seed`.
pub fn sample_questionnaires(
    paradigms: &[(String, Vec<MinimalPair>)],
    catch_pool: &[MinimalPair],
    pairs_per_paradigm: usize,
    n_lists: usize,
    seed: u64,
) -> Result<Vec<QuestionnaireList>, ValidationError> {
    if n_lists == 0 {
        return Err(ValidationError::NoLists);
    }
    let mut items: Vec<MinimalPair> = Vec::with_capacity(paradigms.len() * pairs_per_paradigm);
    for (k, (id, pairs)) in paradigms.iter().enumerate() {
        if pairs.len() < pairs_per_paradigm {
            return Err(ValidationError::InsufficientPairs {
                paradigm: id.clone(),
                needed: pairs_per_paradigm,
                available: pairs.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64));
        let mut picked = sample(&mut rng, pairs.len(), pairs_per_paradigm).into_vec();
        picked.sort_unstable();
        items.extend(picked.into_iter().map(|i| pairs[i].clone()));
    }
    if n_lists > items.len() {
        return Err(ValidationError::TooManyLists {
            lists: n_lists,
            items: items.len(),
        });
    }
    let distinct_catch: BTreeSet<(&str, &str)> = catch_pool
        .iter()
        .map(|p| (p.good.text.as_str(), p.bad.text.as_str()))
        .collect();
    if distinct_catch.len() < CATCH_PER_LIST {
        return Err(ValidationError::InsufficientCatch {
            available: distinct_catch.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    items.shuffle(&mut rng);
    let mut buckets: Vec<Vec<QuestionnaireItem>> = vec![Vec::new(); n_lists];
    for (i, pair) in items.into_iter().enumerate() {
        buckets[i % n_lists].push(QuestionnaireItem {
            pair,
            order: Presentation::GoodFirst,
            is_catch: false,
        });
    }

    let mut lists = Vec::with_capacity(n_lists);
    for (l, mut bucket) in buckets.into_iter().enumerate() {
        let mut chosen: Vec<&MinimalPair> = Vec::with_capacity(CATCH_PER_LIST);
        while chosen.len() < CATCH_PER_LIST {
            let c = catch_pool.choose(&mut rng).expect("non-empty catch pool");
            if !chosen.iter().any(|p| p.good.text == c.good.text && p.bad.text == c.bad.text) {
                chosen.push(c);
            }
        }
        for c in chosen {
            bucket.push(QuestionnaireItem {
                pair: c.clone(),
                order: Presentation::GoodFirst,
                is_catch: true,
            });
        }
        bucket.shuffle(&mut rng);
        let mut flags: Vec<Presentation> = (0..bucket.len())
            .map(|i| if i % 2 == 0 { Presentation::GoodFirst } else { Presentation::BadFirst })
            .collect();
        flags.shuffle(&mut rng);
        for (item, flag) in bucket.iter_mut().zip(flags) {
            item.order = flag;
        }
        lists.push(QuestionnaireList {
            list_id: format!("list-{:02}", l + 1),
            items: bucket,
        });
    }
    Ok(lists)
}

/// One answer: respondent chose option A or B for an item of a list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseRecord {
    pub list_id: String,
    pub respondent_id: String,
    pub item: usize,
    pub choice: Choice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub overall: f64,
    pub per_phenomenon: BTreeMap<String, f64>,
    pub valid_respondents: usize,
    pub excluded: usize,
    /// Non-catch answers counted in `overall`.
    pub n_responses: usize,
}

/// Gold-label agreement over respondents who answered both catch trials of
/// their list correctly. Catch items never count towards agreement.
pub fn score_agreement(
    lists: &[QuestionnaireList],
    responses: &[ResponseRecord],
) -> Result<AgreementReport, ValidationError> {
    let by_id: BTreeMap<&str, &QuestionnaireList> =
        lists.iter().map(|l| (l.list_id.as_str(), l)).collect();
    let mut sheets: BTreeMap<(&str, &str), BTreeMap<usize, Choice>> = BTreeMap::new();
    for r in responses {
        let list = by_id
            .get(r.list_id.as_str())
            .ok_or_else(|| ValidationError::UnknownList(r.list_id.clone()))?;
        if r.item >= list.items.len() {
            return Err(ValidationError::UnknownItem {
                list_id: r.list_id.clone(),
                respondent_id: r.respondent_id.clone(),
                item: r.item,
            });
        }
        let sheet = sheets
            .entry((r.list_id.as_str(), r.respondent_id.as_str()))
            .or_default();
        if sheet.insert(r.item, r.choice).is_some() {
            return Err(ValidationError::DuplicateAnswer {
                list_id: r.list_id.clone(),
                respondent_id: r.respondent_id.clone(),
                item: r.item,
            });
        }
    }

    let mut excluded = 0;
    let mut valid = 0;
    let mut total = (0usize, 0usize);
    let mut per: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for ((list_id, respondent_id), sheet) in &sheets {
        let list = by_id[list_id];
        if sheet.len() != list.items.len() {
            return Err(ValidationError::Incomplete {
                list_id: list_id.to_string(),
                respondent_id: respondent_id.to_string(),
                missing: list.items.len() - sheet.len(),
                total: list.items.len(),
            });
        }
        let passes = list
            .items
            .iter()
            .enumerate()
            .filter(|(_, it)| it.is_catch)
            .all(|(i, it)| sheet[&i] == it.gold());
        if !passes {
            excluded += 1;
            continue;
        }
        valid += 1;
        for (i, it) in list.items.iter().enumerate().filter(|(_, it)| !it.is_catch) {
            let hit = usize::from(sheet[&i] == it.gold());
            total.0 += hit;
            total.1 += 1;
            let e = per.entry(it.pair.phenomenon.as_str()).or_default();
            e.0 += hit;
            e.1 += 1;
        }
    }
    if total.1 == 0 {
        return Err(ValidationError::NoValidResponses);
    }
    Ok(AgreementReport {
        overall: total.0 as f64 / total.1 as f64,
        per_phenomenon: per
            .into_iter()
            .map(|(k, (hit, n))| (k.to_string(), hit as f64 / n as f64))
            .collect(),
        valid_respondents: valid,
        excluded,
        n_responses: total.1,
    })
}

/// What a participant sees for one item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedItem {
    pub list_id: String,
    pub item: usize,
    pub sentence_a: String,
    pub sentence_b: String,
}

/// Answer-key entry for one item; kept apart from the participant file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKeyEntry {
    pub list_id: String,
    pub item: usize,
    pub paradigm_id: String,
    pub phenomenon: String,
    pub is_catch: bool,
    pub gold: Choice,
}

/// Participant-facing JSONL for one list.
pub fn export_list(list: &QuestionnaireList) -> String {
    list.items
        .iter()
        .enumerate()
        .map(|(i, it)| {
            let (a, b) = it.sentences();
            let rec = ExportedItem {
                list_id: list.list_id.clone(),
                item: i,
                sentence_a: a.to_string(),
                sentence_b: b.to_string(),
            };
            serde_json::to_string(&rec).expect("item serializes") + "\n"
        })
        .collect()
}

/// Answer key JSONL covering every list.
pub fn answer_key(lists: &[QuestionnaireList]) -> String {
    lists
        .iter()
        .flat_map(|l| {
            l.items.iter().enumerate().map(move |(i, it)| AnswerKeyEntry {
                list_id: l.list_id.clone(),
                item: i,
                paradigm_id: it.pair.paradigm_id.clone(),
                phenomenon: it.pair.phenomenon.clone(),
                is_catch: it.is_catch,
                gold: it.gold(),
            })
        })
        .map(|e| serde_json::to_string(&e).expect("entry serializes") + "\n")
        .collect()
}

/// Parses response records, one JSON object per non-blank line.
pub fn parse_responses(text: &str) -> Result<Vec<ResponseRecord>, ValidationError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ValidationError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
