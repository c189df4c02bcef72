use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};
use minpair::analysis::{
    classify_paradigm, fit_saturation, fit_ushape, region_decomposition, ParadigmClass,
    RegionDelta, SaturationFit, TrajectoryPoint, UShapeFit,
};
use minpair::generator::{MinimalPair, TokenSplit};
use minpair::scoring::ScorerBackend;
use serde::{Deserialize, Serialize};

/// Parses trajectory records, one JSON object per non-blank line. Every
/// record must name its paradigm.
pub fn parse_trajectory(text: &str) -> Result<Vec<TrajectoryPoint>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: TrajectoryPoint = serde_json::from_str(line)
            .with_context(|| format!("trajectory line {}: malformed record", i + 1))?;
        if p.paradigm_id.is_empty() {
            bail!("trajectory line {}: missing paradigm_id", i + 1);
        }
        out.push(p);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub paradigm_id: String,
    /// Set for per-model fits; absent for the averaged curve.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_params: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_id: Option<String>,
    pub n_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub saturation: Option<SaturationFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ushape: Option<UShapeFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Averages accuracy over every model and seed at each checkpoint.
fn averaged_curve(points: &[&TrajectoryPoint]) -> Vec<TrajectoryPoint> {
    let mut by_n: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for p in points {
        let slot = by_n.entry(p.tokens_seen).or_default();
        slot.0 += p.accuracy;
        slot.1 += 1;
    }
    by_n.into_iter().map(|(n, (sum, k))| TrajectoryPoint::new(n, sum / k as f64)).collect()
}

/// Fits each paradigm's curve averaged over all models, or with
/// `per_model` one curve per (model size, seed).
pub fn fit(points: &[TrajectoryPoint], per_model: bool, ushape: bool, margin: f64) -> Vec<FitRecord> {
    type Key<'a> = (&'a str, Option<u64>, Option<&'a str>);
    let mut groups: BTreeMap<Key, Vec<&TrajectoryPoint>> = BTreeMap::new();
    for p in points {
        let key = if per_model {
            (p.paradigm_id.as_str(), Some(p.model_params), Some(p.seed_id.as_str()))
        } else {
            (p.paradigm_id.as_str(), None, None)
        };
        groups.entry(key).or_default().push(p);
    }
    groups
        .into_iter()
        .map(|((id, size, seed), group)| {
            let pts = if per_model {
                group.into_iter().cloned().collect()
            } else {
                averaged_curve(&group)
            };
            let mut rec = FitRecord {
                paradigm_id: id.to_string(),
                model_params: size,
                seed_id: seed.map(str::to_string),
                n_points: pts.len(),
                saturation: None,
                ushape: None,
                error: None,
            };
            match fit_saturation(&pts) {
                Ok(f) => rec.saturation = Some(f),
                Err(e) => rec.error = Some(e.to_string()),
            }
            if ushape && rec.error.is_none() {
                match fit_ushape(&pts, margin) {
                    Ok(f) => rec.ushape = Some(f),
                    Err(e) => rec.error = Some(e.to_string()),
                }
            }
            rec
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassRecord {
    Class(ParadigmClass),
    Error { paradigm_id: String, error: String },
}

/// Classifies each paradigm from the final checkpoint of every model size,
/// averaging over seeds.
pub fn classify(points: &[TrajectoryPoint]) -> Vec<ClassRecord> {
    // paradigm -> size -> seed -> (tokens_seen, accuracy) of the last checkpoint
    let mut last: BTreeMap<&str, BTreeMap<u64, BTreeMap<&str, (u64, f64)>>> = BTreeMap::new();
    for p in points {
        let slot = last
            .entry(&p.paradigm_id)
            .or_default()
            .entry(p.model_params)
            .or_default()
            .entry(&p.seed_id)
            .or_insert((p.tokens_seen, p.accuracy));
        if p.tokens_seen > slot.0 {
            *slot = (p.tokens_seen, p.accuracy);
        }
    }
    last.into_iter()
        .map(|(id, sizes)| {
            let table: Vec<(u64, f64)> = sizes
                .into_iter()
                .map(|(size, seeds)| {
                    let mean = seeds.values().map(|v| v.1).sum::<f64>() / seeds.len() as f64;
                    (size, mean)
                })
                .collect();
            match classify_paradigm(id, &table) {
                Ok(c) => ClassRecord::Class(c),
                Err(e) => ClassRecord::Error {
                    paradigm_id: id.to_string(),
                    error: e.to_string(),
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub paradigm_id: String,
    #[serde(flatten)]
    pub delta: RegionDelta,
}

/// Resolves per-pair splits: the pair's own annotation wins, then the
/// fallback.
pub fn splits_for(pairs: &[MinimalPair], fallback: Option<TokenSplit>) -> Result<Vec<TokenSplit>> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            p.split.or(fallback).with_context(|| {
                format!("pair {i} of {} has no split annotation and no --split was given", p.paradigm_id)
            })
        })
        .collect()
}

/// Region decomposition of one paradigm at each checkpoint.
pub fn regions(
    checkpoints: &[(u64, Box<dyn ScorerBackend>)],
    pairs: &[MinimalPair],
    splits: &[TokenSplit],
) -> Result<Vec<RegionRecord>> {
    let id = pairs.first().map(|p| p.paradigm_id.clone()).unwrap_or_default();
    checkpoints
        .iter()
        .map(|(tokens, backend)| {
            let delta = region_decomposition(backend.as_ref(), pairs, splits, *tokens)
                .with_context(|| format!("{id} at checkpoint {tokens}"))?;
            Ok(RegionRecord { paradigm_id: id.clone(), delta })
        })
        .collect()
}
