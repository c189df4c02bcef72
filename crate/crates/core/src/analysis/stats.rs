use serde::{Deserialize, Serialize};

use super::AnalysisError;

pub const EASY_THRESHOLD: f64 = 0.85;
pub const MEDIUM_THRESHOLD: f64 = 0.70;
pub const SCALING_RHO_THRESHOLD: f64 = 0.80;

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::InvalidInput(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(AnalysisError::InvalidInput("need at least two observations".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if constant(xs) || constant(ys) {
        return Err(AnalysisError::UndefinedCorrelation);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalysisError::UndefinedCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Medium,
    Difficult,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParadigmClass {
    pub paradigm_id: String,
    pub acc_best: f64,
    /// Correlation of accuracy with log model size; `None` when the
    /// accuracies have no variance.
    pub rho: Option<f64>,
    pub label: Difficulty,
}

impl ParadigmClass {
    pub fn rho_undefined(&self) -> bool {
        self.rho.is_none()
    }
}

/// The labelling rule on `(acc_best, rho)`; all comparisons strict.
pub fn label(acc_best: f64, rho: Option<f64>) -> Difficulty {
    if acc_best > EASY_THRESHOLD {
        Difficulty::Easy
    } else if acc_best > MEDIUM_THRESHOLD {
        Difficulty::Medium
    } else if rho.is_some_and(|r| r > SCALING_RHO_THRESHOLD) {
        Difficulty::Difficult
    } else {
        Difficulty::Other
    }
}

/// Classifies a paradigm from its accuracy at each model size.
pub fn classify_paradigm(
    paradigm_id: &str,
    acc_by_size: &[(u64, f64)],
) -> Result<ParadigmClass, AnalysisError> {
    let mut rows = acc_by_size.to_vec();
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if rows.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(AnalysisError::InvalidInput(format!(
            "{paradigm_id}: duplicate model size"
        )));
    }
    if rows.len() < 2 {
        return Err(AnalysisError::InvalidInput(format!(
            "{paradigm_id}: need at least two model sizes"
        )));
    }
    if rows.iter().any(|(size, acc)| *size == 0 || !acc.is_finite()) {
        return Err(AnalysisError::InvalidInput(format!(
            "{paradigm_id}: sizes must be positive and accuracies finite"
        )));
    }
    let sizes: Vec<f64> = rows.iter().map(|(s, _)| (*s as f64).ln()).collect();
    let accs: Vec<f64> = rows.iter().map(|(_, a)| *a).collect();
    let acc_best = accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let rho = match pearson(&sizes, &accs) {
        Ok(r) => Some(r),
        Err(AnalysisError::UndefinedCorrelation) => None,
        Err(e) => return Err(e),
    };
    Ok(ParadigmClass {
        paradigm_id: paradigm_id.to_string(),
        acc_best,
        rho,
        label: label(acc_best, rho),
    })
}
