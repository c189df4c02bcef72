//! Learning-curve fits.
//!
//! Saturation curve: `F(n) = p_inf - (p_inf - p0) * exp(-alpha * n^beta)`.
//! U-shape curve: `F(n) + k * Fu((n - n0) / s)` with `Fu(x) = -x / (1 + x^2)`.
//!
//! Internally `alpha * n^beta` is written `exp(a + beta * t)` with
//! `t = ln(n / n_ref)`, `beta` and `s` are optimized through their logs, and
//! `n0`, `s` are measured in units of the largest `n`. Reported parameters
//! are in natural units. The optimizer is a damped Gauss-Newton
//! (Levenberg-Marquardt) iteration with `p_inf`, `p0` projected onto [0, 1],
//! run from a fixed grid of starts.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{AnalysisError, TrajectoryPoint};

/// Default relative residual reduction required before the U-term counts as
/// warranted.
pub const DEFAULT_WARRANT_MARGIN: f64 = 0.05;
/// Residual reductions smaller than this are treated as numerical noise.
pub const WARRANT_ABS_FLOOR: f64 = 1e-9;

const MAX_ITER: usize = 3000;

pub fn fu(x: f64) -> f64 {
    -x / (1.0 + x * x)
}

fn fu_prime(x: f64) -> f64 {
    let d = 1.0 + x * x;
    -(1.0 - x * x) / (d * d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit {
    pub p_inf: f64,
    pub p0: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Root-mean-square error over the fitted points.
    pub residual: f64,
    /// False when the iteration cap was hit; parameters are best-so-far.
    pub converged: bool,
}

impl SaturationFit {
    pub fn eval(&self, n: f64) -> f64 {
        if n <= 0.0 {
            return self.p0;
        }
        self.p_inf - (self.p_inf - self.p0) * (-self.alpha * n.powf(self.beta)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UShapeFit {
    pub base: SaturationFit,
    pub k: f64,
    pub n0: f64,
    pub s: f64,
    pub residual: f64,
    pub converged: bool,
    /// RMSE of the saturation-only fit on the same points.
    pub saturation_residual: f64,
    pub warranted: bool,
}

impl UShapeFit {
    pub fn eval(&self, n: f64) -> f64 {
        self.base.eval(n) + self.k * fu((n - self.n0) / self.s)
    }
}

/// Data in internal units.
struct Scaled {
    t: Vec<Option<f64>>,
    x: Vec<f64>,
    y: Vec<f64>,
    ln_ref: f64,
    n_scale: f64,
}

impl Scaled {
    fn new(points: &[TrajectoryPoint], min_distinct: usize) -> Result<Self, AnalysisError> {
        let mut distinct: Vec<u64> = points.iter().map(|p| p.tokens_seen).collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < min_distinct {
            return Err(AnalysisError::InsufficientPoints {
                needed: min_distinct,
                distinct: distinct.len(),
            });
        }
        if points.iter().any(|p| !p.accuracy.is_finite()) {
            return Err(AnalysisError::InvalidInput("non-finite accuracy".into()));
        }
        let positive: Vec<f64> = distinct.iter().filter(|&&n| n > 0).map(|&n| n as f64).collect();
        let ln_ref = positive.iter().map(|n| n.ln()).sum::<f64>() / positive.len().max(1) as f64;
        let n_scale = *distinct.last().unwrap() as f64;
        Ok(Scaled {
            t: points
                .iter()
                .map(|p| (p.tokens_seen > 0).then(|| (p.tokens_seen as f64).ln() - ln_ref))
                .collect(),
            x: points.iter().map(|p| p.tokens_seen as f64 / n_scale).collect(),
            y: points.iter().map(|p| p.accuracy).collect(),
            ln_ref,
            n_scale,
        })
    }

    fn t_range(&self) -> (f64, f64) {
        let ts = self.t.iter().flatten();
        let lo = ts.clone().cloned().fold(f64::INFINITY, f64::min);
        let hi = ts.cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Parameter vector layouts:
/// saturation `[p_inf, p0, a, ln_beta]`,
/// U-shape `[p_inf, p0, a, ln_beta, k, c, ln_s]` with `n0 = c * n_scale`.
trait Model {
    const N: usize;
    fn value_and_grad(&self, theta: &[f64], i: usize, grad: &mut [f64]) -> f64;
}

struct Saturation<'a>(&'a Scaled);
struct UShape<'a>(&'a Scaled);

fn saturation_part(d: &Scaled, theta: &[f64], i: usize, grad: &mut [f64]) -> f64 {
    let (p_inf, p0, a, lb) = (theta[0], theta[1], theta[2], theta[3]);
    match d.t[i] {
        None => {
            grad[0] = 0.0;
            grad[1] = 1.0;
            grad[2] = 0.0;
            grad[3] = 0.0;
            p0
        }
        Some(t) => {
            let beta = lb.exp();
            let z = (a + beta * t).exp();
            let e = (-z).exp();
            grad[0] = 1.0 - e;
            grad[1] = e;
            let de = -z * e * (p0 - p_inf);
            grad[2] = de;
            grad[3] = de * t * beta;
            p_inf + (p0 - p_inf) * e
        }
    }
}

impl Model for Saturation<'_> {
    const N: usize = 4;
    fn value_and_grad(&self, theta: &[f64], i: usize, grad: &mut [f64]) -> f64 {
        saturation_part(self.0, theta, i, grad)
    }
}

impl Model for UShape<'_> {
    const N: usize = 7;
    fn value_and_grad(&self, theta: &[f64], i: usize, grad: &mut [f64]) -> f64 {
        let base = saturation_part(self.0, theta, i, grad);
        let (k, c, ls) = (theta[4], theta[5], theta[6]);
        let s = ls.exp();
        let u = (self.0.x[i] - c) / s;
        let fp = fu_prime(u);
        grad[4] = fu(u);
        grad[5] = -k * fp / s;
        grad[6] = -k * fp * u;
        base + k * fu(u)
    }
}

struct Outcome {
    theta: Vec<f64>,
    cost: f64,
    converged: bool,
}

fn cost_of<M: Model>(m: &M, d: &Scaled, theta: &[f64]) -> f64 {
    let mut g = vec![0.0; M::N];
    d.y.iter()
        .enumerate()
        .map(|(i, y)| {
            let r = m.value_and_grad(theta, i, &mut g) - y;
            r * r
        })
        .sum::<f64>()
}

fn project(theta: &mut [f64]) {
    theta[0] = theta[0].clamp(0.0, 1.0);
    theta[1] = theta[1].clamp(0.0, 1.0);
}

fn levenberg_marquardt<M: Model>(m: &M, d: &Scaled, start: &[f64]) -> Outcome {
    let n = M::N;
    let rows = d.y.len();
    let mut theta = start.to_vec();
    project(&mut theta);
    let mut cost = cost_of(m, d, &theta);
    let mut lambda = 1e-3;
    let mut grad = vec![0.0; n];
    for _ in 0..MAX_ITER {
        if cost < 1e-28 {
            return Outcome { theta, cost, converged: true };
        }
        let mut jac = DMatrix::<f64>::zeros(rows, n);
        let mut r = DVector::<f64>::zeros(rows);
        for i in 0..rows {
            r[i] = m.value_and_grad(&theta, i, &mut grad) - d.y[i];
            for j in 0..n {
                jac[(i, j)] = grad[j];
            }
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        if g.amax() < 1e-15 {
            return Outcome { theta, cost, converged: true };
        }
        let diag_max = (0..n).map(|j| jtj[(j, j)]).fold(0.0f64, f64::max).max(1e-300);
        let mut accepted = false;
        while lambda < 1e20 {
            let mut a = jtj.clone();
            for j in 0..n {
                a[(j, j)] += lambda * jtj[(j, j)].max(1e-12 * diag_max);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
            project(&mut trial);
            let trial_cost = cost_of(m, d, &trial);
            if trial_cost.is_finite() && trial_cost < cost {
                let rel_drop = (cost - trial_cost) / cost.max(1e-300);
                let step_norm: f64 = theta
                    .iter()
                    .zip(&trial)
                    .map(|(a, b)| (a - b).abs() / (a.abs() + 1e-8))
                    .fold(0.0, f64::max);
                theta = trial;
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if rel_drop < 1e-15 || step_norm < 1e-13 {
                    return Outcome { theta, cost, converged: true };
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No descent direction left at working precision.
            let converged = g.amax() < 1e-8 * (1.0 + cost.sqrt());
            return Outcome { theta, cost, converged };
        }
    }
    Outcome { theta, cost, converged: false }
}

/// Linear least squares for the parameters that enter the model linearly,
/// given the nonlinear ones. Returns `[p_inf, p0]` (+ `k` when `with_u`).
fn linear_params(d: &Scaled, a: f64, lb: f64, u: Option<(f64, f64)>) -> Vec<f64> {
    let cols = if u.is_some() { 3 } else { 2 };
    let mut m = DMatrix::<f64>::zeros(d.y.len(), cols);
    let beta = lb.exp();
    for i in 0..d.y.len() {
        let e = d.t[i].map_or(1.0, |t| (-(a + beta * t).exp()).exp());
        m[(i, 0)] = 1.0 - e;
        m[(i, 1)] = e;
        if let Some((c, ls)) = u {
            m[(i, 2)] = fu((d.x[i] - c) / ls.exp());
        }
    }
    let y = DVector::from_vec(d.y.clone());
    let mut ata = m.transpose() * &m;
    for j in 0..cols {
        ata[(j, j)] += 1e-12;
    }
    let sol = ata
        .cholesky()
        .map(|c| c.solve(&(m.transpose() * y)))
        .unwrap_or_else(|| DVector::from_element(cols, 0.5));
    let mut v: Vec<f64> = sol.iter().cloned().collect();
    v[0] = v[0].clamp(0.0, 1.0);
    v[1] = v[1].clamp(0.0, 1.0);
    v
}

fn saturation_starts(d: &Scaled) -> Vec<Vec<f64>> {
    let (lo, hi) = d.t_range();
    let mut starts = Vec::with_capacity(8);
    for &beta in &[0.25f64, 0.5, 1.0, 2.0] {
        for &q in &[0.35, 0.65] {
            // put the transition (alpha * n^beta = 1) at quantile q of log n
            let t_mid = lo + q * (hi - lo);
            let a = -beta * t_mid;
            let lb = beta.ln();
            let lin = linear_params(d, a, lb, None);
            starts.push(vec![lin[0], lin[1], a, lb]);
        }
    }
    starts
}

fn best<I: IntoIterator<Item = Outcome>>(outcomes: I) -> Outcome {
    // Strict comparison keeps the earliest start on ties.
    outcomes
        .into_iter()
        .reduce(|best, o| if o.cost < best.cost { o } else { best })
        .expect("at least one start")
}

fn rmse(cost: f64, m: usize) -> f64 {
    (cost / m as f64).sqrt()
}

fn saturation_from(d: &Scaled, o: &Outcome) -> SaturationFit {
    let beta = o.theta[3].exp();
    SaturationFit {
        p_inf: o.theta[0],
        p0: o.theta[1],
        alpha: (o.theta[2] - beta * d.ln_ref).exp(),
        beta,
        residual: rmse(o.cost, d.y.len()),
        converged: o.converged,
    }
}

fn fit_saturation_scaled(d: &Scaled) -> (SaturationFit, Outcome) {
    let m = Saturation(d);
    let o = best(saturation_starts(d).iter().map(|s| levenberg_marquardt(&m, d, s)));
    (saturation_from(d, &o), o)
}

/// Least-squares fit of the saturation curve. Needs at least 4 distinct
/// `tokens_seen` values.
pub fn fit_saturation(points: &[TrajectoryPoint]) -> Result<SaturationFit, AnalysisError> {
    let d = Scaled::new(points, 4)?;
    Ok(fit_saturation_scaled(&d).0)
}

/// Least-squares fit of the saturation curve plus the U-shape term. The
/// U-term is warranted when it lowers the RMSE by more than `margin`
/// (relative) versus the saturation-only fit.
pub fn fit_ushape(points: &[TrajectoryPoint], margin: f64) -> Result<UShapeFit, AnalysisError> {
    let d = Scaled::new(points, 7)?;
    let (sat, sat_outcome) = fit_saturation_scaled(&d);
    let (a, lb) = (sat_outcome.theta[2], sat_outcome.theta[3]);
    let (xlo, xhi) = {
        let xs = d.x.iter().filter(|x| **x > 0.0);
        (
            xs.clone().cloned().fold(f64::INFINITY, f64::min),
            xs.cloned().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    let m = UShape(&d);
    let mut starts = Vec::with_capacity(8);
    for &q in &[0.2, 0.4, 0.6, 0.8] {
        // dip centres spread evenly over log n
        let c = (xlo.ln() + q * (xhi.ln() - xlo.ln())).exp();
        for &w in &[0.5, 1.0] {
            let ls = (w * c).ln();
            let lin = linear_params(&d, a, lb, Some((c, ls)));
            starts.push(vec![lin[0], lin[1], a, lb, lin[2], c, ls]);
        }
    }
    let o = best(starts.iter().map(|s| levenberg_marquardt(&m, &d, s)));
    let mut base = saturation_from(&d, &o);
    base.residual = sat.residual;
    let residual = rmse(o.cost, d.y.len());
    let reduction = sat.residual - residual;
    Ok(UShapeFit {
        base,
        k: o.theta[4],
        n0: o.theta[5] * d.n_scale,
        s: o.theta[6].exp() * d.n_scale,
        residual,
        converged: o.converged,
        saturation_residual: sat.residual,
        warranted: reduction > margin * sat.residual && reduction > WARRANT_ABS_FLOOR,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(ns: &[f64], f: impl Fn(f64) -> f64) -> Vec<TrajectoryPoint> {
        ns.iter()
            .map(|&n| TrajectoryPoint::new(n as u64, f(n)))
            .collect()
    }

    fn logspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
        (0..k)
            .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (k - 1) as f64).exp().round())
            .collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn fu_values() {
        assert_eq!(fu(0.0), 0.0);
        assert_eq!(fu(1.0), -0.5);
        assert_eq!(fu(-1.0), 0.5);
    }

    #[test]
    fn eval_limits() {
        let f = SaturationFit { p_inf: 0.83, p0: 0.5, alpha: 1e-4, beta: 0.5, residual: 0.0, converged: true };
        assert_eq!(f.eval(0.0), 0.5);
        assert!((f.eval(1e30) - 0.83).abs() < 1e-12);
        let u = UShapeFit { base: f, k: 0.0, n0: 1e8, s: 1e8, residual: 0.0, converged: true, saturation_residual: 0.0, warranted: false };
        for n in [0.0, 1e6, 1e9] {
            assert_eq!(u.eval(n), f.eval(n));
        }
    }

    #[test]
    fn recovers_saturation_parameters() {
        let truth = SaturationFit { p_inf: 0.83, p0: 0.50, alpha: 1e-4, beta: 0.5, residual: 0.0, converged: true };
        let pts = points(&logspace(1e6, 3e9, 20), |n| truth.eval(n));
        let fit = fit_saturation(&pts).unwrap();
        assert!(fit.converged);
        assert!(fit.residual < 1e-6, "{fit:?}");
        assert!(rel(fit.p_inf, 0.83) < 0.01, "{fit:?}");
        assert!(rel(fit.p0, 0.50) < 0.01, "{fit:?}");
        assert!(rel(fit.alpha, 1e-4) < 0.01, "{fit:?}");
        assert!(rel(fit.beta, 0.5) < 0.01, "{fit:?}");
    }

    #[test]
    fn flat_curve() {
        let pts = points(&logspace(1e6, 1e9, 6), |_| 0.7);
        let fit = fit_saturation(&pts).unwrap();
        assert!((fit.p_inf - 0.7).abs() < 1e-9 && (fit.p0 - 0.7).abs() < 1e-9, "{fit:?}");
        assert!(fit.residual < 1e-9);
    }

    #[test]
    fn too_few_points() {
        let pts = points(&[0.0, 0.0, 0.0, 0.0, 0.0], |_| 0.5);
        assert_eq!(
            fit_saturation(&pts).unwrap_err(),
            AnalysisError::InsufficientPoints { needed: 4, distinct: 1 }
        );
        let pts = points(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], |_| 0.5);
        assert!(matches!(fit_ushape(&pts, 0.05), Err(AnalysisError::InsufficientPoints { needed: 7, .. })));
    }

    #[test]
    fn recovers_ushape_parameters() {
        let base = SaturationFit { p_inf: 0.83, p0: 0.50, alpha: 1e-4, beta: 0.5, residual: 0.0, converged: true };
        let truth = UShapeFit { base, k: 0.1, n0: 3e8, s: 2e8, residual: 0.0, converged: true, saturation_residual: 0.0, warranted: true };
        let pts = points(&logspace(1e6, 3e9, 20), |n| truth.eval(n));
        let fit = fit_ushape(&pts, DEFAULT_WARRANT_MARGIN).unwrap();
        assert!(fit.warranted, "{fit:?}");
        for (got, want) in [
            (fit.base.p_inf, 0.83),
            (fit.base.p0, 0.5),
            (fit.base.alpha, 1e-4),
            (fit.base.beta, 0.5),
            (fit.k, 0.1),
            (fit.n0, 3e8),
            (fit.s, 2e8),
        ] {
            assert!(rel(got, want) < 0.05, "{got} vs {want}: {fit:?}");
        }
    }

    #[test]
    fn saturation_data_does_not_warrant_u_term() {
        let truth = SaturationFit { p_inf: 0.83, p0: 0.50, alpha: 1e-4, beta: 0.5, residual: 0.0, converged: true };
        let pts = points(&logspace(1e6, 3e9, 20), |n| truth.eval(n));
        let fit = fit_ushape(&pts, DEFAULT_WARRANT_MARGIN).unwrap();
        assert!(!fit.warranted, "{fit:?}");
        assert!(fit.residual <= fit.saturation_residual + 1e-9);
    }

    #[test]
    fn deterministic() {
        let pts = points(&logspace(1e6, 3e9, 12), |n| 0.6 + 0.2 * (n / 3e9).sqrt().min(1.0) + if n > 1e8 { 0.01 } else { 0.0 });
        assert_eq!(fit_saturation(&pts).unwrap(), fit_saturation(&pts).unwrap());
    }
}
