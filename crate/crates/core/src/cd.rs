//! Coordinate descent on the penalized problem
//!
//! ```text
//! 1/2 ||y - M w||^2 + 1/(2 gamma) ||w||^2 + sum_i (lambda1 - pi_i lambda2) 1(w_i != 0)
//! ```
//!
//! Each coordinate update is an exact one-dimensional minimization, so the
//! objective never increases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::evaluate_support;
use crate::prediction::{dot, PredictionMatrix};
use crate::solution::Solution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CdConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub max_sweeps: usize,
    pub tol: f64,
    /// Record the objective after every coordinate update.
    pub record_trace: bool,
}

impl Default for CdConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.0,
            lambda2: 0.0,
            max_sweeps: 1000,
            tol: 1e-8,
            record_trace: false,
        }
    }
}

/// Minimizer over `w_k` with every other coordinate held fixed, where `r_k`
/// is the residual with coordinate `k` removed. Zero wins ties.
pub fn cd_update(r_k: &[f64], m_k: &[f64], pi_k: f64, gamma: f64, lambda1: f64, lambda2: f64) -> f64 {
    let a = dot(m_k, r_k);
    if a == 0.0 {
        return 0.0;
    }
    let d = dot(m_k, m_k) + 1.0 / gamma;
    if 0.5 * a * a / d > lambda1 - pi_k * lambda2 {
        a / d
    } else {
        0.0
    }
}

/// Penalized objective at full-length weights `w`.
pub fn cd_objective(w: &[f64], pm: &PredictionMatrix, y: &[f64], pi: &[f64], cfg: &CdConfig) -> f64 {
    let mut r = y.to_vec();
    let mut value = 0.0;
    for (i, &wi) in w.iter().enumerate() {
        if wi != 0.0 {
            for (rv, mv) in r.iter_mut().zip(pm.column(i)) {
                *rv -= wi * mv;
            }
            value += 0.5 / pm.gamma() * wi * wi + cfg.lambda1 - pi[i] * cfg.lambda2;
        }
    }
    value + 0.5 * dot(&r, &r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdResult {
    /// Ridge refit on the final support.
    pub solution: Solution,
    /// Raw coordinate-descent weights, one per pool rule.
    pub raw_weights: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub objective: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<f64>,
}

/// Cyclic coordinate descent from `w = 0`. When the sweep budget runs out the
/// last iterate is returned with `converged = false`.
pub fn solve_cd(pm: &PredictionMatrix, y: &[f64], pi: &[f64], cfg: &CdConfig) -> Result<CdResult> {
    let m = pm.n_cols();
    if pi.len() != m || y.len() != pm.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "pi has {} entries, y {} rows for a {}x{m} matrix",
            pi.len(),
            y.len(),
            pm.n_rows()
        )));
    }
    if !(cfg.lambda1 >= 0.0 && cfg.lambda2 >= 0.0) {
        return Err(Error::InvalidConfig("lambda1 and lambda2 must be non-negative".into()));
    }
    let gamma = pm.gamma();
    let sq_norms: Vec<f64> = (0..m).map(|i| dot(pm.column(i), pm.column(i))).collect();
    let mut w = vec![0.0; m];
    let mut r = y.to_vec();
    let mut objective = 0.5 * dot(y, y);
    let mut trace = Vec::new();
    let mut sweeps = 0;
    let mut converged = false;

    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let mut support_changed = false;
        let mut max_change: f64 = 0.0;
        for i in 0..m {
            let col = pm.column(i);
            let old = w[i];
            // r_k = r + M_i w_i
            let a = dot(col, &r) + sq_norms[i] * old;
            let d = sq_norms[i] + 1.0 / gamma;
            let penalty = cfg.lambda1 - pi[i] * cfg.lambda2;
            let new = if a != 0.0 && 0.5 * a * a / d > penalty { a / d } else { 0.0 };
            if new == old {
                if cfg.record_trace {
                    trace.push(objective);
                }
                continue;
            }
            let f = |v: f64| if v == 0.0 { 0.0 } else { -a * v + 0.5 * d * v * v + penalty };
            let delta = f(new) - f(old);
            debug_assert!(delta <= 1e-12 * (1.0 + objective.abs()), "update {i} raised the objective by {delta}");
            objective += delta;
            let step = new - old;
            for (rv, mv) in r.iter_mut().zip(col) {
                *rv -= step * mv;
            }
            support_changed |= (old == 0.0) != (new == 0.0);
            max_change = max_change.max(step.abs());
            w[i] = new;
            if cfg.record_trace {
                trace.push(objective);
            }
        }
        if cfg!(debug_assertions) {
            let fresh = fresh_residual(&w, pm, y);
            let drift = fresh.iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            debug_assert!(drift <= 1e-8 * (1.0 + dot(y, y).sqrt()), "residual drift {drift}");
        }
        // resync to keep round-off from accumulating over long runs
        r = fresh_residual(&w, pm, y);
        if !support_changed && max_change < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("coordinate descent hit the sweep limit of {}", cfg.max_sweeps);
    }
    let support: Vec<usize> = (0..m).filter(|&i| w[i] != 0.0).collect();
    let solution = evaluate_support(&support, pi, pm, y, 0.0)?;
    Ok(CdResult {
        solution,
        objective: cd_objective(&w, pm, y, pi, cfg),
        raw_weights: w,
        sweeps,
        converged,
        trace,
    })
}

fn fresh_residual(w: &[f64], pm: &PredictionMatrix, y: &[f64]) -> Vec<f64> {
    let mut r = y.to_vec();
    for (i, &wi) in w.iter().enumerate() {
        if wi != 0.0 {
            for (rv, mv) in r.iter_mut().zip(pm.column(i)) {
                *rv -= wi * mv;
            }
        }
    }
    r
}

/// `lambda1` at and above which the zero vector is a fixed point.
pub fn lambda1_max(pm: &PredictionMatrix, y: &[f64], pi: &[f64], lambda2: f64) -> f64 {
    (0..pm.n_cols())
        .map(|i| {
            let col = pm.column(i);
            let a = dot(col, y);
            0.5 * a * a / (dot(col, col) + 1.0 / pm.gamma()) + pi[i] * lambda2
        })
        .fold(0.0, f64::max)
}

/// Largest single-rule gain `max_i 1/2 (M_i^T y)^2 / (||M_i||^2 + 1/gamma)`;
/// the scale used for the default `lambda2`.
pub fn max_single_gain(pm: &PredictionMatrix, y: &[f64]) -> f64 {
    lambda1_max(pm, y, &vec![0.0; pm.n_cols()], 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetFit {
    pub result: CdResult,
    pub lambda1: f64,
    pub achieved: usize,
}

/// Searches `lambda1` for the largest support of size at most `k_target`:
/// bisection first, then a grid scan when bisection misses the target
/// (support size need not be monotone in `lambda1`).
pub fn fit_target_k(pm: &PredictionMatrix, y: &[f64], pi: &[f64], lambda2: f64, k_target: usize, base: &CdConfig) -> Result<TargetFit> {
    if k_target == 0 {
        return Err(Error::InvalidConfig("k_target must be positive".into()));
    }
    let run = |lambda1: f64| {
        let cfg = CdConfig {
            lambda1,
            lambda2,
            ..*base
        };
        solve_cd(pm, y, pi, &cfg).map(|r| TargetFit {
            achieved: r.solution.support_size(),
            result: r,
            lambda1,
        })
    };
    let keep = |best: &mut Option<TargetFit>, cand: TargetFit| {
        if cand.achieved <= k_target && best.as_ref().is_none_or(|b| cand.achieved > b.achieved) {
            *best = Some(cand);
        }
    };

    let unpenalized = run(0.0)?;
    if unpenalized.achieved <= k_target {
        return Ok(unpenalized);
    }
    let hi_max = lambda1_max(pm, y, pi, lambda2);
    let mut best: Option<TargetFit> = None;
    keep(&mut best, run(hi_max)?);
    let (mut lo, mut hi) = (0.0, hi_max);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let fit = run(mid)?;
        let size = fit.achieved;
        keep(&mut best, fit);
        if size == k_target {
            break;
        }
        if size > k_target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi_max {
            break;
        }
    }
    if best.as_ref().is_none_or(|b| b.achieved < k_target) {
        log::info!("bisection missed k = {k_target}; scanning a lambda1 grid");
        for step in 1..64 {
            let fit = run(hi_max * step as f64 / 64.0)?;
            keep(&mut best, fit);
            if best.as_ref().is_some_and(|b| b.achieved == k_target) {
                break;
            }
        }
    }
    Ok(best.expect("lambda1_max always yields the empty support"))
}
