//! Cutting-plane solves of the epsilon-constrained problem
//!
//! ```text
//! min H2(z)  s.t.  pi^T z >= eps,  sum z <= k,  z binary
//! ```
//!
//! and the descending-epsilon sweep that reuses cuts and warm starts.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::{self, Cut, CutOracle, MasterProblem, MasterSolver, KNAPSACK_SLACK};
use crate::objective::{evaluate_support, grad_h2, h2, relaxed_h2, Gram};
use crate::prediction::PredictionMatrix;
use crate::solution::{ParetoFrontier, Solution};
use crate::CandidatePool;

/// Indices of MOSS-ε-H and MOSS-ε-M within the epsilon sequence.
pub const HIGH_INDEX: usize = 2;
pub const MEDIUM_INDEX: usize = 39;

fn check_k(k: usize, m: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    if k > m {
        return Err(Error::KTooLarge { k, m });
    }
    Ok(())
}

/// The `k` rules with the largest `pi` (pool order on ties), ridge-refit.
pub fn stability_select_topk(pool: &CandidatePool, pm: &PredictionMatrix, y: &[f64], k: usize) -> Result<Solution> {
    check_k(k, pool.len())?;
    let support = milp::top_k_indices(pool.pi(), k);
    evaluate_support(&support, pool.pi(), pm, y, 0.0)
}

/// Distinct window sums of the descending-sorted `pi`, largest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSequence {
    pub values: Vec<f64>,
    pub k: usize,
}

impl EpsilonSequence {
    pub fn epsilon_max(&self) -> f64 {
        self.values[0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Element `index`, clamped to the last one.
    pub fn clamped(&self, index: usize) -> f64 {
        self.values[index.min(self.values.len() - 1)]
    }

    pub fn high(&self) -> f64 {
        self.clamped(HIGH_INDEX)
    }

    pub fn medium(&self) -> f64 {
        self.clamped(MEDIUM_INDEX)
    }
}

pub fn epsilon_sequence(pi: &[f64], k: usize) -> Result<EpsilonSequence> {
    check_k(k, pi.len())?;
    let mut sorted = pi.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut values: Vec<f64> = Vec::with_capacity(sorted.len() - k + 1);
    for start in 0..=sorted.len() - k {
        let sum: f64 = sorted[start..start + k].iter().sum();
        if values.last().is_none_or(|&prev| sum < prev - 1e-12) {
            values.push(sum);
        }
    }
    Ok(EpsilonSequence { values, k })
}

/// Cuts accumulated across solves. Cuts depend only on `H2`, so they stay
/// valid for every epsilon.
#[derive(Debug, Clone, Default)]
pub struct CutStore {
    cuts: Vec<Cut>,
    origins: HashSet<Vec<usize>>,
}

impl CutStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn contains(&self, support: &[usize]) -> bool {
        self.origins.contains(support)
    }

    /// Adds the tangent cut of `H2` at `support` unless one exists already.
    /// Returns whether a cut was added.
    pub fn add_at(&mut self, support: &[usize], pm: &PredictionMatrix, y: &[f64]) -> Result<bool> {
        let mut support = support.to_vec();
        support.sort_unstable();
        if self.origins.contains(&support) {
            return Ok(false);
        }
        let (value, kernel) = h2(&support, pm, y)?;
        self.push_at(support, value, grad_h2(&kernel, pm));
        Ok(true)
    }

    fn push_at(&mut self, support: Vec<usize>, value: f64, a: Vec<f64>) {
        let b = value - support.iter().map(|&i| a[i]).sum::<f64>();
        self.origins.insert(support.clone());
        self.cuts.push(Cut {
            a,
            b,
            origin_support: support,
        });
    }

    /// Adds the tangent of the continuous extension of `H2` at a fractional
    /// point. It underestimates `H2` on every binary point. Returns the
    /// extension's value there and the cut.
    pub fn add_relaxed(&mut self, z: &[f64], pm: &PredictionMatrix, y: &[f64]) -> Result<(f64, &Cut)> {
        let (value, a, point) = relaxed_h2(z, pm, y)?;
        self.cuts.push(tangent(value, a, &point));
        Ok((value, self.cuts.last().expect("just pushed")))
    }
}

/// Tangent `f(point) + a^T (z - point)` at a fractional point.
fn tangent(value: f64, a: Vec<f64>, point: &[f64]) -> Cut {
    let b = value - a.iter().zip(point).map(|(ai, zi)| ai * zi).sum::<f64>();
    Cut {
        a,
        b,
        origin_support: Vec::new(),
    }
}

/// Lazy cut source for the master search. Tangents at binary points go into
/// the store for later solves; fractional ones only live in one search.
struct H2Oracle<'a> {
    gram: &'a Gram,
    store: &'a mut CutStore,
    values: HashMap<Vec<usize>, f64>,
    new_cuts: usize,
}

impl CutOracle for H2Oracle<'_> {
    fn at_support(&mut self, support: &[usize]) -> Result<(f64, Option<Cut>)> {
        if let Some(&v) = self.values.get(support) {
            return Ok((v, None));
        }
        let mut z = vec![0.0; self.gram.n_cols()];
        support.iter().for_each(|&i| z[i] = 1.0);
        let (value, a, _) = self.gram.relaxed(&z)?;
        self.values.insert(support.to_vec(), value);
        if self.store.contains(support) {
            return Ok((value, None));
        }
        self.store.push_at(support.to_vec(), value, a);
        self.new_cuts += 1;
        Ok((value, self.store.cuts().last().cloned()))
    }

    fn at_point(&mut self, z: &[f64]) -> Result<(f64, Cut)> {
        let (value, a, point) = self.gram.relaxed(z)?;
        self.new_cuts += 1;
        Ok((value, tangent(value, a, &point)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CuttingPlaneConfig {
    /// Stop once `H2(best) <= nu + delta_rel * (1 + |H2(best)|)`.
    pub delta_rel: f64,
    pub max_iterations: usize,
}

impl Default for CuttingPlaneConfig {
    fn default() -> Self {
        Self {
            delta_rel: 1e-6,
            max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    /// Master solves.
    pub iterations: usize,
    pub new_cuts: usize,
    pub nodes: usize,
}

/// Solves one epsilon-constrained problem by outer approximation, starting
/// from the feasible `warm` support and extending `cuts` in place.
#[allow(clippy::too_many_arguments)]
pub fn solve_fixed_epsilon(
    pi: &[f64],
    pm: &PredictionMatrix,
    y: &[f64],
    k: usize,
    epsilon: f64,
    cuts: &mut CutStore,
    warm: &[usize],
    cfg: &CuttingPlaneConfig,
    master: &dyn MasterSolver,
) -> Result<(Solution, SolveStats)> {
    check_k(k, pi.len())?;
    if !milp::check_feasible(pi, k, epsilon) {
        return Err(Error::Infeasible {
            epsilon,
            epsilon_max: milp::epsilon_max(pi, k),
        });
    }
    let mut z = warm.to_vec();
    z.sort_unstable();
    z.dedup();
    let warm_h1: f64 = z.iter().map(|&i| pi.get(i).copied().unwrap_or(f64::NAN)).sum();
    if z.len() > k || !(warm_h1 >= epsilon - KNAPSACK_SLACK) {
        return Err(Error::InvalidConfig(format!("warm start {z:?} is infeasible at epsilon {epsilon}")));
    }

    let gram = Gram::new(pm, y)?;
    let mut stats = SolveStats::default();
    let (mut best_h2, _) = h2(&z, pm, y)?;
    let mut best = z.clone();
    for _ in 0..cfg.max_iterations {
        if cuts.add_at(&z, pm, y)? {
            stats.new_cuts += 1;
        }
        let snapshot = cuts.cuts().to_vec();
        let problem = MasterProblem {
            cuts: &snapshot,
            pi,
            epsilon,
            k,
            incumbent: Some(&best),
        };
        let mut oracle = H2Oracle {
            gram: &gram,
            store: cuts,
            values: HashMap::new(),
            new_cuts: 0,
        };
        let ms = match master.solve_with_oracle(&problem, &mut oracle) {
            Some(result) => result?,
            None => master.solve(&problem)?,
        };
        stats.new_cuts += oracle.new_cuts;
        stats.iterations += 1;
        stats.nodes += ms.nodes;
        z = ms.support;
        let (value, _) = h2(&z, pm, y)?;
        if value < best_h2 {
            best_h2 = value;
            best = z.clone();
        }
        if best_h2 <= ms.nu + cfg.delta_rel * (1.0 + best_h2.abs()) {
            log::debug!(
                "eps {epsilon}: converged after {} iterations, {} new cuts, {} nodes",
                stats.iterations,
                stats.new_cuts,
                stats.nodes
            );
            return Ok((evaluate_support(&best, pi, pm, y, epsilon)?, stats));
        }
    }
    Err(Error::IterationLimit {
        what: "cutting-plane iterations",
        limit: cfg.max_iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Shared cut store, each solve warm-started from the previous one.
    Epm,
    /// Fresh cuts and the top-k warm start for every epsilon.
    Cold,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParetoRun {
    pub frontier: ParetoFrontier,
    pub stats: Vec<SolveStats>,
    pub cuts_generated: usize,
}

/// Solves every epsilon in `epsilons` (strictly decreasing).
#[allow(clippy::too_many_arguments)]
pub fn compute_pareto(
    pool: &CandidatePool,
    pm: &PredictionMatrix,
    y: &[f64],
    k: usize,
    epsilons: &[f64],
    mode: SweepMode,
    cfg: &CuttingPlaneConfig,
    master: &dyn MasterSolver,
) -> Result<ParetoRun> {
    check_k(k, pool.len())?;
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidConfig("epsilon values must be strictly decreasing".into()));
    }
    let topk = milp::top_k_indices(pool.pi(), k);
    let mut store = CutStore::new();
    let mut warm = topk.clone();
    let mut points = Vec::with_capacity(epsilons.len());
    let mut stats = Vec::with_capacity(epsilons.len());
    let mut cuts_generated = 0;
    for &eps in epsilons {
        if mode == SweepMode::Cold {
            store = CutStore::new();
            warm = topk.clone();
        }
        let (sol, st) = solve_fixed_epsilon(pool.pi(), pm, y, k, eps, &mut store, &warm, cfg, master)
            .map_err(|e| e.at_epsilon(eps))?;
        cuts_generated += st.new_cuts;
        warm = sol.support.clone();
        points.push(sol);
        stats.push(st);
    }
    Ok(ParetoRun {
        frontier: ParetoFrontier {
            points,
            pool_fingerprint: pool.fingerprint(),
        },
        stats,
        cuts_generated,
    })
}
