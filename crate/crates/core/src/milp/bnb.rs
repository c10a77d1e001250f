use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;

use super::lp::{Lp, LpFailure, Outcome, Snapshot};
use super::{
    check_feasible, epsilon_max, top_k_indices, Cut, CutOracle, MasterProblem, MasterSolution, MasterSolver, KNAPSACK_SLACK,
};
use crate::error::{Error, Result};

const INTEGRAL_TOL: f64 = 1e-9;
/// Separation rounds per node before branching anyway.
const MAX_ROUNDS: usize = 50;
/// Stored cuts in the root relaxation when cuts are generated lazily.
const ROOT_ROWS: usize = 50;

/// Best-bound branch-and-bound over LP relaxations.
///
/// Without an oracle it solves the master problem over the given cuts. With
/// one it generates tangents during the search, at fractional relaxation
/// points and at candidate supports, and prunes against the true objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAndBound {
    pub node_limit: usize,
    /// Prune when `bound >= incumbent - rel_tol * (1 + |incumbent|)`.
    pub rel_tol: f64,
}

impl Default for BranchAndBound {
    fn default() -> Self {
        Self {
            node_limit: 1_000_000,
            rel_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fix {
    Free,
    Zero,
    One,
}

struct Node {
    bound: f64,
    seq: usize,
    fix: Vec<Fix>,
    warm: Option<Rc<Snapshot>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: smaller bound, then earlier creation, pops first
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.seq.cmp(&self.seq))
    }
}

struct Incumbent {
    value: f64,
    support: Vec<usize>,
}

struct Search<'a, 'o> {
    mp: &'a MasterProblem<'a>,
    pool: Vec<Cut>,
    best: Option<Incumbent>,
    oracle: Option<&'o mut dyn CutOracle>,
    rel_tol: f64,
}

impl Search<'_, '_> {
    /// Records `support` as incumbent if feasible and better. Returns the
    /// pool index of a cut the oracle produced for it.
    fn offer(&mut self, mut support: Vec<usize>) -> Result<Option<usize>> {
        support.sort_unstable();
        if !self.mp.is_feasible(&support) {
            return Ok(None);
        }
        let (value, new_cut) = match self.oracle.as_deref_mut() {
            Some(oracle) => {
                let (value, cut) = oracle.at_support(&support)?;
                let id = cut.map(|c| {
                    self.pool.push(c);
                    self.pool.len() - 1
                });
                (value, id)
            }
            None => (self.model_value(&support), None),
        };
        let better = match &self.best {
            None => true,
            Some(b) => value < b.value || (value == b.value && support < b.support),
        };
        if better {
            self.best = Some(Incumbent { value, support });
        }
        Ok(new_cut)
    }

    fn model_value(&self, support: &[usize]) -> f64 {
        self.pool.iter().map(|c| c.eval(support)).fold(f64::NEG_INFINITY, f64::max)
    }

    fn cutoff(&self) -> f64 {
        self.best
            .as_ref()
            .map_or(f64::INFINITY, |b| b.value - self.rel_tol * (1.0 + b.value.abs()))
    }
}

/// Fixed ones plus the highest-`pi` free variables up to the cardinality
/// budget, or `None` when no integer point in the node meets `eps`.
fn greedy_point(fix: &[Fix], pi: &[f64], k: usize, epsilon: f64) -> Option<Vec<usize>> {
    let mut chosen: Vec<usize> = (0..fix.len()).filter(|&i| fix[i] == Fix::One).collect();
    if chosen.len() > k {
        return None;
    }
    let free: Vec<usize> = (0..fix.len()).filter(|&i| fix[i] == Fix::Free).collect();
    let free_pi: Vec<f64> = free.iter().map(|&i| pi[i]).collect();
    chosen.extend(top_k_indices(&free_pi, k - chosen.len()).into_iter().map(|j| free[j]));
    let total: f64 = chosen.iter().map(|&i| pi[i]).sum();
    (total >= epsilon - KNAPSACK_SLACK).then_some(chosen)
}

/// Fixes free variables the knapsack decides: `i` goes to zero when no
/// completion containing it reaches `eps`, and to one when no completion
/// without it does. Returns false when the node has no feasible point.
fn propagate(fix: &mut [Fix], pi: &[f64], k: usize, epsilon: f64) -> bool {
    loop {
        let fixed_pi: f64 = (0..fix.len()).filter(|&i| fix[i] == Fix::One).map(|i| pi[i]).sum();
        let ones = fix.iter().filter(|f| **f == Fix::One).count();
        if ones > k {
            return false;
        }
        let room = k - ones;
        let mut free: Vec<usize> = (0..fix.len()).filter(|&i| fix[i] == Fix::Free).collect();
        if room == 0 {
            free.iter().for_each(|&i| fix[i] = Fix::Zero);
            return fixed_pi >= epsilon - KNAPSACK_SLACK;
        }
        free.sort_by(|&a, &b| pi[b].total_cmp(&pi[a]).then(a.cmp(&b)));
        let top = &free[..room.min(free.len())];
        let best: f64 = fixed_pi + top.iter().map(|&i| pi[i]).sum::<f64>();
        if best < epsilon - KNAPSACK_SLACK {
            return false;
        }
        // the weakest member of the best completion and the strongest outsider
        let last_in = top.last().map_or(0.0, |&i| pi[i]);
        let first_out = free.get(room).map_or(0.0, |&i| pi[i]);
        let mut changed = false;
        for (rank, &i) in free.iter().enumerate() {
            let (with_i, without_i) = if rank < room {
                (best, best - pi[i] + first_out)
            } else {
                (best - last_in + pi[i], best)
            };
            if with_i < epsilon - KNAPSACK_SLACK {
                fix[i] = Fix::Zero;
                changed = true;
            } else if without_i < epsilon - KNAPSACK_SLACK {
                fix[i] = Fix::One;
                changed = true;
            }
        }
        if !changed {
            return true;
        }
    }
}

fn mark(in_lp: &mut Vec<bool>, id: usize) {
    if in_lp.len() <= id {
        in_lp.resize(id + 1, false);
    }
    in_lp[id] = true;
}

fn bounds(fix: &[Fix]) -> (Vec<f64>, Vec<f64>) {
    let lo = fix.iter().map(|f| if *f == Fix::One { 1.0 } else { 0.0 }).collect();
    let up = fix.iter().map(|f| if *f == Fix::Zero { 0.0 } else { 1.0 }).collect();
    (lo, up)
}

fn is_integral(z: &[f64]) -> bool {
    z.iter().all(|&v| v <= INTEGRAL_TOL || v >= 1.0 - INTEGRAL_TOL)
}

fn support_of(z: &[f64]) -> Vec<usize> {
    (0..z.len()).filter(|&i| z[i] > 0.5).collect()
}

/// Lagrangian lower bound of the node from the LP duals; valid for any
/// multipliers, so LP round-off can only weaken it.
fn dual_bound(lp: &Lp, pool: &[Cut], mp: &MasterProblem<'_>, fix: &[Fix]) -> f64 {
    let (u, mu, rho) = lp.multipliers();
    if u.iter().all(|&(_, v)| v == 0.0) {
        return f64::NEG_INFINITY;
    }
    let mut coef: Vec<f64> = mp.pi.iter().map(|p| rho - mu * p).collect();
    let mut bound = mu * mp.epsilon - rho * mp.k as f64;
    for &(id, w) in &u {
        if w == 0.0 {
            continue;
        }
        bound += w * pool[id].b;
        for (c, a) in coef.iter_mut().zip(&pool[id].a) {
            *c += w * a;
        }
    }
    for (f, c) in fix.iter().zip(&coef) {
        bound += match f {
            Fix::One => *c,
            Fix::Zero => 0.0,
            Fix::Free => c.min(0.0),
        };
    }
    bound
}

/// Most fractional free variable of `z`, lowest index on ties.
fn most_fractional(fix: &[Fix], z: &[f64]) -> Option<usize> {
    (0..z.len())
        .filter(|&i| fix[i] == Fix::Free)
        .map(|i| (i, z[i].min(1.0 - z[i])))
        .filter(|&(_, frac)| frac > INTEGRAL_TOL)
        .fold(None, |best: Option<(usize, f64)>, cur| match best {
            Some(b) if b.1 >= cur.1 => Some(b),
            _ => Some(cur),
        })
        .map(|(i, _)| i)
}

/// Fixed ones, then free variables by decreasing `z`, then `pi`.
fn round(fix: &[Fix], z: &[f64], pi: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..z.len()).filter(|&i| fix[i] == Fix::Free && z[i] > INTEGRAL_TOL).collect();
    order.sort_by(|&a, &b| z[b].total_cmp(&z[a]).then(pi[b].total_cmp(&pi[a])).then(a.cmp(&b)));
    let mut rounded: Vec<usize> = (0..z.len()).filter(|&i| fix[i] == Fix::One).collect();
    let room = k.saturating_sub(rounded.len());
    rounded.extend(order.iter().take(room));
    rounded
}

enum NodeResult {
    Pruned,
    Branch { bound: f64, var: usize, warm: Snapshot },
}

impl BranchAndBound {
    fn pivot_limit(m: usize, rows: usize) -> usize {
        50 * (2 * m + rows + 1)
    }

    /// Solves the node relaxation, rebuilding from the slack basis once if
    /// the warm basis runs into trouble. `None` means the relaxation could
    /// not be solved reliably.
    fn solve_lp(lp: &mut Lp, rebuild: impl Fn() -> std::result::Result<Lp, LpFailure>, m: usize) -> Option<Outcome> {
        for attempt in 0..2 {
            if attempt == 1 {
                *lp = rebuild().ok()?;
            }
            let limit = Self::pivot_limit(m, lp.rows());
            let outcome = lp.solve(limit);
            if let Ok(o) = outcome {
                return Some(o);
            }
        }
        None
    }

    fn process(&self, s: &mut Search<'_, '_>, node: &Node, lazy: bool) -> Result<(NodeResult, usize)> {
        let mp = s.mp;
        let m = mp.pi.len();
        let fix = &node.fix;
        let (lo, up) = bounds(fix);
        let rows: Vec<usize> = match (&node.warm, lazy) {
            (Some(snap), _) => snap.cut_rows.clone(),
            (None, false) => (0..s.pool.len()).collect(),
            (None, true) => root_rows(&s.pool, s.best.as_ref().map(|b| b.support.as_slice())),
        };
        let rows = if rows.is_empty() { root_rows(&s.pool, None) } else { rows };
        let mut lp = match Lp::new(&s.pool, &rows, mp.pi, mp.epsilon, mp.k, &lo, &up, node.warm.as_deref()) {
            Ok(lp) => lp,
            Err(_) => return Ok((self.fallback_branch(node), 0)),
        };
        let mut in_lp = vec![false; s.pool.len()];
        rows.iter().for_each(|&id| in_lp[id] = true);
        let mut bound = node.bound;
        let mut center: Option<(Vec<f64>, f64)> = None;
        let mut z = Vec::new();

        for _ in 0..if lazy { MAX_ROUNDS } else { 1 } {
            let rebuild = || {
                let ids: Vec<usize> = (0..in_lp.len()).filter(|&id| in_lp[id]).collect();
                Lp::new(&s.pool, &ids, mp.pi, mp.epsilon, mp.k, &lo, &up, None)
            };
            match Self::solve_lp(&mut lp, rebuild, m) {
                Some(Outcome::Optimal) => {}
                // the greedy check already found an integer point here
                Some(Outcome::Infeasible) | None => return Ok((self.fallback_branch(node), lp.pivots)),
            }
            bound = bound.max(dual_bound(&lp, &s.pool, mp, fix));
            if bound >= s.cutoff() {
                return Ok((NodeResult::Pruned, lp.pivots));
            }
            z = lp.z();

            if !lazy {
                s.offer(round(fix, &z, mp.pi, mp.k))?;
                if is_integral(&z) {
                    s.offer(support_of(&z))?;
                }
                break;
            }

            // tangent at the midpoint of the relaxation point and the best
            // relaxed point seen at this node
            let zs: Vec<f64> = match &center {
                None => z.clone(),
                Some((c, _)) => z.iter().zip(c).map(|(a, b)| 0.5 * (a + b)).collect(),
            };
            let (f, new_cut) = if is_integral(&zs) {
                let support = support_of(&zs);
                let new_cut = s.offer(support.clone())?;
                let value = match &s.best {
                    Some(b) if b.support == support => b.value,
                    _ => s.oracle.as_deref_mut().expect("lazy search has an oracle").at_support(&support)?.0,
                };
                (value, new_cut)
            } else {
                let (value, cut) = s.oracle.as_deref_mut().expect("lazy search has an oracle").at_point(&zs)?;
                s.pool.push(cut);
                (value, Some(s.pool.len() - 1))
            };
            if let Some(id) = new_cut {
                lp.add_cut(&s.pool, id);
                mark(&mut in_lp, id);
            }
            if center.as_ref().is_none_or(|(_, fc)| f < *fc) {
                center = Some((zs, f));
            }
            let (c, fc) = center.as_ref().expect("set above");
            if let Some(id) = s.offer(round(fix, c, mp.pi, mp.k))? {
                lp.add_cut(&s.pool, id);
                mark(&mut in_lp, id);
            }
            let cutoff = s.cutoff();
            if bound >= cutoff {
                return Ok((NodeResult::Pruned, lp.pivots));
            }
            // the exact relaxation cannot prune this node, or it is solved
            if (*fc < cutoff && !is_integral(c)) || *fc - bound <= self.rel_tol * (1.0 + fc.abs()) {
                break;
            }
        }

        let pivots = lp.pivots;
        // the final relaxation point branches better than the stabilization center
        let var = most_fractional(fix, &z)
            .or_else(|| center.as_ref().and_then(|(c, _)| most_fractional(fix, c)))
            .or_else(|| {
                // integral relaxation: done unless the bound is still loose
                let value = s.best.as_ref().map_or(f64::INFINITY, |b| b.value);
                if lazy || value > bound + self.rel_tol * (1.0 + value.abs()) {
                    (0..m).find(|&i| fix[i] == Fix::Free)
                } else {
                    None
                }
            });
        let Some(var) = var else {
            return Ok((NodeResult::Pruned, pivots));
        };
        let warm = if lazy { lp.snapshot_binding() } else { lp.snapshot_all() };
        Ok((NodeResult::Branch { bound, var, warm }, pivots))
    }

    /// Branches without pruning when the relaxation could not be trusted.
    fn fallback_branch(&self, node: &Node) -> NodeResult {
        log::warn!("node relaxation failed; branching on its parent bound");
        match (0..node.fix.len()).find(|&i| node.fix[i] == Fix::Free) {
            Some(var) => NodeResult::Branch {
                bound: node.bound,
                var,
                warm: Snapshot {
                    cut_rows: Vec::new(),
                    basic: Vec::new(),
                    z_status: Vec::new(),
                },
            },
            None => NodeResult::Pruned,
        }
    }

    fn run(&self, mp: &MasterProblem<'_>, oracle: Option<&mut dyn CutOracle>) -> Result<MasterSolution> {
        let m = mp.pi.len();
        if mp.cuts.is_empty() {
            return Err(Error::InvalidConfig("master problem has no cuts".into()));
        }
        if mp.k == 0 {
            return Err(Error::InvalidConfig("cardinality bound k must be positive".into()));
        }
        if let Some(c) = mp.cuts.iter().find(|c| c.a.len() != m) {
            return Err(Error::DimensionMismatch(format!("cut has {} coefficients, pool has {m}", c.a.len())));
        }
        if !check_feasible(mp.pi, mp.k, mp.epsilon) {
            return Err(Error::Infeasible {
                epsilon: mp.epsilon,
                epsilon_max: epsilon_max(mp.pi, mp.k),
            });
        }

        let lazy = oracle.is_some();
        let mut s = Search {
            mp,
            pool: mp.cuts.to_vec(),
            best: None,
            oracle,
            rel_tol: self.rel_tol,
        };
        if let Some(inc) = mp.incumbent {
            s.offer(inc.to_vec())?;
        }

        let mut heap = BinaryHeap::new();
        heap.push(Node {
            bound: f64::NEG_INFINITY,
            seq: 0,
            fix: vec![Fix::Free; m],
            warm: None,
        });
        let mut seq = 1;
        let mut nodes = 0;
        let mut pivots = 0;
        while let Some(mut node) = heap.pop() {
            if node.bound >= s.cutoff() {
                continue;
            }
            if !propagate(&mut node.fix, mp.pi, mp.k, mp.epsilon) {
                continue;
            }
            nodes += 1;
            if nodes > self.node_limit {
                return Err(Error::IterationLimit {
                    what: "branch-and-bound nodes",
                    limit: self.node_limit,
                });
            }
            let Some(start) = greedy_point(&node.fix, mp.pi, mp.k, mp.epsilon) else {
                continue;
            };
            s.offer(start)?;
            let (result, node_pivots) = self.process(&mut s, &node, lazy)?;
            pivots += node_pivots;
            let NodeResult::Branch { bound, var, warm } = result else {
                continue;
            };
            let warm = (!warm.basic.is_empty()).then(|| Rc::new(warm));
            for value in [Fix::One, Fix::Zero] {
                let mut fix = node.fix.clone();
                fix[var] = value;
                heap.push(Node {
                    bound,
                    seq,
                    fix,
                    warm: warm.clone(),
                });
                seq += 1;
            }
        }

        let best = s.best.expect("a feasible master always yields an incumbent");
        log::debug!(
            "master solved: {} cuts ({} generated), {nodes} nodes, {pivots} pivots, value {}",
            mp.cuts.len(),
            s.pool.len() - mp.cuts.len(),
            best.value
        );
        Ok(MasterSolution {
            nu: best.value,
            support: best.support,
            nodes,
            lp_pivots: pivots,
        })
    }
}

/// Stored cuts for a lazy root relaxation: the largest ones at `at` (the
/// incumbent), at most [`ROOT_ROWS`].
fn root_rows(pool: &[Cut], at: Option<&[usize]>) -> Vec<usize> {
    if pool.len() <= ROOT_ROWS {
        return (0..pool.len()).collect();
    }
    let at = at.unwrap_or(&[]);
    let mut ranked: Vec<(f64, usize)> = pool.iter().enumerate().map(|(j, c)| (c.eval(at), j)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
    let mut rows: Vec<usize> = ranked.into_iter().take(ROOT_ROWS).map(|(_, j)| j).collect();
    rows.sort_unstable();
    rows
}

impl MasterSolver for BranchAndBound {
    fn solve(&self, mp: &MasterProblem<'_>) -> Result<MasterSolution> {
        self.run(mp, None)
    }

    fn solve_with_oracle(&self, mp: &MasterProblem<'_>, oracle: &mut dyn CutOracle) -> Option<Result<MasterSolution>> {
        Some(self.run(mp, Some(oracle)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_variable_example() {
        let cuts = [Cut {
            a: vec![-1.0, -2.0, 0.0],
            b: 3.0,
            origin_support: vec![],
        }];
        let mp = MasterProblem {
            cuts: &cuts,
            pi: &[0.9, 0.5, 0.4],
            epsilon: 0.5,
            k: 1,
            incumbent: None,
        };
        let sol = BranchAndBound::default().solve(&mp).unwrap();
        assert_eq!(sol.support, vec![1]);
        assert_eq!(sol.nu, 1.0);
    }

    #[test]
    fn infeasible_reports_epsilon_max() {
        let cuts = [Cut {
            a: vec![0.0; 2],
            b: 1.0,
            origin_support: vec![],
        }];
        let mp = MasterProblem {
            cuts: &cuts,
            pi: &[0.9, 0.7],
            epsilon: 1.7,
            k: 1,
            incumbent: None,
        };
        match BranchAndBound::default().solve(&mp) {
            Err(Error::Infeasible { epsilon_max, .. }) => assert_eq!(epsilon_max, 0.9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn propagation_fixes_forced_variables() {
        // k = 2, eps = 1.5: only {0, 1} reaches it
        let mut fix = vec![Fix::Free; 4];
        assert!(propagate(&mut fix, &[0.9, 0.7, 0.3, 0.2], 2, 1.5));
        assert_eq!(fix, vec![Fix::One, Fix::One, Fix::Zero, Fix::Zero]);
        let mut fix = vec![Fix::Free, Fix::Zero, Fix::Free, Fix::Free];
        assert!(!propagate(&mut fix, &[0.9, 0.7, 0.3, 0.2], 2, 1.5));
    }
}

