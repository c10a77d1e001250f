//! The cutting-plane master problem
//!
//! ```text
//! min nu  s.t.  nu >= a_j^T z + b_j  (every cut),  pi^T z >= eps,  sum z <= k,  z binary
//! ```
//!
//! [`BranchAndBound`] is the built-in backend; other MILP solvers can be
//! plugged in through [`MasterSolver`].

mod bnb;
mod lp;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use bnb::BranchAndBound;

/// Slack on the stability knapsack when checking an integer point.
pub const KNAPSACK_SLACK: f64 = 1e-12;

/// Linear underestimator `nu >= a^T z + b` of `H2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub a: Vec<f64>,
    pub b: f64,
    /// Support of the binary point the cut was generated at; empty for cuts
    /// taken at fractional points.
    pub origin_support: Vec<usize>,
}

impl Cut {
    /// `a^T z + b` at the indicator vector of `support`.
    pub fn eval(&self, support: &[usize]) -> f64 {
        self.b + support.iter().map(|&i| self.a[i]).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MasterProblem<'a> {
    pub cuts: &'a [Cut],
    pub pi: &'a [f64],
    pub epsilon: f64,
    pub k: usize,
    /// Feasible support used as the initial incumbent.
    pub incumbent: Option<&'a [usize]>,
}

impl MasterProblem<'_> {
    /// Piecewise-linear model value `max_j a_j^T z + b_j`.
    pub fn model_value(&self, support: &[usize]) -> f64 {
        self.cuts.iter().map(|c| c.eval(support)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Checks both linear constraints exactly (knapsack with [`KNAPSACK_SLACK`]).
    pub fn is_feasible(&self, support: &[usize]) -> bool {
        support.len() <= self.k
            && support.iter().all(|&i| i < self.pi.len())
            && support.iter().map(|&i| self.pi[i]).sum::<f64>() >= self.epsilon - KNAPSACK_SLACK
    }

    /// The problem in CPLEX LP format, for cross-checking with external solvers.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::from("\\ cutting-plane master problem\nMinimize\n obj: nu\nSubject To\n");
        let terms = |coef: &[f64]| {
            let mut s = String::new();
            for (i, a) in coef.iter().enumerate() {
                if *a != 0.0 {
                    let _ = write!(s, " {} {:e} z{i}", if *a < 0.0 { "-" } else { "+" }, a.abs());
                }
            }
            s
        };
        for (j, cut) in self.cuts.iter().enumerate() {
            let neg: Vec<f64> = cut.a.iter().map(|a| -a).collect();
            let _ = writeln!(out, " cut{j}: nu{} >= {:e}", terms(&neg), cut.b);
        }
        let _ = writeln!(out, " stability:{} >= {:e}", terms(self.pi), self.epsilon);
        let ones = vec![1.0; self.pi.len()];
        let _ = writeln!(out, " cardinality:{} <= {}", terms(&ones), self.k);
        out.push_str("Bounds\n nu free\nBinary\n");
        for i in 0..self.pi.len() {
            let _ = writeln!(out, " z{i}");
        }
        out.push_str("End\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterSolution {
    pub nu: f64,
    /// Sorted indices with `z_i = 1`.
    pub support: Vec<usize>,
    pub nodes: usize,
    pub lp_pivots: usize,
}

pub trait MasterSolver: Send + Sync {
    /// Returns a provably optimal binary solution of `problem`.
    fn solve(&self, problem: &MasterProblem<'_>) -> Result<MasterSolution>;

    /// Solves the problem behind `problem` with cuts generated on demand, so
    /// `nu` is the true objective of the returned support. `None` when the
    /// backend only handles fixed cut sets.
    fn solve_with_oracle(&self, problem: &MasterProblem<'_>, oracle: &mut dyn CutOracle) -> Option<Result<MasterSolution>> {
        let _ = (problem, oracle);
        None
    }
}

/// Source of tangent cuts for lazy cut generation.
pub trait CutOracle {
    /// True objective of a binary point, and a tangent there unless one was
    /// already handed out for it.
    fn at_support(&mut self, support: &[usize]) -> Result<(f64, Option<Cut>)>;
    /// Value of the convex extension at a point of `[0, 1]^m` and its tangent.
    fn at_point(&mut self, z: &[f64]) -> Result<(f64, Cut)>;
}

/// Indices of the `k` largest entries of `pi`, lowest index first on ties.
pub fn top_k_indices(pi: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pi.len()).collect();
    idx.sort_by(|&a, &b| pi[b].total_cmp(&pi[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Largest attainable `pi^T z` with at most `k` ones.
pub fn epsilon_max(pi: &[f64], k: usize) -> f64 {
    let mut sorted = pi.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.iter().take(k).sum()
}

/// True iff some support of size at most `k` reaches stability `epsilon`.
pub fn check_feasible(pi: &[f64], k: usize, epsilon: f64) -> bool {
    epsilon <= 0.0 || epsilon_max(pi, k) >= epsilon - KNAPSACK_SLACK
}
