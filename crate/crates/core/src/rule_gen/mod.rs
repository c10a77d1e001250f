//! Forest-based candidate rule generation.
//!
//! Trees are grown on bootstrap resamples using a fixed quantile grid of
//! thresholds, so the same split can recur across trees. Every root-to-node
//! path becomes a candidate rule and `pi` counts how many trees contain it.

mod tree;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rules::{canonicalize, CandidatePool, DecisionRule, Direction, PoolMeta, Split};

pub use tree::{Node, Tree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features tried per node; `None` means `ceil(p / 3)`.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub n_quantiles: usize,
    pub max_rules: usize,
    pub response_noise_sigma: f64,
    /// Extract interior paths as well as leaves.
    pub interior_rules: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            max_depth: 2,
            mtry: None,
            min_leaf: 5,
            n_quantiles: 10,
            max_rules: 1000,
            response_noise_sigma: 0.0,
            interior_rules: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or(p.div_ceil(3)).clamp(1, p.max(1))
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_trees == 0 {
            return bad("n_trees must be positive".into());
        }
        if !(1..=3).contains(&self.max_depth) {
            return bad(format!("max_depth must be in 1..=3, got {}", self.max_depth));
        }
        if self.min_leaf == 0 {
            return bad("min_leaf must be positive".into());
        }
        if self.n_quantiles < 2 || self.n_quantiles > data.n_rows() {
            return bad(format!("n_quantiles must be in 2..=n ({}), got {}", data.n_rows(), self.n_quantiles));
        }
        if self.max_rules == 0 {
            return bad("max_rules must be positive".into());
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > data.n_features() {
                return bad(format!("mtry must be in 1..={}, got {m}", data.n_features()));
            }
        }
        if !(self.response_noise_sigma >= 0.0) || !self.response_noise_sigma.is_finite() {
            return bad(format!("response_noise_sigma must be non-negative, got {}", self.response_noise_sigma));
        }
        Ok(())
    }
}

/// Per-feature split thresholds, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileGrid {
    pub thresholds: Vec<Vec<f64>>,
}

/// Threshold `i` of a column is its `ceil(i n / q)`-th order statistic
/// (1-indexed), `i = 1..q-1`. Values equal to the column maximum are dropped
/// since they cannot separate any rows.
pub fn compute_quantile_grid(data: &Dataset, q: usize) -> Result<QuantileGrid> {
    if q < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 quantiles, got {q}")));
    }
    let n = data.n_rows();
    let thresholds = (0..data.n_features())
        .map(|j| {
            let mut col = data.column(j);
            col.sort_by(f64::total_cmp);
            let max = col[n - 1];
            let mut t: Vec<f64> = (1..q).map(|i| col[(i * n).div_ceil(q) - 1]).filter(|&v| v < max).collect();
            t.dedup();
            t
        })
        .collect();
    Ok(QuantileGrid { thresholds })
}

/// Grows `cfg.n_trees` trees in parallel. Tree `t` draws from ChaCha stream
/// `t` of `cfg.seed`, so the result does not depend on thread count.
pub fn fit_forest(data: &Dataset, cfg: &ForestConfig) -> Result<Vec<Tree>> {
    cfg.validate(data)?;
    if tree::target_is_constant(data) {
        return Err(Error::DegenerateData);
    }
    let grid = compute_quantile_grid(data, cfg.n_quantiles)?;
    let mtry = cfg.resolved_mtry(data.n_features());
    let forest = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t as u64);
            tree::fit_tree(data, &grid, cfg, mtry, &mut rng)
        })
        .collect();
    Ok(forest)
}

/// Drops splits implied by a tighter one on the same feature and direction.
/// A single `x > t` is rewritten as its complement `x <= t`, which induces the
/// same partition and hence the same centered prediction column up to sign.
fn simplify_path(path: &[Split]) -> Result<Vec<Split>> {
    let mut tight: BTreeMap<(usize, bool), f64> = BTreeMap::new();
    for s in path {
        let le = s.direction == Direction::Le;
        tight
            .entry((s.feature, le))
            .and_modify(|t| *t = if le { t.min(s.threshold) } else { t.max(s.threshold) })
            .or_insert(s.threshold);
    }
    let mut splits: Vec<Split> = tight
        .into_iter()
        .map(|((f, le), t)| if le { Split::le(f, t) } else { Split::gt(f, t) })
        .collect();
    if let [only] = splits.as_mut_slice() {
        only.direction = Direction::Le;
    }
    canonicalize(&splits)
}

/// Candidate pool from a fitted forest. Leaf values are recomputed on `data`.
pub fn extract_pool(forest: &[Tree], data: &Dataset, cfg: &ForestConfig) -> Result<CandidatePool> {
    if forest.is_empty() {
        return Err(Error::InvalidConfig("forest is empty".into()));
    }
    let mut counts: BTreeMap<Vec<Split>, usize> = BTreeMap::new();
    for tree in forest {
        let mut keys: Vec<Vec<Split>> = tree
            .paths()
            .into_iter()
            .filter(|(id, _)| cfg.interior_rules || tree.is_leaf(*id))
            .map(|(_, path)| simplify_path(&path))
            .collect::<Result<_>>()?;
        keys.sort();
        keys.dedup();
        for key in keys {
            *counts.entry(key).or_default() += 1;
        }
    }

    let mut ranked: Vec<(Vec<Split>, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let b = forest.len() as f64;
    let y = data.target();
    let mut rules = Vec::new();
    let mut pi = Vec::new();
    for (key, count) in ranked {
        if rules.len() == cfg.max_rules {
            break;
        }
        let rows = (0..data.n_rows()).map(|i| (data.row(i), y[i]));
        match DecisionRule::fitted(&key, rows) {
            Ok(rule) => {
                rules.push(rule);
                pi.push(count as f64 / b);
            }
            Err(_) => log::debug!("dropping rule {key:?}: region empty or full on training data"),
        }
    }
    if rules.is_empty() {
        return Err(Error::EmptyPool);
    }
    CandidatePool::new(
        rules,
        pi,
        PoolMeta {
            n_trees: forest.len(),
            max_depth: cfg.max_depth,
            n_quantiles: cfg.n_quantiles,
            seed: cfg.seed,
        },
    )
}

/// `fit_forest` followed by `extract_pool`.
pub fn generate_pool(data: &Dataset, cfg: &ForestConfig) -> Result<CandidatePool> {
    let forest = fit_forest(data, cfg)?;
    extract_pool(&forest, data, cfg)
}
