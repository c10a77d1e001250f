//! Decision rules, their canonical identity, and the candidate pool.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Side of a threshold. Equality at the threshold belongs to `Le`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Le,
    Gt,
}

impl Direction {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Direction::Le => value <= threshold,
            Direction::Gt => value > threshold,
        }
    }

    pub fn flip(self) -> Direction {
        match self {
            Direction::Le => Direction::Gt,
            Direction::Gt => Direction::Le,
        }
    }
}

/// One axis-aligned condition `x[feature] <= threshold` or `x[feature] > threshold`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    #[serde(rename = "op")]
    pub direction: Direction,
    pub threshold: f64,
}

impl Split {
    pub fn new(feature: usize, direction: Direction, threshold: f64) -> Self {
        // -0.0 and 0.0 must hash identically
        let threshold = if threshold == 0.0 { 0.0 } else { threshold };
        Self {
            feature,
            direction,
            threshold,
        }
    }

    pub fn le(feature: usize, threshold: f64) -> Self {
        Self::new(feature, Direction::Le, threshold)
    }

    pub fn gt(feature: usize, threshold: f64) -> Self {
        Self::new(feature, Direction::Gt, threshold)
    }

    pub fn holds(&self, x: &[f64]) -> bool {
        self.direction.holds(x[self.feature], self.threshold)
    }
}

impl PartialEq for Split {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Split {}

impl Ord for Split {
    fn cmp(&self, other: &Self) -> Ordering {
        self.feature
            .cmp(&other.feature)
            .then_with(|| self.threshold.total_cmp(&other.threshold))
            .then_with(|| self.direction.cmp(&other.direction))
    }
}

impl PartialOrd for Split {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Hash for Split {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.feature.hash(state);
        self.threshold.to_bits().hash(state);
        self.direction.hash(state);
    }
}

/// Sorts by (feature, threshold, direction) and removes exact duplicates.
pub fn canonicalize(splits: &[Split]) -> Result<Vec<Split>> {
    if splits.is_empty() {
        return Err(Error::EmptySplitList);
    }
    let mut out: Vec<Split> = splits.iter().map(|s| Split::new(s.feature, s.direction, s.threshold)).collect();
    out.sort();
    out.dedup();
    for pair in out.windows(2) {
        if pair[0].feature == pair[1].feature && pair[0].threshold.to_bits() == pair[1].threshold.to_bits() {
            return Err(Error::ContradictorySplits {
                feature: pair[0].feature,
                threshold: pair[0].threshold,
            });
        }
    }
    Ok(out)
}

/// Canonical split list; the identity of a rule for stability comparisons.
pub type RuleKey = Vec<Split>;

/// A conjunction of splits with a prediction inside and outside its region.
///
/// Equality and hashing look at the canonical splits only.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawRule")]
pub struct DecisionRule {
    splits: Vec<Split>,
    pub mu_in: f64,
    pub mu_out: f64,
}

#[derive(Deserialize)]
struct RawRule {
    splits: Vec<Split>,
    mu_in: f64,
    mu_out: f64,
}

impl TryFrom<RawRule> for DecisionRule {
    type Error = Error;

    fn try_from(raw: RawRule) -> Result<Self> {
        DecisionRule::new(&raw.splits, raw.mu_in, raw.mu_out)
    }
}

impl DecisionRule {
    pub fn new(splits: &[Split], mu_in: f64, mu_out: f64) -> Result<Self> {
        Ok(Self {
            splits: canonicalize(splits)?,
            mu_in,
            mu_out,
        })
    }

    /// Rule whose leaf values are the means of `y` inside/outside the region
    /// over the rows of `x`. Fails when the region is empty or covers every row.
    pub fn fitted<'a>(splits: &[Split], rows: impl Iterator<Item = (&'a [f64], f64)>) -> Result<Self> {
        let splits = canonicalize(splits)?;
        let (mut sum_in, mut n_in, mut sum_out, mut n_out) = (0.0, 0usize, 0.0, 0usize);
        for (x, y) in rows {
            if splits.iter().all(|s| s.holds(x)) {
                sum_in += y;
                n_in += 1;
            } else {
                sum_out += y;
                n_out += 1;
            }
        }
        if n_in == 0 || n_out == 0 {
            return Err(Error::InvalidConfig("rule region is empty or covers every row".into()));
        }
        Ok(Self {
            splits,
            mu_in: sum_in / n_in as f64,
            mu_out: sum_out / n_out as f64,
        })
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn depth(&self) -> usize {
        self.splits.len()
    }

    pub fn key(&self) -> RuleKey {
        self.splits.clone()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.splits.iter().all(|s| s.holds(x))
    }

    pub fn max_feature(&self) -> usize {
        self.splits.iter().map(|s| s.feature).max().unwrap_or(0)
    }
}

impl PartialEq for DecisionRule {
    fn eq(&self, other: &Self) -> bool {
        self.splits == other.splits
    }
}

impl Eq for DecisionRule {}

impl Hash for DecisionRule {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.splits.hash(state);
    }
}

/// Two-valued rule output: `mu_in` inside the region, `mu_out` elsewhere.
pub fn rule_predict(rule: &DecisionRule, x: &[f64]) -> f64 {
    if rule.contains(x) {
        rule.mu_in
    } else {
        rule.mu_out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolMeta {
    pub n_trees: usize,
    pub max_depth: usize,
    pub n_quantiles: usize,
    pub seed: u64,
}

/// Deduplicated candidate rules with their selection proportions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawPool")]
pub struct CandidatePool {
    rules: Vec<DecisionRule>,
    pi: Vec<f64>,
    meta: PoolMeta,
}

#[derive(Deserialize)]
struct RawPool {
    rules: Vec<DecisionRule>,
    pi: Vec<f64>,
    meta: PoolMeta,
}

impl TryFrom<RawPool> for CandidatePool {
    type Error = Error;

    fn try_from(raw: RawPool) -> Result<Self> {
        CandidatePool::new(raw.rules, raw.pi, raw.meta)
    }
}

impl CandidatePool {
    /// Validates uniqueness and `0 < pi <= 1`, then orders the pool by pi
    /// descending with ties broken by canonical split order.
    pub fn new(rules: Vec<DecisionRule>, pi: Vec<f64>, meta: PoolMeta) -> Result<Self> {
        if rules.len() != pi.len() {
            return Err(Error::DimensionMismatch(format!("{} rules but {} proportions", rules.len(), pi.len())));
        }
        if rules.is_empty() {
            return Err(Error::EmptyPool);
        }
        if let Some(bad) = pi.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::InvalidConfig(format!("selection proportion {bad} outside (0, 1]")));
        }
        let mut seen = HashSet::with_capacity(rules.len());
        for r in &rules {
            if !seen.insert(r.splits()) {
                return Err(Error::InvalidConfig(format!("duplicate rule {:?}", r.splits())));
            }
        }
        let mut entries: Vec<(DecisionRule, f64)> = rules.into_iter().zip(pi).collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.splits().cmp(b.0.splits())));
        let (rules, pi) = entries.into_iter().unzip();
        Ok(Self { rules, pi, meta })
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rules(&self) -> &[DecisionRule] {
        &self.rules
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn meta(&self) -> &PoolMeta {
        &self.meta
    }

    /// Keeps the first `max_rules` entries.
    pub fn truncate(&mut self, max_rules: usize) {
        self.rules.truncate(max_rules);
        self.pi.truncate(max_rules);
    }

    /// Hex SHA-256 of the pool's JSON form.
    pub fn fingerprint(&self) -> String {
        let text = crate::json::to_string(self).expect("pool serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
