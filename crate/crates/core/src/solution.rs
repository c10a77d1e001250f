use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prediction::PredictionMatrix;
use crate::rules::{rule_predict, CandidatePool, DecisionRule, RuleKey};

/// One selected rule set: support indices into the pool, ridge weights, and
/// the two objective values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub support: Vec<usize>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub h1: f64,
    pub h2: f64,
    /// Stability level the solution was solved under; 0 for heuristic fits.
    pub epsilon: f64,
}

impl Solution {
    pub fn support_size(&self) -> usize {
        self.support.len()
    }

    pub fn rule_keys(&self, pool: &CandidatePool) -> Vec<RuleKey> {
        self.support.iter().map(|&i| pool.rules()[i].key()).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParetoFrontier {
    pub points: Vec<Solution>,
    pub pool_fingerprint: String,
}

impl ParetoFrontier {
    /// Strictly decreasing epsilon, non-increasing h2, `h1 >= epsilon`.
    pub fn check_invariants(&self, slack: f64) -> Result<()> {
        for w in self.points.windows(2) {
            if !(w[1].epsilon < w[0].epsilon) {
                return Err(Error::InvalidConfig("frontier epsilons not strictly decreasing".into()));
            }
            if w[1].h2 > w[0].h2 + slack {
                return Err(Error::InvalidConfig(format!(
                    "h2 increased from {} to {} as epsilon decreased",
                    w[0].h2, w[1].h2
                )));
            }
        }
        if let Some(p) = self.points.iter().find(|p| p.h1 < p.epsilon - slack) {
            return Err(Error::InvalidConfig(format!("h1 {} below epsilon {}", p.h1, p.epsilon)));
        }
        Ok(())
    }
}

/// Self-contained predictor: selected rules, their weights and the training
/// centering statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub method: String,
    pub feature_names: Vec<String>,
    pub rules: Vec<DecisionRule>,
    pub weights: Vec<f64>,
    pub column_means: Vec<f64>,
    pub intercept: f64,
    pub gamma: f64,
    pub h1: f64,
    pub h2: f64,
    pub epsilon: f64,
}

impl FittedModel {
    pub fn from_solution(
        method: &str,
        pool: &CandidatePool,
        pm: &PredictionMatrix,
        solution: &Solution,
        feature_names: &[String],
    ) -> Self {
        Self {
            method: method.to_string(),
            feature_names: feature_names.to_vec(),
            rules: solution.support.iter().map(|&i| pool.rules()[i].clone()).collect(),
            weights: solution.weights.clone(),
            column_means: solution.support.iter().map(|&i| pm.column_means()[i]).collect(),
            intercept: solution.intercept,
            gamma: pm.gamma(),
            h1: solution.h1,
            h2: solution.h2,
            epsilon: solution.epsilon,
        }
    }

    /// `intercept + sum_i w_i (f_i(x) - column_mean_i)`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut acc = self.intercept;
        for ((rule, w), mean) in self.rules.iter().zip(&self.weights).zip(&self.column_means) {
            acc += w * (rule_predict(rule, x) - mean);
        }
        acc
    }

    pub fn rule_keys(&self) -> Vec<RuleKey> {
        self.rules.iter().map(DecisionRule::key).collect()
    }
}
