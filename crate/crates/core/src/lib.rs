//! Sparse, stable decision-rule sets via the stability/accuracy Pareto frontier.
//!
//! The pipeline: [`rule_gen`] grows a bootstrap forest and distills a
//! [`CandidatePool`] with selection proportions `pi`; [`build_prediction_matrix`]
//! turns the pool into centered rule predictions; [`solver`] traces the
//! frontier between `H1` (summed `pi`) and `H2` (ridge loss) with a
//! cutting-plane method over the [`milp`] master; [`cd`] is the fast
//! heuristic; [`stability`] and [`evaluation`] measure the results.

pub mod cd;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod json;
pub mod milp;
pub mod objective;
pub mod prediction;
pub mod rule_gen;
pub mod rules;
pub mod solution;
pub mod solver;
pub mod stability;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use prediction::{build_prediction_matrix, PredictionMatrix};
pub use rules::{canonicalize, rule_predict, CandidatePool, DecisionRule, Direction, PoolMeta, RuleKey, Split};
pub use solution::{FittedModel, ParetoFrontier, Solution};
