//! K-fold cross-validation of the rule-set methods.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cd::{fit_target_k, max_single_gain, CdConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::milp::BranchAndBound;
use crate::prediction::build_prediction_matrix;
use crate::rule_gen::{generate_pool, ForestConfig};
use crate::rules::RuleKey;
use crate::solution::FittedModel;
use crate::solver::{compute_pareto, epsilon_sequence, stability_select_topk, CuttingPlaneConfig, SweepMode};
use crate::stability::{empirical_stability, Metric};

pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() || y_true.len() < 2 {
        return Err(Error::DimensionMismatch(format!(
            "r_squared needs two equal-length vectors of length >= 2, got {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let sst: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::ConstantTarget);
    }
    let sse: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

/// Test-row indices per fold: a seeded shuffle cut into contiguous blocks
/// whose sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        let mut block = order[start..start + len].to_vec();
        block.sort_unstable();
        out.push(block);
        start += len;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Exact solve at the 3rd epsilon.
    MossH,
    /// Exact solve at the 40th epsilon.
    MossM,
    /// Coordinate-descent heuristic.
    MossL,
    /// Top-k by selection proportion.
    Topk,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::MossH, Method::MossM, Method::MossL, Method::Topk];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::MossH => "moss_h",
            Method::MossM => "moss_m",
            Method::MossL => "moss_l",
            Method::Topk => "topk",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moss_h" => Ok(Method::MossH),
            "moss_m" => Ok(Method::MossM),
            "moss_l" => Ok(Method::MossL),
            "topk" => Ok(Method::Topk),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub folds: usize,
    pub k: usize,
    pub gamma: f64,
    pub methods: Vec<Method>,
    pub forest: ForestConfig,
    pub gamma_grid: Option<Vec<f64>>,
    pub k_grid: Option<Vec<usize>>,
    pub seed: u64,
    /// Heuristic `lambda2` as a multiple of the largest single-rule gain.
    pub lambda2_scale: f64,
    pub metric: Metric,
    pub cutting_plane: CuttingPlaneConfig,
    /// Wall-clock timings make reports non-reproducible, so they are opt-in.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            k: 15,
            gamma: 1e-3,
            methods: Method::ALL.to_vec(),
            forest: ForestConfig::default(),
            gamma_grid: None,
            k_grid: None,
            seed: 0,
            lambda2_scale: 0.5,
            metric: Metric::Dsc,
            cutting_plane: CuttingPlaneConfig::default(),
            record_timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub mean_r2: f64,
    pub se_r2: f64,
    /// `None` when some fold selected no rules.
    pub stability: Option<f64>,
    pub fold_r2: Vec<f64>,
    pub fold_rule_sets: Vec<Vec<RuleKey>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub folds: usize,
    pub k: usize,
    pub gamma: f64,
    pub seed: u64,
    pub metric: Metric,
    pub methods: Vec<MethodReport>,
}

impl ExperimentReport {
    pub fn method(&self, method: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == method)
    }
}

struct FoldOutcome {
    r2: f64,
    rules: Vec<RuleKey>,
    seconds: f64,
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(fold as u64 + 1)
}

fn run_fold(data: &Dataset, test: &[usize], fold: usize, cfg: &ExperimentConfig) -> Result<Vec<FoldOutcome>> {
    let in_test: HashSet<usize> = test.iter().copied().collect();
    let train_rows: Vec<usize> = (0..data.n_rows()).filter(|i| !in_test.contains(i)).collect();
    let train = data.subset(&train_rows)?;
    let forest = ForestConfig {
        seed: fold_seed(cfg.seed, fold),
        ..cfg.forest.clone()
    };
    let pool = generate_pool(&train, &forest)?;
    let pm = build_prediction_matrix(&pool, &train, cfg.gamma)?;
    let y = pm.center_target(train.target());
    let k = cfg.k.min(pool.len());
    let names = data.feature_names();
    let y_test: Vec<f64> = test.iter().map(|&i| data.target()[i]).collect();

    let mut exact = Vec::new();
    let mut eps = Vec::new();
    if cfg.methods.iter().any(|m| matches!(m, Method::MossH | Method::MossM)) {
        let seq = epsilon_sequence(pool.pi(), k)?;
        eps.push(seq.high());
        if seq.medium() < seq.high() {
            eps.push(seq.medium());
        }
        let start = Instant::now();
        let run = compute_pareto(&pool, &pm, &y, k, &eps, SweepMode::Epm, &cfg.cutting_plane, &BranchAndBound::default())?;
        exact = run.frontier.points;
        log::info!("fold {fold}: exact sweep over {} epsilons in {:.3}s", eps.len(), start.elapsed().as_secs_f64());
    }

    let mut out = Vec::new();
    for &method in &cfg.methods {
        let start = Instant::now();
        let solution = match method {
            Method::MossH => exact[0].clone(),
            Method::MossM => exact.last().expect("sweep is non-empty").clone(),
            Method::Topk => stability_select_topk(&pool, &pm, &y, k)?,
            Method::MossL => {
                let lambda2 = cfg.lambda2_scale * max_single_gain(&pm, &y);
                fit_target_k(&pm, &y, pool.pi(), lambda2, k, &CdConfig::default())?.result.solution
            }
        };
        let seconds = start.elapsed().as_secs_f64();
        let model = FittedModel::from_solution(&method.to_string(), &pool, &pm, &solution, names);
        let pred: Vec<f64> = test.iter().map(|&i| model.predict(data.row(i))).collect();
        out.push(FoldOutcome {
            r2: r_squared(&y_test, &pred)?,
            rules: model.rule_keys(),
            seconds,
        });
    }
    Ok(out)
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt() / n.sqrt())
}

pub fn run_cv(data: &Dataset, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.folds < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {}", cfg.folds)));
    }
    if data.n_rows() < cfg.folds {
        return Err(Error::InvalidConfig(format!("{} rows cannot fill {} folds", data.n_rows(), cfg.folds)));
    }
    if cfg.methods.is_empty() {
        return Err(Error::InvalidConfig("no methods requested".into()));
    }
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let cfg = ExperimentConfig {
        methods,
        ..cfg.clone()
    };
    let assignment = fold_assignment(data.n_rows(), cfg.folds, cfg.seed);
    let per_fold: Vec<Vec<FoldOutcome>> = assignment
        .par_iter()
        .enumerate()
        .map(|(f, test)| run_fold(data, test, f, &cfg).map_err(|e| e.in_fold(f)))
        .collect::<Result<_>>()?;

    let mut reports = Vec::new();
    for (mi, &method) in cfg.methods.iter().enumerate() {
        let fold_r2: Vec<f64> = per_fold.iter().map(|f| f[mi].r2).collect();
        let fold_rule_sets: Vec<Vec<RuleKey>> = per_fold.iter().map(|f| f[mi].rules.clone()).collect();
        let sets: Vec<HashSet<RuleKey>> = fold_rule_sets.iter().map(|s| s.iter().cloned().collect()).collect();
        let stability = match empirical_stability(&sets, cfg.metric) {
            Ok(v) => Some(v),
            Err(Error::EmptyRuleSet) => {
                log::warn!("{method}: a fold selected no rules; stability undefined");
                None
            }
            Err(e) => return Err(e),
        };
        let (mean_r2, se_r2) = mean_and_se(&fold_r2);
        reports.push(MethodReport {
            method,
            mean_r2,
            se_r2,
            stability,
            fold_r2,
            fold_rule_sets,
            seconds: cfg.record_timing.then(|| per_fold.iter().map(|f| f[mi].seconds).sum()),
        });
    }
    Ok(ExperimentReport {
        folds: cfg.folds,
        k: cfg.k,
        gamma: cfg.gamma,
        seed: cfg.seed,
        metric: cfg.metric,
        methods: reports,
    })
}

/// One cross-validation run per `(gamma, k)` pair of the configured grids;
/// a missing grid falls back to the scalar setting.
pub fn run_sensitivity(data: &Dataset, cfg: &ExperimentConfig) -> Result<Vec<ExperimentReport>> {
    let gammas = cfg.gamma_grid.clone().unwrap_or_else(|| vec![cfg.gamma]);
    let ks = cfg.k_grid.clone().unwrap_or_else(|| vec![cfg.k]);
    if gammas.is_empty() || ks.is_empty() || (cfg.gamma_grid.is_none() && cfg.k_grid.is_none()) {
        return Err(Error::InvalidConfig("sensitivity mode needs a non-empty gamma or k grid".into()));
    }
    let mut out = Vec::with_capacity(gammas.len() * ks.len());
    for &gamma in &gammas {
        for &k in &ks {
            let run = ExperimentConfig {
                gamma,
                k,
                ..cfg.clone()
            };
            out.push(run_cv(data, &run)?);
        }
    }
    Ok(out)
}
