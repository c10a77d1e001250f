use std::collections::HashSet;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use moss_core::cd::{fit_target_k, max_single_gain};
use moss_core::evaluation::{run_cv, ExperimentConfig, Method};
use moss_core::milp::{top_k_indices, BranchAndBound};
use moss_core::rule_gen::{generate_pool, ForestConfig};
use moss_core::solver::{
    compute_pareto, epsilon_sequence, solve_fixed_epsilon, stability_select_topk, CutStore, SweepMode,
};
use moss_core::stability::{empirical_stability, similarity_matrix, Metric};
use moss_core::{build_prediction_matrix, json, CandidatePool, Dataset, FittedModel, PredictionMatrix, RuleKey, Solution};
use serde::{Deserialize, Serialize};

use crate::config::FileConfig;
use crate::{Cli, Command, DataArgs, FitMethod, ForestArgs, PoolArgs};

const DEFAULT_EPS_COUNT: usize = 50;

/// Resolved settings: flags over config file over defaults.
struct Settings {
    file: FileConfig,
    seed: u64,
}

impl Settings {
    fn target(&self, data: &DataArgs) -> Result<String> {
        data.target
            .clone()
            .or_else(|| self.file.target.clone())
            .ok_or_else(|| anyhow!("--target is required (or set `target` in the config file)"))
    }

    fn dataset(&self, data: &DataArgs) -> Result<Dataset> {
        let target = self.target(data)?;
        Dataset::from_csv_path(&data.data, &target).with_context(|| format!("reading {}", data.data.display()))
    }

    fn forest(&self, args: &ForestArgs) -> ForestConfig {
        let base = &self.file.forest;
        ForestConfig {
            n_trees: args.trees.unwrap_or(base.n_trees),
            max_depth: args.depth.unwrap_or(base.max_depth),
            mtry: args.mtry.or(base.mtry),
            min_leaf: args.min_leaf.unwrap_or(base.min_leaf),
            n_quantiles: args.quantiles.unwrap_or(base.n_quantiles),
            max_rules: args.max_rules.unwrap_or(base.max_rules),
            response_noise_sigma: args.noise_sigma.unwrap_or(base.response_noise_sigma),
            interior_rules: base.interior_rules,
            seed: self.seed,
        }
    }

    fn k(&self, flag: Option<usize>) -> usize {
        flag.or(self.file.k).unwrap_or(ExperimentConfig::default().k)
    }

    fn gamma(&self, flag: Option<f64>) -> f64 {
        flag.or(self.file.gamma).unwrap_or(ExperimentConfig::default().gamma)
    }

    fn metric(&self, flag: Option<&str>) -> Result<Metric> {
        match flag.map(str::to_string).or_else(|| self.file.metric.clone()) {
            Some(name) => Ok(name.parse()?),
            None => Ok(Metric::default()),
        }
    }
}

/// Data, pool and centered prediction matrix shared by `pareto` and `fit`.
struct Problem {
    data: Dataset,
    pool: CandidatePool,
    pm: PredictionMatrix,
    y: Vec<f64>,
    k: usize,
}

impl Problem {
    fn load(s: &Settings, args: &PoolArgs) -> Result<Self> {
        let data = s.dataset(&args.data)?;
        let pool = match &args.pool {
            Some(path) => read_json::<CandidatePool>(path)?,
            None => generate_pool(&data, &s.forest(&args.forest))?,
        };
        if let Some(bad) = pool.rules().iter().map(|r| r.max_feature()).find(|&f| f >= data.n_features()) {
            bail!("pool uses feature {bad} but the data has {} features", data.n_features());
        }
        let pm = build_prediction_matrix(&pool, &data, s.gamma(args.gamma))?;
        let y = pm.center_target(data.target());
        let k = s.k(args.k);
        log::info!("pool of {} rules, k = {k}, gamma = {}", pool.len(), pm.gamma());
        Ok(Self { data, pool, pm, y, k })
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(io::BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(path) => json::write_file(path, value).with_context(|| format!("writing {}", path.display()))?,
        None => {
            let mut stdout = io::stdout().lock();
            json::to_writer(&mut stdout, value)?;
            writeln!(stdout)?;
        }
    }
    Ok(())
}

fn csv_writer(out: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match out {
        Some(path) => Box::new(File::create(path).with_context(|| format!("creating {}", path.display()))?),
        None => Box::new(io::stdout()),
    };
    Ok(csv::Writer::from_writer(sink))
}

pub fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    if let Some(n) = cli.threads.or(file.threads) {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let s = Settings {
        seed: cli.seed.or(file.seed).unwrap_or(file.forest.seed),
        file,
    };
    match cli.command {
        Command::Rules { data, forest, out } => rules(&s, &data, &forest, out.as_deref()),
        Command::Pareto {
            pool,
            eps_count,
            eps_indices,
            cold,
            out,
            csv,
        } => pareto(&s, &pool, eps_count, eps_indices, cold, out.as_deref(), csv.as_deref()),
        Command::Fit {
            pool,
            method,
            epsilon,
            eps_index,
            lambda2,
            out,
        } => fit(&s, &pool, method, epsilon, eps_index, lambda2, out.as_deref()),
        Command::Cv {
            data,
            forest,
            k,
            gamma,
            folds,
            methods,
            metric,
            timing,
            out,
            rule_sets_dir,
            emit_csv,
        } => {
            let cfg = cv_config(&s, &forest, k, gamma, folds, methods.as_deref(), metric.as_deref(), timing)?;
            cv(&s, &data, &cfg, out.as_deref(), rule_sets_dir.as_deref(), emit_csv.as_deref())
        }
        Command::Stability { metric, files } => stability(&metric, &files),
        Command::Predict { model, data, out } => predict(&model, &data, out.as_deref()),
    }
}

fn rules(s: &Settings, data: &DataArgs, forest: &ForestArgs, out: Option<&Path>) -> Result<()> {
    let data = s.dataset(data)?;
    let pool = generate_pool(&data, &s.forest(forest))?;
    log::info!("extracted {} rules", pool.len());
    write_json(out, &pool)
}

#[derive(Serialize)]
struct FrontierOutput<'a> {
    points: &'a [Solution],
    cuts_generated: usize,
    iterations_per_eps: Vec<usize>,
    nodes_per_eps: Vec<usize>,
    k: usize,
    gamma: f64,
    pool_fingerprint: &'a str,
}

fn pareto(
    s: &Settings,
    args: &PoolArgs,
    eps_count: Option<usize>,
    eps_indices: Option<Vec<usize>>,
    cold: bool,
    out: Option<&Path>,
    csv_out: Option<&Path>,
) -> Result<()> {
    let p = Problem::load(s, args)?;
    let seq = epsilon_sequence(p.pool.pi(), p.k)?;
    let mut indices = match eps_indices {
        Some(ix) => ix,
        None => (0..eps_count.unwrap_or(DEFAULT_EPS_COUNT).min(seq.len())).collect(),
    };
    indices.sort_unstable();
    indices.dedup();
    if let Some(&bad) = indices.iter().find(|&&i| i >= seq.len()) {
        bail!("epsilon index {bad} out of range; the sequence has {} values", seq.len());
    }
    let eps: Vec<f64> = indices.iter().map(|&i| seq.values[i]).collect();
    let mode = if cold { SweepMode::Cold } else { SweepMode::Epm };
    let cfg = s.file.cutting_plane;
    let run = compute_pareto(&p.pool, &p.pm, &p.y, p.k, &eps, mode, &cfg, &BranchAndBound::default())?;
    for (point, st) in run.frontier.points.iter().zip(&run.stats) {
        log::debug!(
            "eps {}: h2 {}, {} master solves, {} new cuts, {} nodes",
            point.epsilon,
            point.h2,
            st.iterations,
            st.new_cuts,
            st.nodes
        );
    }
    write_json(
        out,
        &FrontierOutput {
            points: &run.frontier.points,
            cuts_generated: run.cuts_generated,
            iterations_per_eps: run.stats.iter().map(|st| st.iterations).collect(),
            nodes_per_eps: run.stats.iter().map(|st| st.nodes).collect(),
            k: p.k,
            gamma: p.pm.gamma(),
            pool_fingerprint: &run.frontier.pool_fingerprint,
        },
    )?;
    if let Some(path) = csv_out {
        let mut w = csv_writer(Some(path))?;
        w.write_record(["epsilon", "h1", "h2", "support_size"])?;
        for point in &run.frontier.points {
            w.serialize((point.epsilon, point.h1, point.h2, point.support_size()))?;
        }
        w.flush()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FitOutput<'a> {
    #[serde(flatten)]
    model: &'a FittedModel,
    support: &'a [usize],
}

fn fit(
    s: &Settings,
    args: &PoolArgs,
    method: FitMethod,
    epsilon: Option<f64>,
    eps_index: Option<usize>,
    lambda2: Option<f64>,
    out: Option<&Path>,
) -> Result<()> {
    let p = Problem::load(s, args)?;
    let pi = p.pool.pi();
    let (name, solution) = match method {
        FitMethod::Exact => {
            let eps = match epsilon {
                Some(e) => e,
                None => {
                    let seq = epsilon_sequence(pi, p.k)?;
                    match eps_index {
                        Some(i) if i >= seq.len() => {
                            bail!("epsilon index {i} out of range; the sequence has {} values", seq.len())
                        }
                        Some(i) => seq.values[i],
                        None => seq.high(),
                    }
                }
            };
            let warm = top_k_indices(pi, p.k);
            let (sol, st) = solve_fixed_epsilon(
                pi,
                &p.pm,
                &p.y,
                p.k,
                eps,
                &mut CutStore::new(),
                &warm,
                &s.file.cutting_plane,
                &BranchAndBound::default(),
            )?;
            log::debug!("eps {eps}: {} master solves, {} cuts, {} nodes", st.iterations, st.new_cuts, st.nodes);
            ("exact", sol)
        }
        FitMethod::Cd => {
            let lambda2 = match lambda2.or(s.file.lambda2) {
                Some(v) => v,
                None => {
                    let scale = s.file.lambda2_scale.unwrap_or(ExperimentConfig::default().lambda2_scale);
                    scale * max_single_gain(&p.pm, &p.y)
                }
            };
            let target = fit_target_k(&p.pm, &p.y, pi, lambda2, p.k, &s.file.cd)?;
            log::debug!("heuristic reached {} rules with lambda2 {lambda2}", target.achieved);
            ("cd", target.result.solution)
        }
        FitMethod::Topk => ("topk", stability_select_topk(&p.pool, &p.pm, &p.y, p.k)?),
    };
    let model = FittedModel::from_solution(name, &p.pool, &p.pm, &solution, p.data.feature_names());
    write_json(
        out,
        &FitOutput {
            model: &model,
            support: &solution.support,
        },
    )
}

#[allow(clippy::too_many_arguments)]
fn cv_config(
    s: &Settings,
    forest: &ForestArgs,
    k: Option<usize>,
    gamma: Option<f64>,
    folds: Option<usize>,
    methods: Option<&str>,
    metric: Option<&str>,
    timing: bool,
) -> Result<ExperimentConfig> {
    let defaults = ExperimentConfig::default();
    let methods = match methods {
        Some(list) => list.split(',').map(|m| m.trim().parse::<Method>()).collect::<Result<Vec<_>, _>>()?,
        None => match &s.file.methods {
            Some(list) => list.iter().map(|m| m.parse::<Method>()).collect::<Result<Vec<_>, _>>()?,
            None => defaults.methods.clone(),
        },
    };
    Ok(ExperimentConfig {
        folds: folds.or(s.file.folds).unwrap_or(defaults.folds),
        k: s.k(k),
        gamma: s.gamma(gamma),
        methods,
        forest: s.forest(forest),
        seed: s.seed,
        lambda2_scale: s.file.lambda2_scale.unwrap_or(defaults.lambda2_scale),
        metric: s.metric(metric)?,
        cutting_plane: s.file.cutting_plane,
        record_timing: timing,
        ..defaults
    })
}

fn cv(
    s: &Settings,
    data: &DataArgs,
    cfg: &ExperimentConfig,
    out: Option<&Path>,
    rule_sets_dir: Option<&Path>,
    emit_csv: Option<&Path>,
) -> Result<()> {
    let dataset = s.dataset(data)?;
    let report = run_cv(&dataset, cfg)?;
    if let Some(dir) = rule_sets_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for m in &report.methods {
            for (f, set) in m.fold_rule_sets.iter().enumerate() {
                json::write_file(dir.join(format!("{}_fold{f}.json", m.method)), set)?;
            }
        }
    }
    if let Some(path) = emit_csv {
        let name = data.data.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let mut w = csv_writer(Some(path))?;
        w.write_record(["dataset", "method", "mean_r2", "se_r2", "stability"])?;
        for m in &report.methods {
            w.serialize((&name, m.method.to_string(), m.mean_r2, m.se_r2, m.stability))?;
        }
        w.flush()?;
    }
    write_json(out, &report)
}

/// A rule-set file: either a bare list of rule keys or a fitted model.
#[derive(Deserialize)]
#[serde(untagged)]
enum RuleSetFile {
    Keys(Vec<RuleKey>),
    Model(Box<FittedModel>),
}

fn stability(metric: &str, files: &[PathBuf]) -> Result<()> {
    let metric: Metric = metric.parse()?;
    let sets: Vec<HashSet<RuleKey>> = files
        .iter()
        .map(|path| {
            Ok(match read_json::<RuleSetFile>(path)? {
                RuleSetFile::Keys(keys) => keys.into_iter().collect(),
                RuleSetFile::Model(model) => model.rule_keys().into_iter().collect(),
            })
        })
        .collect::<Result<_>>()?;
    let value = empirical_stability(&sets, metric)?;
    let matrix = similarity_matrix(&sets, metric)?;
    println!("{metric},{value}");
    let mut w = csv_writer(None)?;
    let names: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
    w.write_record(std::iter::once("set").chain(names.iter().map(String::as_str)))?;
    for (name, row) in names.iter().zip(&matrix) {
        w.write_record(std::iter::once(name.clone()).chain(row.iter().map(f64::to_string)))?;
    }
    w.flush()?;
    Ok(())
}

fn predict(model_path: &Path, data: &Path, out: Option<&Path>) -> Result<()> {
    let model: FittedModel = read_json(model_path)?;
    let rows = Dataset::features_from_csv_path(data, &model.feature_names)
        .with_context(|| format!("reading {}", data.display()))?;
    let mut w = csv_writer(out)?;
    w.write_record(["prediction"])?;
    for row in &rows {
        w.serialize(model.predict(row))?;
    }
    w.flush()?;
    Ok(())
}
