mod common;

use common::*;
use moss_core::evaluation::{fold_assignment, r_squared, run_cv, ExperimentConfig, Method};
use moss_core::rule_gen::ForestConfig;
use moss_core::Error;

fn quick_cfg(methods: Vec<Method>) -> ExperimentConfig {
    ExperimentConfig {
        folds: 4,
        k: 4,
        methods,
        forest: ForestConfig {
            n_trees: 40,
            max_rules: 40,
            ..ForestConfig::default()
        },
        seed: 9,
        ..ExperimentConfig::default()
    }
}

#[test]
fn folds_partition_the_rows() {
    for (n, k) in [(10, 3), (100, 10), (7, 7)] {
        let folds = fold_assignment(n, k, 5);
        assert_eq!(folds.len(), k);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
    assert_eq!(fold_assignment(50, 5, 1), fold_assignment(50, 5, 1));
    assert_ne!(fold_assignment(50, 5, 1), fold_assignment(50, 5, 2));
}

#[test]
fn r_squared_examples() {
    assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
    assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
    assert!(matches!(r_squared(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::ConstantTarget)));
}

#[test]
fn cross_validation_is_deterministic() {
    let data = friedman(120, 6, 1.0, 2);
    let cfg = quick_cfg(vec![Method::Topk, Method::MossH, Method::MossL]);
    let a = run_cv(&data, &cfg).unwrap();
    let b = run_cv(&data, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.methods.len(), 3);
    for report in &a.methods {
        assert_eq!(report.fold_r2.len(), 4);
        assert!(report.fold_rule_sets.iter().all(|s| s.len() <= 4));
    }
}

#[test]
fn topk_selects_the_most_stable_rules() {
    let data = friedman(120, 6, 1.0, 3);
    let report = run_cv(&data, &quick_cfg(vec![Method::Topk, Method::MossH])).unwrap();
    let topk = report.method(Method::Topk).unwrap();
    assert!(topk.fold_rule_sets.iter().all(|s| s.len() == 4));
    assert!(topk.stability.is_some_and(|s| (0.0..=1.0).contains(&s)));
}

#[test]
fn held_out_targets_do_not_reach_training() {
    let data = friedman(100, 6, 1.0, 4);
    let cfg = quick_cfg(vec![Method::MossH, Method::MossL, Method::Topk]);
    let base = run_cv(&data, &cfg).unwrap();
    let test0 = &fold_assignment(data.n_rows(), cfg.folds, cfg.seed)[0];
    let mut y = data.target().to_vec();
    for &i in test0 {
        y[i] += 1000.0;
    }
    let shifted = run_cv(&data.with_target(y).unwrap(), &cfg).unwrap();
    for (a, b) in base.methods.iter().zip(&shifted.methods) {
        assert_eq!(a.fold_rule_sets[0], b.fold_rule_sets[0], "{}", a.method);
        assert_ne!(a.fold_r2[0], b.fold_r2[0]);
    }
}

#[test]
fn bad_configs_are_rejected() {
    let data = friedman(30, 5, 1.0, 1);
    let mut cfg = quick_cfg(vec![Method::Topk]);
    cfg.folds = 1;
    assert!(matches!(run_cv(&data, &cfg), Err(Error::InvalidConfig(_))));
    cfg.folds = 3;
    cfg.methods.clear();
    assert!(matches!(run_cv(&data, &cfg), Err(Error::InvalidConfig(_))));
    assert_eq!("moss_m".parse::<Method>().unwrap(), Method::MossM);
}
