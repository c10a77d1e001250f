mod common;

use std::collections::HashSet;

use common::*;
use moss_core::rule_gen::{compute_quantile_grid, extract_pool, fit_forest, generate_pool, ForestConfig};
use moss_core::{build_prediction_matrix, Dataset, Error};

fn small_cfg(seed: u64) -> ForestConfig {
    ForestConfig {
        n_trees: 60,
        max_rules: 200,
        seed,
        ..ForestConfig::default()
    }
}

#[test]
fn same_seed_same_pool() {
    let data = friedman(120, 6, 1.0, 1);
    let a = generate_pool(&data, &small_cfg(4)).unwrap();
    let b = generate_pool(&data, &small_cfg(4)).unwrap();
    assert_eq!(a.fingerprint(), b.fingerprint());
    let c = generate_pool(&data, &small_cfg(5)).unwrap();
    assert_ne!(a.fingerprint(), c.fingerprint());
}

#[test]
fn pool_invariants_hold() {
    let data = friedman(150, 6, 1.0, 2);
    let cfg = small_cfg(1);
    let pool = generate_pool(&data, &cfg).unwrap();
    assert!(!pool.is_empty() && pool.len() <= cfg.max_rules);
    let keys: HashSet<_> = pool.rules().iter().map(|r| r.key()).collect();
    assert_eq!(keys.len(), pool.len(), "rules are deduplicated");
    assert!(pool.pi().iter().all(|&p| p > 0.0 && p <= 1.0));
    assert!(pool.pi().windows(2).all(|w| w[0] >= w[1]), "sorted by pi");
    assert!(pool.rules().iter().all(|r| (1..=cfg.max_depth).contains(&r.depth())));
    // pi counts trees, so it is a multiple of 1 / n_trees
    for &p in pool.pi() {
        let count = p * cfg.n_trees as f64;
        assert!((count - count.round()).abs() < 1e-9);
    }
    let pm = build_prediction_matrix(&pool, &data, 1e-3).unwrap();
    assert_eq!((pm.n_rows(), pm.n_cols()), (150, pool.len()));
}

#[test]
fn trees_respect_depth_and_bootstrap_size() {
    let data = friedman(100, 5, 1.0, 3);
    let cfg = ForestConfig {
        n_trees: 20,
        max_depth: 3,
        ..small_cfg(2)
    };
    let forest = fit_forest(&data, &cfg).unwrap();
    assert_eq!(forest.len(), 20);
    for tree in &forest {
        assert!(tree.depth() <= 3);
        assert_eq!(tree.bootstrap.len(), 100);
        assert!(tree.bootstrap.iter().all(|&i| i < 100));
    }
    let pool = extract_pool(&forest, &data, &cfg).unwrap();
    assert!(pool.rules().iter().all(|r| r.depth() <= 3));
}

#[test]
fn thresholds_come_from_the_quantile_grid() {
    let data = friedman(100, 5, 1.0, 6);
    let cfg = small_cfg(3);
    let grid = compute_quantile_grid(&data, cfg.n_quantiles).unwrap();
    let pool = generate_pool(&data, &cfg).unwrap();
    for rule in pool.rules() {
        for split in rule.splits() {
            assert!(grid.thresholds[split.feature].contains(&split.threshold), "{split:?}");
        }
    }
}

#[test]
fn constant_target_is_degenerate() {
    let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i % 7) as f64]).collect();
    let data = Dataset::new(rows, vec![2.5; 30], vec!["a".into(), "b".into()]).unwrap();
    assert!(matches!(generate_pool(&data, &small_cfg(0)), Err(Error::DegenerateData)));
}

#[test]
fn invalid_configs_are_rejected() {
    let data = friedman(50, 5, 1.0, 0);
    for cfg in [
        ForestConfig {
            max_depth: 4,
            ..small_cfg(0)
        },
        ForestConfig {
            n_trees: 0,
            ..small_cfg(0)
        },
        ForestConfig {
            mtry: Some(9),
            ..small_cfg(0)
        },
    ] {
        assert!(matches!(generate_pool(&data, &cfg), Err(Error::InvalidConfig(_))));
    }
}
