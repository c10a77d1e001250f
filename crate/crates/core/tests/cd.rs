mod common;

use common::*;
use moss_core::cd::{cd_objective, cd_update, fit_target_k, lambda1_max, max_single_gain, solve_cd, CdConfig};
use moss_core::objective::{fit_weights, h2};
use proptest::prelude::*;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Residual with coordinate `k` removed.
fn partial_residual(w: &[f64], k: usize, inst: &Instance) -> Vec<f64> {
    let mut r = inst.y.clone();
    for (i, &wi) in w.iter().enumerate() {
        if i != k && wi != 0.0 {
            for (ri, v) in r.iter_mut().zip(inst.pm.column(i)) {
                *ri -= wi * v;
            }
        }
    }
    r
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn converged_weights_are_a_fixed_point(seed in any::<u64>(), l1 in 0.0f64..5.0, l2 in 0.0f64..5.0) {
        let inst = planted_instance(&mut rng(seed), 30, 10, 1e-1);
        let cfg = CdConfig { lambda1: l1, lambda2: l2, record_trace: true, ..CdConfig::default() };
        let res = solve_cd(&inst.pm, &inst.y, &inst.pi, &cfg).unwrap();
        prop_assert!(res.converged);
        for k in 0..10 {
            let r = partial_residual(&res.raw_weights, k, &inst);
            let w = cd_update(&r, inst.pm.column(k), inst.pi[k], inst.pm.gamma(), l1, l2);
            prop_assert!((w - res.raw_weights[k]).abs() <= 1e-6 * (1.0 + w.abs()), "coordinate {k} moves");
        }
        for pair in res.trace.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-12 * pair[0].abs());
        }
        prop_assert!((cd_objective(&res.raw_weights, &inst.pm, &inst.y, &inst.pi, &cfg) - res.objective).abs() <= 1e-9 * (1.0 + res.objective.abs()));
    }
}

#[test]
fn unpenalized_descent_reaches_the_full_ridge_fit() {
    let inst = random_instance(&mut rng(4), 40, 6, 0.5);
    let cfg = CdConfig {
        tol: 1e-12,
        max_sweeps: 100_000,
        ..CdConfig::default()
    };
    let res = solve_cd(&inst.pm, &inst.y, &inst.pi, &cfg).unwrap();
    let all: Vec<usize> = (0..6).collect();
    let (_, kernel) = h2(&all, &inst.pm, &inst.y).unwrap();
    let (w, _) = fit_weights(&kernel, &inst.pm);
    for (a, b) in res.raw_weights.iter().zip(&w) {
        assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn large_lambda1_selects_nothing() {
    let inst = planted_instance(&mut rng(2), 30, 8, 1e-1);
    let l1 = lambda1_max(&inst.pm, &inst.y, &inst.pi, 0.0);
    let cfg = CdConfig {
        lambda1: l1 * 1.01,
        ..CdConfig::default()
    };
    let res = solve_cd(&inst.pm, &inst.y, &inst.pi, &cfg).unwrap();
    assert!(res.solution.support.is_empty());
    let gain = max_single_gain(&inst.pm, &inst.y);
    let best = (0..8)
        .map(|i| {
            let c = dot(inst.pm.column(i), &inst.y);
            0.5 * c * c / (dot(inst.pm.column(i), inst.pm.column(i)) + 1.0 / inst.pm.gamma())
        })
        .fold(0.0, f64::max);
    assert!((gain - best).abs() < 1e-12 * best);
}

#[test]
fn target_k_stays_within_budget() {
    let (_, pool, pm, y) = forest_instance(200, 60, 1e-3, 9);
    for k in [1, 5, 12] {
        let fit = fit_target_k(&pm, &y, pool.pi(), 0.0, k, &CdConfig::default()).unwrap();
        assert!(fit.achieved <= k && fit.achieved > 0, "k {k}: {}", fit.achieved);
        assert_eq!(fit.achieved, fit.result.solution.support.len());
    }
}
