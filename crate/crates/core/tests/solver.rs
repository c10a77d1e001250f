mod common;

use common::*;
use moss_core::milp::{epsilon_max, top_k_indices, BranchAndBound, Cut, MasterProblem, MasterSolver};
use moss_core::objective::{grad_h2, h2};
use moss_core::solver::{
    compute_pareto, epsilon_sequence, solve_fixed_epsilon, stability_select_topk, CutStore, CuttingPlaneConfig, SweepMode,
};
use moss_core::Error;
use proptest::prelude::*;
use rand::Rng;

fn solve(inst: &Instance, k: usize, eps: f64) -> moss_core::Result<moss_core::Solution> {
    let warm = top_k_indices(&inst.pi, k);
    solve_fixed_epsilon(
        &inst.pi,
        &inst.pm,
        &inst.y,
        k,
        eps,
        &mut CutStore::new(),
        &warm,
        &CuttingPlaneConfig::default(),
        &BranchAndBound::default(),
    )
    .map(|(s, _)| s)
}

fn tangent(inst: &Instance, support: &[usize]) -> Cut {
    let (value, kernel) = h2(support, &inst.pm, &inst.y).unwrap();
    let a = grad_h2(&kernel, &inst.pm);
    let b = value - support.iter().map(|&i| a[i]).sum::<f64>();
    Cut {
        a,
        b,
        origin_support: support.to_vec(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn master_matches_enumeration(seed in any::<u64>(), m in 3usize..10, n_cuts in 1usize..5, k in 1usize..4) {
        let mut r = rng(seed);
        let cuts: Vec<Cut> = (0..n_cuts)
            .map(|_| Cut {
                a: (0..m).map(|_| r.random_range(-2.0..1.0)).collect(),
                b: r.random_range(-1.0..3.0),
                origin_support: vec![],
            })
            .collect();
        let pi: Vec<f64> = (0..m).map(|_| r.random_range(0.05..1.0)).collect();
        let k = k.min(m);
        let eps = r.random_range(0.0..epsilon_max(&pi, k));
        let mp = MasterProblem { cuts: &cuts, pi: &pi, epsilon: eps, k, incumbent: None };
        let sol = BranchAndBound::default().solve(&mp).unwrap();
        let best = subsets_up_to(m, k)
            .into_iter()
            .filter(|s| mp.is_feasible(s))
            .map(|s| mp.model_value(&s))
            .fold(f64::INFINITY, f64::min);
        prop_assert!((sol.nu - best).abs() <= 1e-9 * (1.0 + best.abs()), "{} vs {best}", sol.nu);
        prop_assert!(mp.is_feasible(&sol.support));
    }
}

#[test]
fn exact_solver_matches_brute_force() {
    let mut r = rng(21);
    for _ in 0..30 {
        let m = r.random_range(4..10);
        let k = r.random_range(1..4);
        let gamma = 10f64.powf(r.random_range(-3.0..-1.0));
        let inst = planted_instance(&mut r, 30, m, gamma);
        let seq = epsilon_sequence(&inst.pi, k).unwrap();
        for eps in [seq.epsilon_max(), seq.values[r.random_range(0..seq.len())], 0.0] {
            let sol = solve(&inst, k, eps).unwrap();
            let (best, argmin) = brute_force_h2(&inst.pi, &inst.pm, &inst.y, k, eps, 1e-9);
            assert!((sol.h2 - best).abs() < 1e-7, "eps {eps}: {} vs {best}", sol.h2);
            assert!(argmin.contains(&sol.support), "{:?} not in {argmin:?}", sol.support);
            assert!(sol.h1 >= eps - 1e-12 && sol.support.len() <= k);
        }
    }
}

#[test]
fn lazy_and_fixed_cut_masters_agree() {
    let mut r = rng(5);
    for _ in 0..20 {
        let inst = planted_instance(&mut r, 30, 9, 1e-2);
        let k = 3;
        let eps = epsilon_max(&inst.pi, k) * 0.6;
        // fixed cuts at every feasible support make the master exact
        let cuts: Vec<Cut> = subsets_up_to(9, k).iter().map(|s| tangent(&inst, s)).collect();
        let mp = MasterProblem {
            cuts: &cuts,
            pi: &inst.pi,
            epsilon: eps,
            k,
            incumbent: None,
        };
        let full = BranchAndBound::default().solve(&mp).unwrap();
        let lazy = solve(&inst, k, eps).unwrap();
        assert!((full.nu - lazy.h2).abs() < 1e-8 * (1.0 + lazy.h2), "{} vs {}", full.nu, lazy.h2);
    }
}

#[test]
fn infeasible_epsilon_is_reported() {
    let inst = random_instance(&mut rng(1), 20, 6, 1e-2);
    let emax = epsilon_max(&inst.pi, 2);
    match solve(&inst, 2, emax + 1e-6) {
        Err(Error::Infeasible { epsilon_max, .. }) => assert_eq!(epsilon_max, emax),
        other => panic!("{other:?}"),
    }
    assert!(matches!(solve(&inst, 7, 0.0), Err(Error::KTooLarge { k: 7, m: 6 })));
    let bad_warm = solve_fixed_epsilon(
        &inst.pi,
        &inst.pm,
        &inst.y,
        2,
        emax,
        &mut CutStore::new(),
        &[0, 1, 2],
        &CuttingPlaneConfig::default(),
        &BranchAndBound::default(),
    );
    assert!(matches!(bad_warm, Err(Error::InvalidConfig(_))));
}

#[test]
fn epsilon_sequence_is_strictly_decreasing_window_sums() {
    let pi = [0.9, 0.2, 0.7, 0.7, 0.4];
    let seq = epsilon_sequence(&pi, 2).unwrap();
    let expected = [1.6, 1.4, 1.1, 0.6];
    assert_eq!(seq.len(), expected.len());
    for (a, b) in seq.values.iter().zip(expected) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(seq.clamped(100), seq.values[3]);
}

#[test]
fn sweep_modes_agree_and_reuse_cuts() {
    let (_, pool, pm, y) = forest_instance(200, 40, 1e-3, 3);
    let k = 5;
    let seq = epsilon_sequence(pool.pi(), k).unwrap();
    let eps: Vec<f64> = seq.values.iter().take(8).copied().collect();
    let cfg = CuttingPlaneConfig::default();
    let bnb = BranchAndBound::default();
    let epm = compute_pareto(&pool, &pm, &y, k, &eps, SweepMode::Epm, &cfg, &bnb).unwrap();
    let cold = compute_pareto(&pool, &pm, &y, k, &eps, SweepMode::Cold, &cfg, &bnb).unwrap();
    for (a, b) in epm.frontier.points.iter().zip(&cold.frontier.points) {
        assert!((a.h2 - b.h2).abs() <= 1e-7 * (1.0 + b.h2.abs()));
    }
    epm.frontier.check_invariants(1e-9).unwrap();
    assert_eq!(epm.frontier.pool_fingerprint, pool.fingerprint());

    let topk = stability_select_topk(&pool, &pm, &y, k).unwrap();
    assert!((topk.h1 - seq.epsilon_max()).abs() < 1e-12);
    assert!(epm.frontier.points[0].h2 <= topk.h2 + 1e-9);
}
