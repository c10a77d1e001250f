#![allow(dead_code)]

use moss_core::rule_gen::{generate_pool, ForestConfig};
use moss_core::{build_prediction_matrix, CandidatePool, Dataset, PredictionMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Friedman #1 response on `p >= 5` uniform features plus Gaussian noise.
pub fn friedman(n: usize, p: usize, noise: f64, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, noise).unwrap();
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| r.random::<f64>()).collect()).collect();
    let y = rows
        .iter()
        .map(|x| {
            10.0 * (std::f64::consts::PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
                + normal.sample(&mut r)
        })
        .collect();
    let names = (0..p).map(|j| format!("x{j}")).collect();
    Dataset::new(rows, y, names).unwrap()
}

pub struct Instance {
    pub pm: PredictionMatrix,
    pub y: Vec<f64>,
    pub pi: Vec<f64>,
}

/// Random dense instance: Gaussian columns (centered), Gaussian `y`,
/// `pi` uniform on `(0.05, 1]`.
pub fn random_instance(r: &mut ChaCha8Rng, n: usize, m: usize, gamma: f64) -> Instance {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let cols: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| normal.sample(r)).collect()).collect();
    let pm = PredictionMatrix::from_raw_columns(cols, 0.0, gamma).unwrap();
    let mut y: Vec<f64> = (0..n).map(|_| normal.sample(r)).collect();
    let mean = y.iter().sum::<f64>() / n as f64;
    y.iter_mut().for_each(|v| *v -= mean);
    let pi = (0..m).map(|_| r.random_range(0.05..=1.0)).collect();
    Instance { pm, y, pi }
}

/// Rule-based instance whose `y` has a planted linear signal on a few
/// columns, so supports matter.
pub fn planted_instance(r: &mut ChaCha8Rng, n: usize, m: usize, gamma: f64) -> Instance {
    let mut inst = random_instance(r, n, m, gamma);
    let normal = Normal::new(0.0, 0.5).unwrap();
    let mut y: Vec<f64> = (0..n).map(|_| normal.sample(r)).collect();
    for j in 0..m.min(4) {
        let w = r.random_range(0.5..2.0);
        for (yi, v) in y.iter_mut().zip(inst.pm.column(j)) {
            *yi += w * v;
        }
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    y.iter_mut().for_each(|v| *v -= mean);
    inst.y = y;
    inst
}

/// Forest pool on Friedman data, truncated to `m` rules.
pub fn forest_instance(n: usize, m: usize, gamma: f64, seed: u64) -> (Dataset, CandidatePool, PredictionMatrix, Vec<f64>) {
    let data = friedman(n, 10, 1.0, seed);
    let cfg = ForestConfig {
        n_trees: 500,
        max_rules: m,
        seed,
        ..ForestConfig::default()
    };
    let pool = generate_pool(&data, &cfg).unwrap();
    assert_eq!(pool.len(), m, "forest produced fewer than {m} rules");
    let pm = build_prediction_matrix(&pool, &data, gamma).unwrap();
    let y = pm.center_target(data.target());
    (data, pool, pm, y)
}

/// Minimizes `1/2 ||y - M_K w||^2 + 1/(2 gamma) ||w||^2` through LU on the
/// normal equations, then evaluates the objective term by term.
pub fn ridge_oracle(support: &[usize], pm: &PredictionMatrix, y: &[f64]) -> (f64, Vec<f64>) {
    let n = pm.n_rows();
    let k = support.len();
    let yv = DVector::from_column_slice(y);
    if k == 0 {
        return (0.5 * yv.norm_squared(), Vec::new());
    }
    let mk = DMatrix::from_fn(n, k, |i, j| pm.column(support[j])[i]);
    let lhs = mk.transpose() * &mk + DMatrix::identity(k, k) / pm.gamma();
    let rhs = mk.transpose() * &yv;
    let w = lhs.lu().solve(&rhs).expect("normal equations are SPD");
    let resid = &yv - &mk * &w;
    let value = 0.5 * resid.norm_squared() + 0.5 / pm.gamma() * w.norm_squared();
    (value, w.as_slice().to_vec())
}

/// `1/2 y^T (I + gamma sum_i z_i M_i M_i^T)^{-1} y` for fractional `z`, by a
/// dense n x n solve.
pub fn relaxed_h2(z: &[f64], pm: &PredictionMatrix, y: &[f64]) -> f64 {
    let yv = DVector::from_column_slice(y);
    let x = relaxed_system(z, pm).lu().solve(&yv).unwrap();
    0.5 * yv.dot(&x)
}

fn relaxed_system(z: &[f64], pm: &PredictionMatrix) -> DMatrix<f64> {
    let n = pm.n_rows();
    let mut a = DMatrix::<f64>::identity(n, n);
    for (i, &zi) in z.iter().enumerate() {
        if zi != 0.0 {
            let c = DVector::from_column_slice(pm.column(i));
            a += pm.gamma() * zi * &c * c.transpose();
        }
    }
    a
}

/// Central difference `(f(z + h e_i) - f(z - h e_i)) / 2h` of `relaxed_h2`,
/// with the numerator formed as `-h gamma (y^T A+^{-1} M_i)(M_i^T A-^{-1} y)`
/// so it carries no cancellation error.
pub fn relaxed_h2_central_diff(z: &[f64], i: usize, h: f64, pm: &PredictionMatrix, y: &[f64]) -> f64 {
    let (mut zp, mut zm) = (z.to_vec(), z.to_vec());
    zp[i] += h;
    zm[i] -= h;
    let yv = DVector::from_column_slice(y);
    let c = DVector::from_column_slice(pm.column(i));
    let xp = relaxed_system(&zp, pm).lu().solve(&yv).unwrap();
    let xm = relaxed_system(&zm, pm).lu().solve(&yv).unwrap();
    -h * pm.gamma() * xp.dot(&c) * c.dot(&xm) / (2.0 * h)
}

/// Every subset of `0..m` with at most `k` elements.
pub fn subsets_up_to(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..k {
        let mut next = Vec::new();
        for s in &frontier {
            let start = s.last().map_or(0, |&l: &usize| l + 1);
            for i in start..m {
                let mut t = s.clone();
                t.push(i);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Minimum of `H2` (through the ridge oracle) over feasible supports and
/// every support attaining it within `tie`.
pub fn brute_force_h2(pi: &[f64], pm: &PredictionMatrix, y: &[f64], k: usize, epsilon: f64, tie: f64) -> (f64, Vec<Vec<usize>>) {
    let feasible: Vec<(f64, Vec<usize>)> = subsets_up_to(pi.len(), k)
        .into_iter()
        .filter(|s| s.iter().map(|&i| pi[i]).sum::<f64>() >= epsilon - 1e-12)
        .map(|s| (ridge_oracle(&s, pm, y).0, s))
        .collect();
    let best = feasible.iter().map(|(v, _)| *v).fold(f64::INFINITY, f64::min);
    let argmin = feasible.into_iter().filter(|(v, _)| *v <= best + tie).map(|(_, s)| s).collect();
    (best, argmin)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
