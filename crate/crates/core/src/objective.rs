//! Stability objective `H1`, ridge-regularized loss `H2` and its gradient.
//!
//! `H2(z) = 1/2 y^T (I + gamma * sum_i z_i M_i M_i^T)^{-1} y`. With `K` the
//! selected columns, the Woodbury identity gives
//! `A^{-1} = I - M_K B^{-1} M_K^T` where `B = I/gamma + M_K^T M_K` is only
//! `|K| x |K|`, so every evaluation factors a small SPD matrix.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::prediction::{dot, PredictionMatrix};
use crate::solution::Solution;

/// Sum of selection proportions over `support`.
pub fn h1(support: &[usize], pi: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for &i in support {
        total += *pi.get(i).ok_or(Error::IndexOutOfRange { index: i, len: pi.len() })?;
    }
    Ok(total)
}

/// Factored ridge system for one support, reused for the gradient and weights.
#[derive(Debug, Clone)]
pub struct RidgeKernel {
    support: Vec<usize>,
    chol: Option<Cholesky<f64, Dyn>>,
    c: Vec<f64>,
    /// `B^{-1} c`, i.e. the ridge weights on the support.
    coef: Vec<f64>,
    /// `A^{-1} y = y - M_K B^{-1} c`.
    residual: Vec<f64>,
    h2: f64,
}

impl RidgeKernel {
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn h2(&self) -> f64 {
        self.h2
    }

    /// `M_K^T y`.
    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// Solves `B x = rhs` with the cached factor.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match &self.chol {
            Some(ch) => ch.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec(),
            None => Vec::new(),
        }
    }
}

fn validate_support(support: &[usize], m: usize) -> Result<Vec<usize>> {
    let mut s = support.to_vec();
    s.sort_unstable();
    s.dedup();
    if let Some(&bad) = s.iter().find(|&&i| i >= m) {
        return Err(Error::IndexOutOfRange { index: bad, len: m });
    }
    Ok(s)
}

/// Evaluates `H2` on `support` for the centered response `y`.
pub fn h2(support: &[usize], pm: &PredictionMatrix, y: &[f64]) -> Result<(f64, RidgeKernel)> {
    if y.len() != pm.n_rows() {
        return Err(Error::DimensionMismatch(format!("y has {} rows, M has {}", y.len(), pm.n_rows())));
    }
    let support = validate_support(support, pm.n_cols())?;
    let yty = dot(y, y);
    let k = support.len();
    if k == 0 {
        let h2 = 0.5 * yty;
        return Ok((
            h2,
            RidgeKernel {
                support,
                chol: None,
                c: Vec::new(),
                coef: Vec::new(),
                residual: y.to_vec(),
                h2,
            },
        ));
    }

    let cols: Vec<&[f64]> = support.iter().map(|&i| pm.column(i)).collect();
    let inv_gamma = 1.0 / pm.gamma();
    let mut b = DMatrix::<f64>::zeros(k, k);
    for a in 0..k {
        for bcol in 0..=a {
            let v = dot(cols[a], cols[bcol]);
            b[(a, bcol)] = v;
            b[(bcol, a)] = v;
        }
        b[(a, a)] += inv_gamma;
    }
    let c: Vec<f64> = cols.iter().map(|col| dot(col, y)).collect();

    let chol = match Cholesky::new(b.clone()) {
        Some(ch) => ch,
        None => {
            let jitter = 1e-10 * b.trace() / k as f64;
            log::warn!("ridge kernel Cholesky failed for |K|={k}; retrying with jitter {jitter:e}");
            let mut bj = b;
            for d in 0..k {
                bj[(d, d)] += jitter;
            }
            Cholesky::new(bj).ok_or(Error::CholeskyFailure { size: k })?
        }
    };
    let coef = chol.solve(&DVector::from_column_slice(&c)).as_slice().to_vec();
    let h2 = 0.5 * (yty - dot(&c, &coef));

    let mut residual = y.to_vec();
    for (col, w) in cols.iter().zip(&coef) {
        for (r, v) in residual.iter_mut().zip(col.iter()) {
            *r -= w * v;
        }
    }

    Ok((
        h2,
        RidgeKernel {
            support,
            chol: Some(chol),
            c,
            coef,
            residual,
            h2,
        },
    ))
}

/// Full gradient of `H2` over the continuous relaxation at the kernel's
/// support: `g_i = -(gamma/2) (M_i^T A^{-1} y)^2`.
pub fn grad_h2(kernel: &RidgeKernel, pm: &PredictionMatrix) -> Vec<f64> {
    let half_gamma = 0.5 * pm.gamma();
    (0..pm.n_cols())
        .map(|i| {
            let s = dot(pm.column(i), &kernel.residual);
            -half_gamma * s * s
        })
        .collect()
}

/// Entries of a fractional point below this are treated as zero.
const RELAXED_ZERO: f64 = 1e-9;

/// Value and gradient of the convex continuous extension of `H2` at
/// `z in [0, 1]^m`, through `B = diag(1 / (gamma z_S)) + M_S^T M_S` on the
/// positive entries `S`. Entries below `1e-9` are set to zero first, so the
/// result is exact at that rounded point, which is returned too.
pub fn relaxed_h2(z: &[f64], pm: &PredictionMatrix, y: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if z.len() != pm.n_cols() || y.len() != pm.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "z has {} entries and y {} rows for a {} x {} matrix",
            z.len(),
            y.len(),
            pm.n_rows(),
            pm.n_cols()
        )));
    }
    let point: Vec<f64> = z.iter().map(|&v| if v < RELAXED_ZERO { 0.0 } else { v.min(1.0) }).collect();
    let support: Vec<usize> = (0..point.len()).filter(|&i| point[i] > 0.0).collect();
    let k = support.len();
    let mut residual = y.to_vec();
    if k > 0 {
        let cols: Vec<&[f64]> = support.iter().map(|&i| pm.column(i)).collect();
        let mut b = DMatrix::<f64>::zeros(k, k);
        for a in 0..k {
            for bcol in 0..=a {
                let v = dot(cols[a], cols[bcol]);
                b[(a, bcol)] = v;
                b[(bcol, a)] = v;
            }
            b[(a, a)] += 1.0 / (pm.gamma() * point[support[a]]);
        }
        let c = DVector::from_iterator(k, cols.iter().map(|col| dot(col, y)));
        let chol = Cholesky::new(b).ok_or(Error::CholeskyFailure { size: k })?;
        let coef = chol.solve(&c);
        for (col, w) in cols.iter().zip(coef.iter()) {
            for (r, v) in residual.iter_mut().zip(col.iter()) {
                *r -= w * v;
            }
        }
    }
    let value = 0.5 * dot(y, &residual);
    let half_gamma = 0.5 * pm.gamma();
    let grad = (0..pm.n_cols())
        .map(|i| {
            let s = dot(pm.column(i), &residual);
            -half_gamma * s * s
        })
        .collect();
    Ok((value, grad, point))
}

/// Cached `M^T M`, `M^T y` and `y^T y`, so repeated `H2` evaluations cost
/// `O(|K|^3 + m |K|)` instead of touching the full matrix.
#[derive(Debug, Clone)]
pub struct Gram {
    m: usize,
    gamma: f64,
    gram: Vec<f64>,
    c: Vec<f64>,
    yty: f64,
}

impl Gram {
    pub fn new(pm: &PredictionMatrix, y: &[f64]) -> Result<Self> {
        if y.len() != pm.n_rows() {
            return Err(Error::DimensionMismatch(format!("y has {} rows, M has {}", y.len(), pm.n_rows())));
        }
        let m = pm.n_cols();
        let mut gram = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..=a {
                let v = dot(pm.column(a), pm.column(b));
                gram[a * m + b] = v;
                gram[b * m + a] = v;
            }
        }
        Ok(Self {
            m,
            gamma: pm.gamma(),
            gram,
            c: (0..m).map(|i| dot(pm.column(i), y)).collect(),
            yty: dot(y, y),
        })
    }

    pub fn n_cols(&self) -> usize {
        self.m
    }

    /// Value and full gradient of the continuous extension at `z`, plus the
    /// point actually evaluated (see [`relaxed_h2`]). At a binary point this
    /// is `H2` and its tangent.
    pub fn relaxed(&self, z: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        if z.len() != self.m {
            return Err(Error::DimensionMismatch(format!("z has {} entries, M has {} columns", z.len(), self.m)));
        }
        let point: Vec<f64> = z.iter().map(|&v| if v < RELAXED_ZERO { 0.0 } else { v.min(1.0) }).collect();
        let support: Vec<usize> = (0..self.m).filter(|&i| point[i] > 0.0).collect();
        let k = support.len();
        // M^T A^{-1} y = c - G_S B^{-1} c_S
        let mut mtr = self.c.clone();
        let mut value = 0.5 * self.yty;
        if k > 0 {
            let b = DMatrix::from_fn(k, k, |a, bb| {
                let v = self.gram[support[a] * self.m + support[bb]];
                if a == bb {
                    v + 1.0 / (self.gamma * point[support[a]])
                } else {
                    v
                }
            });
            let cs = DVector::from_iterator(k, support.iter().map(|&i| self.c[i]));
            let chol = Cholesky::new(b).ok_or(Error::CholeskyFailure { size: k })?;
            let coef = chol.solve(&cs);
            value -= 0.5 * cs.dot(&coef);
            for (&j, w) in support.iter().zip(coef.iter()) {
                let row = &self.gram[j * self.m..(j + 1) * self.m];
                for (t, g) in mtr.iter_mut().zip(row) {
                    *t -= w * g;
                }
            }
        }
        let half_gamma = 0.5 * self.gamma;
        let grad = mtr.iter().map(|s| -half_gamma * s * s).collect();
        Ok((value, grad, point))
    }
}

/// Ridge weights `B^{-1} M_K^T y` on the support and the intercept
/// (the training target mean).
pub fn fit_weights(kernel: &RidgeKernel, pm: &PredictionMatrix) -> (Vec<f64>, f64) {
    (kernel.coef.clone(), pm.target_mean())
}

/// `1/2 ||y - M_K w||^2 + 1/(2 gamma) ||w||^2`.
pub fn ridge_objective(support: &[usize], weights: &[f64], pm: &PredictionMatrix, y: &[f64]) -> f64 {
    let mut r = y.to_vec();
    for (&i, w) in support.iter().zip(weights) {
        for (ri, v) in r.iter_mut().zip(pm.column(i)) {
            *ri -= w * v;
        }
    }
    0.5 * dot(&r, &r) + 0.5 / pm.gamma() * dot(weights, weights)
}

/// Builds a full [`Solution`] for a support: weights, intercept, h1 and h2.
pub fn evaluate_support(support: &[usize], pi: &[f64], pm: &PredictionMatrix, y: &[f64], epsilon: f64) -> Result<Solution> {
    let (h2_value, kernel) = h2(support, pm, y)?;
    let (weights, intercept) = fit_weights(&kernel, pm);
    Ok(Solution {
        h1: h1(kernel.support(), pi)?,
        support: kernel.support().to_vec(),
        weights,
        intercept,
        h2: h2_value,
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm_from(cols: Vec<Vec<f64>>, gamma: f64) -> PredictionMatrix {
        PredictionMatrix::from_raw_columns(cols, 0.0, gamma).unwrap()
    }

    /// Hand examples specify raw, uncentered columns.
    fn raw_pm(cols: Vec<Vec<f64>>, gamma: f64) -> PredictionMatrix {
        PredictionMatrix::from_columns_unchecked(cols, 0.0, gamma)
    }

    #[test]
    fn h1_examples() {
        let pi = [0.2, 0.9, 0.5];
        assert_eq!(h1(&[], &pi).unwrap(), 0.0);
        assert_eq!(h1(&[1], &pi).unwrap(), 0.9);
        assert!((h1(&[1, 2], &pi).unwrap() - 1.4).abs() < 1e-15);
        assert!(matches!(h1(&[3], &pi), Err(Error::IndexOutOfRange { index: 3, len: 3 })));
    }

    #[test]
    fn empty_support_is_half_norm() {
        let pm = pm_from(vec![vec![1.0, -1.0, 0.0]], 1.0);
        let y = [1.0, 2.0, -3.0];
        let (v, k) = h2(&[], &pm, &y).unwrap();
        assert_eq!(v, 7.0);
        assert_eq!(k.residual(), &y);
    }

    #[test]
    fn two_by_two_hand_example() {
        // y = (1,1), raw column (1,0), gamma = 1: A = diag(2,1), H2 = 1/2 (1/2 + 1)
        let pm = raw_pm(vec![vec![1.0, 0.0]], 1.0);
        let y = [1.0, 1.0];
        let (v, kernel) = h2(&[0], &pm, &y).unwrap();
        assert!((v - 0.75).abs() < 1e-15);
        let (w, _) = fit_weights(&kernel, &pm);
        assert!((w[0] - 0.5).abs() < 1e-15);
        assert!((ridge_objective(&[0], &w, &pm, &y) - 0.75).abs() < 1e-15);

        let (_, k0) = h2(&[], &pm, &y).unwrap();
        let g = grad_h2(&k0, &pm);
        assert!((g[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn gradient_zero_iff_orthogonal() {
        let pm = raw_pm(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1.0);
        let y = [1.0, 0.0];
        let (_, k) = h2(&[], &pm, &y).unwrap();
        let g = grad_h2(&k, &pm);
        assert!(g[0] < 0.0);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let pm = raw_pm(vec![vec![1.0, 0.0]], 1.0);
        assert!(matches!(h2(&[1], &pm, &[1.0, 1.0]), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(h2(&[0], &pm, &[1.0]), Err(Error::DimensionMismatch(_))));
    }
}
