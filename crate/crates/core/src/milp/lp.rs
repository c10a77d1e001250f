//! Dual simplex for the node relaxation
//!
//! ```text
//! min nu  s.t.  (a_j^T z - nu) / s_j + t_j = -b_j / s_j   for every cut row j
//!               -pi^T z + t_K = -eps
//!               1^T z + t_C = k
//!               lo <= z <= up,  nu free,  t >= 0
//! ```
//!
//! With `nu` basic in one cut row and every other row's slack basic, the
//! basis is dual feasible once each `z_i` sits at the bound matching the sign
//! of its reduced cost, so no phase 1 is needed. Appending a row (its slack
//! enters the basis) or changing bounds keeps dual feasibility, so
//! re-optimizing after either usually takes a handful of pivots.

use std::collections::HashMap;

use nalgebra::DMatrix;

use super::Cut;

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 50;

/// Stable name of a row across rebuilt relaxations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum RowKey {
    Knapsack,
    Cardinality,
    /// Index into the caller's cut pool.
    Cut(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum VarKey {
    Z(usize),
    Nu,
    Slack(RowKey),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Status {
    Basic,
    Lower,
    Upper,
}

/// Basis of a solved relaxation, reusable by a relaxation over a subset of
/// its rows (dropped rows must have basic slacks).
#[derive(Debug, Clone)]
pub(crate) struct Snapshot {
    pub cut_rows: Vec<usize>,
    pub basic: Vec<VarKey>,
    pub z_status: Vec<Status>,
}

#[derive(Debug)]
pub(crate) enum LpFailure {
    Singular,
    PivotLimit,
}

#[derive(Debug, PartialEq)]
pub(crate) enum Outcome {
    Optimal,
    Infeasible,
}

struct Row {
    key: RowKey,
    z: Vec<f64>,
    nu: f64,
    rhs: f64,
    /// Cut scale `s_j`; 1 for the two structural rows.
    scale: f64,
}

pub(crate) struct Lp {
    m: usize,
    rows: Vec<Row>,
    lo: Vec<f64>,
    up: Vec<f64>,
    x: Vec<f64>,
    status: Vec<Status>,
    basis: Vec<usize>,
    /// Row-major dense inverse of the basis matrix.
    binv: Vec<f64>,
    /// Reduced costs of every variable.
    d: Vec<f64>,
    since_refactor: usize,
    pub pivots: usize,
}

fn cut_row(id: usize, cut: &Cut) -> Row {
    let scale = cut.a.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    Row {
        key: RowKey::Cut(id),
        z: cut.a.iter().map(|a| a / scale).collect(),
        nu: -1.0 / scale,
        rhs: -cut.b / scale,
        scale,
    }
}

impl Lp {
    /// Relaxation over the cuts `cut_rows` of `pool`, warm-started from
    /// `warm` when given and valid, otherwise from the dual-feasible slack
    /// basis.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        pool: &[Cut],
        cut_rows: &[usize],
        pi: &[f64],
        epsilon: f64,
        k: usize,
        lo: &[f64],
        up: &[f64],
        warm: Option<&Snapshot>,
    ) -> Result<Self, LpFailure> {
        assert!(!cut_rows.is_empty(), "relaxation needs a cut row for nu");
        let m = pi.len();
        let mut rows = vec![
            Row {
                key: RowKey::Knapsack,
                z: pi.iter().map(|p| -p).collect(),
                nu: 0.0,
                rhs: -epsilon,
                scale: 1.0,
            },
            Row {
                key: RowKey::Cardinality,
                z: vec![1.0; m],
                nu: 0.0,
                rhs: k as f64,
                scale: 1.0,
            },
        ];
        rows.extend(cut_rows.iter().map(|&id| cut_row(id, &pool[id])));
        let r = rows.len();
        let n = m + 1 + r;
        let mut vlo = vec![0.0; n];
        let mut vup = vec![f64::INFINITY; n];
        vlo[..m].copy_from_slice(lo);
        vup[..m].copy_from_slice(up);
        vlo[m] = f64::NEG_INFINITY;
        let mut lp = Self {
            m,
            rows,
            lo: vlo,
            up: vup,
            x: vec![0.0; n],
            status: vec![Status::Lower; n],
            basis: Vec::new(),
            binv: Vec::new(),
            d: vec![0.0; n],
            since_refactor: 0,
            pivots: 0,
        };
        if let Some(snap) = warm {
            if lp.load(snap) && lp.refactor().is_ok() {
                return Ok(lp);
            }
        }
        lp.cold_basis();
        lp.refactor()?;
        Ok(lp)
    }

    fn slack(&self, row: usize) -> usize {
        self.m + 1 + row
    }

    fn load(&mut self, snap: &Snapshot) -> bool {
        let index: HashMap<RowKey, usize> = self.rows.iter().enumerate().map(|(i, r)| (r.key, i)).collect();
        let mut basis = Vec::with_capacity(self.rows.len());
        for key in &snap.basic {
            let var = match key {
                VarKey::Z(i) => *i,
                VarKey::Nu => self.m,
                VarKey::Slack(row) => match index.get(row) {
                    Some(&i) => self.slack(i),
                    None => continue,
                },
            };
            basis.push(var);
        }
        if basis.len() != self.rows.len() || !basis.contains(&self.m) {
            return false;
        }
        self.status.iter_mut().for_each(|s| *s = Status::Lower);
        for i in 0..self.m {
            self.status[i] = if snap.z_status[i] == Status::Upper { Status::Upper } else { Status::Lower };
        }
        for &var in &basis {
            self.status[var] = Status::Basic;
        }
        self.basis = basis;
        true
    }

    /// `nu` basic in the cut row with the largest minimum over the box, all
    /// other slacks basic.
    fn cold_basis(&mut self) {
        let (lo, up) = (&self.lo, &self.up);
        let best = (2..self.rows.len())
            .max_by(|&a, &b| {
                let value = |row: &Row| {
                    let zmin: f64 = row
                        .z
                        .iter()
                        .enumerate()
                        .map(|(i, c)| (c * lo[i]).min(c * up[i]))
                        .sum();
                    (zmin - row.rhs) * row.scale
                };
                value(&self.rows[a]).total_cmp(&value(&self.rows[b]))
            })
            .expect("at least one cut row");
        self.status.iter_mut().for_each(|s| *s = Status::Lower);
        self.basis = (0..self.rows.len()).map(|row| self.slack(row)).collect();
        self.basis[best] = self.m;
        for p in 0..self.basis.len() {
            self.status[self.basis[p]] = Status::Basic;
        }
    }

    fn column(&self, var: usize) -> Vec<f64> {
        if var < self.m {
            self.rows.iter().map(|r| r.z[var]).collect()
        } else if var == self.m {
            self.rows.iter().map(|r| r.nu).collect()
        } else {
            let mut e = vec![0.0; self.rows.len()];
            e[var - self.m - 1] = 1.0;
            e
        }
    }

    /// `rho^T A` over every variable, for a row vector `rho` over the rows.
    fn row_times(&self, rho: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.x.len()];
        for (row, &p) in self.rows.iter().zip(rho) {
            if p == 0.0 {
                continue;
            }
            for (o, a) in out[..self.m].iter_mut().zip(&row.z) {
                *o += p * a;
            }
            out[self.m] += p * row.nu;
        }
        out[self.m + 1..].copy_from_slice(rho);
        out
    }

    fn binv_times(&self, v: &[f64]) -> Vec<f64> {
        let r = self.rows.len();
        (0..r)
            .map(|i| self.binv[i * r..(i + 1) * r].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn nonbasic_value(&self, var: usize) -> f64 {
        match self.status[var] {
            Status::Upper => self.up[var],
            _ if self.lo[var].is_finite() => self.lo[var],
            _ => 0.0,
        }
    }

    /// Refactors the basis, then recomputes primal values and reduced costs,
    /// moving boxed variables to the bound their reduced cost asks for.
    fn refactor(&mut self) -> Result<(), LpFailure> {
        let r = self.rows.len();
        let mut b = DMatrix::<f64>::zeros(r, r);
        for (p, &var) in self.basis.iter().enumerate() {
            for (i, v) in self.column(var).into_iter().enumerate() {
                b[(i, p)] = v;
            }
        }
        let inv = b.try_inverse().ok_or(LpFailure::Singular)?;
        self.binv = (0..r).flat_map(|i| (0..r).map(move |j| (i, j))).map(|(i, j)| inv[(i, j)]).collect();
        self.since_refactor = 0;
        self.update_duals();
        for var in 0..self.x.len() {
            if self.status[var] == Status::Basic || var >= self.m || self.lo[var] == self.up[var] {
                continue;
            }
            if self.d[var] < -DUAL_TOL {
                self.status[var] = Status::Upper;
            } else if self.d[var] > DUAL_TOL {
                self.status[var] = Status::Lower;
            }
        }
        self.update_primal();
        Ok(())
    }

    fn nu_position(&self) -> usize {
        self.basis.iter().position(|&v| v == self.m).expect("nu stays basic")
    }

    fn update_duals(&mut self) {
        let r = self.rows.len();
        let p = self.nu_position();
        let ya = self.row_times(&self.binv[p * r..(p + 1) * r]);
        for var in 0..self.x.len() {
            let c = if var == self.m { 1.0 } else { 0.0 };
            self.d[var] = if self.status[var] == Status::Basic { 0.0 } else { c - ya[var] };
        }
    }

    fn update_primal(&mut self) {
        let mut resid: Vec<f64> = self.rows.iter().map(|r| r.rhs).collect();
        for var in 0..self.x.len() {
            if self.status[var] == Status::Basic {
                continue;
            }
            let v = self.nonbasic_value(var);
            self.x[var] = v;
            if v != 0.0 {
                for (ri, a) in resid.iter_mut().zip(self.column(var)) {
                    *ri -= a * v;
                }
            }
        }
        let xb = self.binv_times(&resid);
        for (p, &var) in self.basis.iter().enumerate() {
            self.x[var] = xb[p];
        }
    }

    /// Changes the bounds of the `z` variables.
    #[cfg(test)]
    pub(crate) fn set_bounds(&mut self, lo: &[f64], up: &[f64]) {
        let mut changed = false;
        for i in 0..self.m {
            if self.lo[i] == lo[i] && self.up[i] == up[i] {
                continue;
            }
            self.lo[i] = lo[i];
            self.up[i] = up[i];
            changed = true;
            if self.status[i] != Status::Basic {
                self.status[i] = if lo[i] == up[i] || self.d[i] >= 0.0 { Status::Lower } else { Status::Upper };
            }
        }
        if changed {
            self.update_primal();
        }
    }

    /// Appends the cut `pool[id]` as a row whose slack enters the basis.
    pub(crate) fn add_cut(&mut self, pool: &[Cut], id: usize) {
        let row = cut_row(id, &pool[id]);
        let r = self.rows.len();
        // new bottom row of the inverse: -l^T B^{-1}, l = row entries on the basis
        let l: Vec<f64> = self
            .basis
            .iter()
            .map(|&var| if var < self.m { row.z[var] } else if var == self.m { row.nu } else { 0.0 })
            .collect();
        let mut bottom = vec![0.0; r];
        for (p, lp) in l.iter().enumerate() {
            if *lp != 0.0 {
                for (b, v) in bottom.iter_mut().zip(&self.binv[p * r..(p + 1) * r]) {
                    *b -= lp * v;
                }
            }
        }
        let mut binv = Vec::with_capacity((r + 1) * (r + 1));
        for i in 0..r {
            binv.extend_from_slice(&self.binv[i * r..(i + 1) * r]);
            binv.push(0.0);
        }
        binv.extend_from_slice(&bottom);
        binv.push(1.0);
        self.binv = binv;

        let activity: f64 = row.z.iter().zip(&self.x[..self.m]).map(|(a, v)| a * v).sum::<f64>() + row.nu * self.x[self.m];
        let slack_value = row.rhs - activity;
        self.rows.push(row);
        self.lo.push(0.0);
        self.up.push(f64::INFINITY);
        self.x.push(slack_value);
        self.status.push(Status::Basic);
        self.d.push(0.0);
        self.basis.push(self.x.len() - 1);
    }

    fn infeasibility(&self, var: usize) -> f64 {
        let x = self.x[var];
        let tol = PRIMAL_TOL * (1.0 + x.abs());
        if x < self.lo[var] - tol {
            self.lo[var] - x
        } else if x > self.up[var] + tol {
            x - self.up[var]
        } else {
            0.0
        }
    }

    /// Runs dual simplex pivots until primal feasibility or a proof that the
    /// node is empty.
    pub(crate) fn solve(&mut self, max_pivots: usize) -> Result<Outcome, LpFailure> {
        let r0 = self.pivots;
        loop {
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let r = self.rows.len();
            let leave = (0..r)
                .map(|p| (p, self.infeasibility(self.basis[p])))
                .filter(|&(_, v)| v > 0.0)
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            let Some((p, _)) = leave else {
                return Ok(Outcome::Optimal);
            };
            if self.pivots - r0 >= max_pivots {
                return Err(LpFailure::PivotLimit);
            }
            let out = self.basis[p];
            let to_lower = self.x[out] < self.lo[out];
            let target = if to_lower { self.lo[out] } else { self.up[out] };
            let alpha_row = self.row_times(&self.binv[p * r..(p + 1) * r]);

            // candidates move x_out toward its violated bound
            let mut cands: Vec<(usize, f64)> = Vec::new();
            for var in 0..self.x.len() {
                let st = self.status[var];
                if st == Status::Basic || self.lo[var] == self.up[var] {
                    continue;
                }
                let alpha = alpha_row[var];
                let ok = match (st, to_lower) {
                    (Status::Lower, true) => alpha < -PIVOT_TOL,
                    (Status::Upper, true) => alpha > PIVOT_TOL,
                    (Status::Lower, false) => alpha > PIVOT_TOL,
                    (Status::Upper, false) => alpha < -PIVOT_TOL,
                    (Status::Basic, _) => false,
                };
                if ok {
                    cands.push((var, alpha));
                }
            }
            if cands.is_empty() {
                return Ok(Outcome::Infeasible);
            }
            // two-pass ratio test: bound the step with a tolerance, then take
            // the largest pivot within it
            let theta_max = cands
                .iter()
                .map(|&(var, a)| (self.d[var].abs() + DUAL_TOL) / a.abs())
                .fold(f64::INFINITY, f64::min);
            let (enter, alpha_q) = cands
                .iter()
                .filter(|&&(var, a)| self.d[var].abs() / a.abs() <= theta_max)
                .fold(None, |best: Option<(usize, f64)>, &(var, a)| match best {
                    Some(b) if b.1.abs() >= a.abs() => Some(b),
                    _ => Some((var, a)),
                })
                .expect("theta_max comes from a candidate");

            let theta_d = self.d[enter] / alpha_q;
            for var in 0..self.x.len() {
                if self.status[var] != Status::Basic && var != enter {
                    let a = alpha_row[var];
                    if a != 0.0 {
                        self.d[var] -= theta_d * a;
                    }
                }
            }
            self.d[enter] = 0.0;
            self.d[out] = -theta_d;

            let col = self.binv_times(&self.column(enter));
            let theta_p = (self.x[out] - target) / col[p];
            self.x[enter] += theta_p;
            for (q, &var) in self.basis.iter().enumerate() {
                self.x[var] -= theta_p * col[q];
            }
            self.x[out] = target;
            self.status[out] = if to_lower { Status::Lower } else { Status::Upper };
            self.status[enter] = Status::Basic;
            self.basis[p] = enter;

            let piv = col[p];
            let row_p: Vec<f64> = self.binv[p * r..(p + 1) * r].iter().map(|v| v / piv).collect();
            for (i, &f) in col.iter().enumerate() {
                if i == p || f == 0.0 {
                    continue;
                }
                for (b, rp) in self.binv[i * r..(i + 1) * r].iter_mut().zip(&row_p) {
                    *b -= f * rp;
                }
            }
            self.binv[p * r..(p + 1) * r].copy_from_slice(&row_p);
            self.since_refactor += 1;
            self.pivots += 1;
        }
    }

    pub(crate) fn rows(&self) -> usize {
        self.rows.len()
    }

    pub(crate) fn z(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.x[i].clamp(self.lo[i], self.up[i])).collect()
    }

    #[cfg(test)]
    pub(crate) fn nu(&self) -> f64 {
        self.x[self.m]
    }

    /// Non-negative multipliers `(u, mu, rho)` of the cut rows (in row order,
    /// normalized to sum 1), the knapsack row and the cardinality row.
    pub(crate) fn multipliers(&self) -> (Vec<(usize, f64)>, f64, f64) {
        let r = self.rows.len();
        let p = self.nu_position();
        let y = &self.binv[p * r..(p + 1) * r];
        let mut u: Vec<(usize, f64)> = self
            .rows
            .iter()
            .zip(y)
            .filter_map(|(row, &yj)| match row.key {
                RowKey::Cut(id) => Some((id, (-yj / row.scale).max(0.0))),
                _ => None,
            })
            .collect();
        let total: f64 = u.iter().map(|(_, v)| v).sum();
        if total > 0.0 {
            u.iter_mut().for_each(|(_, v)| *v /= total);
        }
        (u, (-y[0]).max(0.0), (-y[1]).max(0.0))
    }

    /// Basis over the cut rows whose slack is nonbasic, plus the two
    /// structural rows.
    pub(crate) fn snapshot_binding(&self) -> Snapshot {
        let mut cut_rows = Vec::new();
        let mut basic = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            let slack_basic = self.status[self.slack(i)] == Status::Basic;
            if let RowKey::Cut(id) = row.key {
                if !slack_basic {
                    cut_rows.push(id);
                }
            }
        }
        let keep_row = |key: RowKey| match key {
            RowKey::Cut(id) => cut_rows.contains(&id),
            _ => true,
        };
        for &var in &self.basis {
            let key = if var < self.m {
                VarKey::Z(var)
            } else if var == self.m {
                VarKey::Nu
            } else {
                let row = self.rows[var - self.m - 1].key;
                if !keep_row(row) {
                    continue;
                }
                VarKey::Slack(row)
            };
            basic.push(key);
        }
        Snapshot {
            cut_rows,
            basic,
            z_status: self.status[..self.m].to_vec(),
        }
    }

    /// Basis over every current row.
    pub(crate) fn snapshot_all(&self) -> Snapshot {
        let basic = self
            .basis
            .iter()
            .map(|&var| {
                if var < self.m {
                    VarKey::Z(var)
                } else if var == self.m {
                    VarKey::Nu
                } else {
                    VarKey::Slack(self.rows[var - self.m - 1].key)
                }
            })
            .collect();
        let cut_rows = self
            .rows
            .iter()
            .filter_map(|r| match r.key {
                RowKey::Cut(id) => Some(id),
                _ => None,
            })
            .collect();
        Snapshot {
            cut_rows,
            basic,
            z_status: self.status[..self.m].to_vec(),
        }
    }
}
