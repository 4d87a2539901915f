//! Bounded revised primal simplex.
//!
//! The basis inverse is kept in product form: a reinversion builds an eta
//! file from the identity (all-logical) basis, and each pivot appends one
//! eta column. Phase 1 minimizes the sum of bound infeasibilities of the
//! basic variables (composite method), so the same loop handles warm starts
//! whose basis became primal infeasible after a bound change.
//!
//! Pricing is Dantzig with partial scans on wide models. After
//! `CYCLE_GUARD` consecutive degenerate pivots the solver switches to
//! Bland's rule until the next pivot that makes progress.

use std::time::Instant;

use crate::model::{LinearModel, Sense};

const NONE: usize = usize::MAX;
const PIVOT_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-13;
const REFACTOR_EVERY: usize = 96;
const CYCLE_GUARD: usize = 60;
const PARTIAL_PRICING_MIN: usize = 8_000;
const PARTIAL_SEGMENT: usize = 512;

/// Column-oriented standardized view `A x + s = b` of a model, minimizing
/// the negated objective. Logical `s_i` bounds encode the row sense.
#[derive(Debug, Clone)]
pub(crate) struct StandardForm {
    pub n: usize,
    pub m: usize,
    col_start: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    rhs: Vec<f64>,
    cost_scale: f64,
}

impl StandardForm {
    pub fn new(model: &LinearModel) -> Self {
        let n = model.num_vars();
        let m = model.num_rows();
        let mut counts = vec![0usize; n + 1];
        for row in model.constraints() {
            for &(v, _) in &row.coefs {
                counts[v + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_start = counts.clone();
        let nnz = col_start[n];
        let mut fill = counts;
        let mut row_idx = vec![0usize; nnz];
        let mut vals = vec![0.0; nnz];
        for (r, row) in model.constraints().iter().enumerate() {
            for &(v, a) in &row.coefs {
                let k = fill[v];
                row_idx[k] = r;
                vals[k] = a;
                fill[v] += 1;
            }
        }
        let mut cost = Vec::with_capacity(n + m);
        let mut lower = Vec::with_capacity(n + m);
        let mut upper = Vec::with_capacity(n + m);
        for v in model.variables() {
            cost.push(-v.objective);
            lower.push(v.lower);
            upper.push(v.upper);
        }
        let mut rhs = Vec::with_capacity(m);
        for row in model.constraints() {
            cost.push(0.0);
            let (l, u) = match row.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lower.push(l);
            upper.push(u);
            rhs.push(row.rhs);
        }
        let cost_scale = cost.iter().fold(1.0f64, |acc, c| acc.max(c.abs()));
        StandardForm {
            n,
            m,
            col_start,
            row_idx,
            vals,
            cost,
            lower,
            upper,
            rhs,
            cost_scale,
        }
    }

    #[inline]
    fn column(&self, j: usize) -> ColumnIter<'_> {
        if j < self.n {
            let (s, e) = (self.col_start[j], self.col_start[j + 1]);
            ColumnIter::Sparse(self.row_idx[s..e].iter().zip(&self.vals[s..e]))
        } else {
            ColumnIter::Unit(Some(j - self.n))
        }
    }

    #[inline]
    fn dot(&self, y: &[f64], j: usize) -> f64 {
        if j < self.n {
            let (s, e) = (self.col_start[j], self.col_start[j + 1]);
            let mut acc = 0.0;
            for k in s..e {
                acc += y[self.row_idx[k]] * self.vals[k];
            }
            acc
        } else {
            y[j - self.n]
        }
    }
}

enum ColumnIter<'a> {
    Sparse(std::iter::Zip<std::slice::Iter<'a, usize>, std::slice::Iter<'a, f64>>),
    Unit(Option<usize>),
}

impl Iterator for ColumnIter<'_> {
    type Item = (usize, f64);

    #[inline]
    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            ColumnIter::Sparse(it) => it.next().map(|(&r, &a)| (r, a)),
            ColumnIter::Unit(r) => r.take().map(|r| (r, 1.0)),
        }
    }
}

/// Basis description used to warm-start a later solve of the same standard
/// form under different variable bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct WarmStart {
    basic: Vec<usize>,
    at_upper: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration cap or unrecoverable numerical trouble.
    Failed,
    TimeLimit,
}

#[derive(Debug, Clone)]
pub(crate) struct LpOutcome {
    pub status: LpStatus,
    /// Structural variable values.
    pub x: Vec<f64>,
    /// Objective in the model's (maximization) sense.
    pub objective: f64,
    pub warm: Option<WarmStart>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
    FreeZero,
}

#[derive(Default)]
struct EtaFile {
    pos: Vec<usize>,
    piv: Vec<f64>,
    start: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl EtaFile {
    fn clear(&mut self) {
        self.pos.clear();
        self.piv.clear();
        self.start.clear();
        self.start.push(0);
        self.idx.clear();
        self.val.clear();
    }

    fn push(&mut self, col: &[f64], r: usize) {
        let piv = 1.0 / col[r];
        for (i, &a) in col.iter().enumerate() {
            if i != r && a.abs() > DROP_TOL {
                self.idx.push(i);
                self.val.push(-a * piv);
            }
        }
        self.pos.push(r);
        self.piv.push(piv);
        self.start.push(self.idx.len());
    }

    /// `a <- B^{-1} a`
    fn ftran(&self, a: &mut [f64]) {
        for k in 0..self.pos.len() {
            let r = self.pos[k];
            let t = a[r];
            if t == 0.0 {
                continue;
            }
            a[r] = t * self.piv[k];
            for e in self.start[k]..self.start[k + 1] {
                a[self.idx[e]] += self.val[e] * t;
            }
        }
    }

    /// `y <- y^T B^{-1}`
    fn btran(&self, y: &mut [f64]) {
        for k in (0..self.pos.len()).rev() {
            let r = self.pos[k];
            let mut s = y[r] * self.piv[k];
            for e in self.start[k]..self.start[k + 1] {
                s += y[self.idx[e]] * self.val[e];
            }
            y[r] = s;
        }
    }
}

enum Ratio {
    Leave { pos: usize, theta: f64, to_upper: bool },
    Flip { theta: f64 },
    Unbounded,
}

pub(crate) struct Simplex<'a> {
    sf: &'a StandardForm,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    basic: Vec<usize>,
    etas: EtaFile,
    updates: usize,
    col: Vec<f64>,
    y: Vec<f64>,
    cursor: usize,
    feas_tol: f64,
}

impl<'a> Simplex<'a> {
    /// `lower`/`upper` override the structural bounds; logical bounds come
    /// from the standard form.
    pub fn new(sf: &'a StandardForm, lower: &[f64], upper: &[f64], feas_tol: f64) -> Self {
        let total = sf.n + sf.m;
        let mut lo = Vec::with_capacity(total);
        let mut up = Vec::with_capacity(total);
        lo.extend_from_slice(&lower[..sf.n]);
        up.extend_from_slice(&upper[..sf.n]);
        lo.extend_from_slice(&sf.lower[sf.n..]);
        up.extend_from_slice(&sf.upper[sf.n..]);
        Simplex {
            sf,
            lower: lo,
            upper: up,
            x: vec![0.0; total],
            state: vec![VarState::AtLower; total],
            basic: Vec::new(),
            etas: EtaFile::default(),
            updates: 0,
            col: vec![0.0; sf.m],
            y: vec![0.0; sf.m],
            cursor: 0,
            feas_tol,
        }
    }

    fn place_nonbasic(&mut self, j: usize, prefer_upper: bool) {
        let (l, u) = (self.lower[j], self.upper[j]);
        let (state, value) = if prefer_upper && u.is_finite() {
            (VarState::AtUpper, u)
        } else if l.is_finite() {
            (VarState::AtLower, l)
        } else if u.is_finite() {
            (VarState::AtUpper, u)
        } else {
            (VarState::FreeZero, 0.0)
        };
        self.state[j] = state;
        self.x[j] = value;
    }

    fn install_basis(&mut self, warm: Option<&WarmStart>) {
        let (n, m) = (self.sf.n, self.sf.m);
        let total = n + m;
        let mut upper_flag = vec![false; total];
        let basic: Vec<usize> = match warm {
            Some(w) if w.basic.len() == m => {
                for &j in &w.at_upper {
                    if j < total {
                        upper_flag[j] = true;
                    }
                }
                w.basic.clone()
            }
            _ => (n..total).collect(),
        };
        let mut is_basic = vec![false; total];
        let mut ok = true;
        for &j in &basic {
            if j >= total || is_basic[j] {
                ok = false;
                break;
            }
            is_basic[j] = true;
        }
        let basic = if ok {
            basic
        } else {
            is_basic.iter_mut().for_each(|b| *b = false);
            for j in n..total {
                is_basic[j] = true;
            }
            (n..total).collect()
        };
        for j in 0..total {
            if is_basic[j] {
                self.state[j] = VarState::Basic;
            } else {
                self.place_nonbasic(j, upper_flag[j]);
            }
        }
        self.basic = basic;
    }

    /// Rebuilds the eta file for the current basic set and recomputes the
    /// basic values. Columns found dependent are swapped for logicals.
    fn refactor(&mut self) {
        let sf = self.sf;
        let (n, m) = (sf.n, sf.m);
        self.etas.clear();
        let mut taken = vec![false; m];
        let mut new_basic = vec![NONE; m];
        let mut structural = Vec::new();
        for &v in &self.basic {
            if v >= n {
                taken[v - n] = true;
                new_basic[v - n] = v;
            } else {
                structural.push(v);
            }
        }
        let mut row_count = vec![0u32; m];
        let mut keyed: Vec<(usize, usize)> = structural
            .iter()
            .map(|&j| {
                let mut c = 0;
                for (r, _) in sf.column(j) {
                    if !taken[r] {
                        row_count[r] += 1;
                        c += 1;
                    }
                }
                (c, j)
            })
            .collect();
        keyed.sort_unstable();

        let mut dropped = Vec::new();
        for &(_, j) in &keyed {
            self.col.iter_mut().for_each(|a| *a = 0.0);
            for (r, a) in sf.column(j) {
                self.col[r] = a;
            }
            self.etas.ftran(&mut self.col);
            let mut max_abs = 0.0f64;
            for r in 0..m {
                if !taken[r] {
                    max_abs = max_abs.max(self.col[r].abs());
                }
            }
            for (r, _) in sf.column(j) {
                row_count[r] = row_count[r].saturating_sub(1);
            }
            if max_abs < 1e-9 {
                dropped.push(j);
                continue;
            }
            let threshold = 0.1 * max_abs;
            let mut best = NONE;
            for r in 0..m {
                if taken[r] || self.col[r].abs() < threshold {
                    continue;
                }
                if best == NONE
                    || row_count[r] < row_count[best]
                    || (row_count[r] == row_count[best] && self.col[r].abs() > self.col[best].abs())
                {
                    best = r;
                }
            }
            self.etas.push(&self.col, best);
            taken[best] = true;
            new_basic[best] = j;
        }
        for r in 0..m {
            if new_basic[r] == NONE {
                new_basic[r] = n + r;
                self.state[n + r] = VarState::Basic;
            }
        }
        for j in dropped {
            self.place_nonbasic(j, false);
        }
        self.basic = new_basic;
        self.updates = 0;
        self.recompute_basic_values();
    }

    fn recompute_basic_values(&mut self) {
        let sf = self.sf;
        let mut rhs = sf.rhs.clone();
        for j in 0..sf.n + sf.m {
            if self.state[j] != VarState::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                for (r, a) in sf.column(j) {
                    rhs[r] -= a * xj;
                }
            }
        }
        self.etas.ftran(&mut rhs);
        for (r, &v) in self.basic.iter().enumerate() {
            self.x[v] = rhs[r];
        }
    }

    fn infeasibility(&self, v: usize) -> f64 {
        let xv = self.x[v];
        if xv < self.lower[v] - self.feas_tol {
            -1.0
        } else if xv > self.upper[v] + self.feas_tol {
            1.0
        } else {
            0.0
        }
    }

    /// Loads phase costs into `y` and BTRANs them. Returns whether phase 1
    /// is active.
    fn compute_duals(&mut self) -> bool {
        let mut phase1 = false;
        for r in 0..self.sf.m {
            if self.infeasibility(self.basic[r]) != 0.0 {
                phase1 = true;
                break;
            }
        }
        for r in 0..self.sf.m {
            let v = self.basic[r];
            self.y[r] = if phase1 { self.infeasibility(v) } else { self.sf.cost[v] };
        }
        self.etas.btran(&mut self.y);
        phase1
    }

    #[inline]
    fn reduced_cost(&self, j: usize, phase1: bool) -> f64 {
        let c = if phase1 { 0.0 } else { self.sf.cost[j] };
        c - self.sf.dot(&self.y, j)
    }

    #[inline]
    fn attractive(&self, j: usize, phase1: bool, dtol: f64) -> Option<f64> {
        let st = self.state[j];
        if st == VarState::Basic || self.lower[j] == self.upper[j] {
            return None;
        }
        let d = self.reduced_cost(j, phase1);
        let ok = match st {
            VarState::AtLower => d < -dtol,
            VarState::AtUpper => d > dtol,
            VarState::FreeZero => d.abs() > dtol,
            VarState::Basic => false,
        };
        ok.then_some(d)
    }

    fn price(&mut self, phase1: bool, bland: bool, dtol: f64) -> Option<(usize, f64)> {
        let total = self.sf.n + self.sf.m;
        if total == 0 {
            return None;
        }
        if bland {
            return (0..total).find_map(|j| self.attractive(j, phase1, dtol).map(|d| (j, d)));
        }
        let seg = if total > PARTIAL_PRICING_MIN {
            PARTIAL_SEGMENT
        } else {
            total
        };
        let mut best: Option<(usize, f64)> = None;
        let mut scanned = 0;
        let mut j = self.cursor.min(total - 1);
        while scanned < total {
            let end = (scanned + seg).min(total);
            while scanned < end {
                if let Some(d) = self.attractive(j, phase1, dtol) {
                    if best.map_or(true, |(_, bd)| d.abs() > bd.abs()) {
                        best = Some((j, d));
                    }
                }
                j += 1;
                if j == total {
                    j = 0;
                }
                scanned += 1;
            }
            if best.is_some() {
                break;
            }
        }
        self.cursor = j;
        best
    }

    fn ratio_test(&self, q: usize, dir: f64, phase1: bool, bland: bool) -> Ratio {
        let tol = self.feas_tol;
        // (pos, exact ratio, relaxed ratio, to_upper)
        let mut cands: Vec<(usize, f64, f64, bool)> = Vec::new();
        for r in 0..self.sf.m {
            let alpha = self.col[r];
            if alpha.abs() <= PIVOT_TOL {
                continue;
            }
            let delta = -dir * alpha;
            let v = self.basic[r];
            let (xv, l, u) = (self.x[v], self.lower[v], self.upper[v]);
            if delta < 0.0 {
                if phase1 && xv > u + tol {
                    cands.push((r, (xv - u) / -delta, (xv - u + tol) / -delta, true));
                } else if phase1 && xv < l - tol {
                } else if l.is_finite() {
                    cands.push((r, (xv - l) / -delta, (xv - l + tol) / -delta, false));
                }
            } else if phase1 && xv < l - tol {
                cands.push((r, (l - xv) / delta, (l - xv + tol) / delta, false));
            } else if phase1 && xv > u + tol {
            } else if u.is_finite() {
                cands.push((r, (u - xv) / delta, (u - xv + tol) / delta, true));
            }
        }
        let range = self.upper[q] - self.lower[q];
        let chosen = if cands.is_empty() {
            None
        } else if bland {
            let min = cands.iter().fold(f64::INFINITY, |a, c| a.min(c.1));
            cands
                .iter()
                .filter(|c| c.1 <= min + 1e-12)
                .min_by_key(|c| self.basic[c.0])
                .copied()
        } else {
            let theta_max = cands.iter().fold(f64::INFINITY, |a, c| a.min(c.2));
            let mut pick: Option<(usize, f64, f64, bool)> = None;
            for &c in &cands {
                if c.1 <= theta_max
                    && pick.map_or(true, |p| self.col[c.0].abs() > self.col[p.0].abs())
                {
                    pick = Some(c);
                }
            }
            pick
        };
        match chosen {
            Some((pos, theta, _, to_upper)) => {
                let theta = theta.max(0.0);
                if range <= theta {
                    Ratio::Flip { theta: range }
                } else {
                    Ratio::Leave { pos, theta, to_upper }
                }
            }
            None if range.is_finite() => Ratio::Flip { theta: range },
            None => Ratio::Unbounded,
        }
    }

    pub fn solve(mut self, warm: Option<&WarmStart>, deadline: Option<Instant>) -> LpOutcome {
        let sf = self.sf;
        let (n, m) = (sf.n, sf.m);
        self.install_basis(warm);
        self.refactor();
        let max_iter = 20 * (n + m) + 10_000;
        let dtol2 = 1e-9 * sf.cost_scale;
        let mut iterations = 0usize;
        let mut degenerate = 0usize;
        let mut bland = false;
        let mut unstable = 0usize;

        let status = loop {
            if iterations >= max_iter {
                break LpStatus::Failed;
            }
            if iterations % 64 == 0 {
                if let Some(d) = deadline {
                    if Instant::now() >= d {
                        break LpStatus::TimeLimit;
                    }
                }
            }
            if self.updates >= REFACTOR_EVERY {
                self.refactor();
            }
            let phase1 = self.compute_duals();
            let dtol = if phase1 { 1e-9 } else { dtol2 };
            let Some((q, d)) = self.price(phase1, bland, dtol) else {
                // Confirm on a fresh factorization before declaring a result.
                if self.updates > 0 {
                    self.refactor();
                    continue;
                }
                break if phase1 { LpStatus::Infeasible } else { LpStatus::Optimal };
            };
            let dir = if d < 0.0 { 1.0 } else { -1.0 };

            self.col.iter_mut().for_each(|a| *a = 0.0);
            for (r, a) in sf.column(q) {
                self.col[r] = a;
            }
            self.etas.ftran(&mut self.col);

            let ratio = self.ratio_test(q, dir, phase1, bland);
            let theta = match ratio {
                Ratio::Unbounded => {
                    if phase1 {
                        // Cannot happen in exact arithmetic; refresh and retry.
                        unstable += 1;
                        if unstable > 5 {
                            break LpStatus::Failed;
                        }
                        self.refactor();
                        continue;
                    }
                    break LpStatus::Unbounded;
                }
                Ratio::Flip { theta } | Ratio::Leave { theta, .. } => theta,
            };
            iterations += 1;

            if theta > 0.0 {
                self.x[q] += dir * theta;
                for r in 0..m {
                    let a = self.col[r];
                    if a != 0.0 {
                        let v = self.basic[r];
                        self.x[v] -= dir * theta * a;
                    }
                }
            }
            match ratio {
                Ratio::Flip { .. } => {
                    if dir > 0.0 {
                        self.state[q] = VarState::AtUpper;
                        self.x[q] = self.upper[q];
                    } else {
                        self.state[q] = VarState::AtLower;
                        self.x[q] = self.lower[q];
                    }
                }
                Ratio::Leave { pos, to_upper, .. } => {
                    let v = self.basic[pos];
                    if to_upper {
                        self.state[v] = VarState::AtUpper;
                        self.x[v] = self.upper[v];
                    } else {
                        self.state[v] = VarState::AtLower;
                        self.x[v] = self.lower[v];
                    }
                    self.state[q] = VarState::Basic;
                    self.basic[pos] = q;
                    self.etas.push(&self.col, pos);
                    self.updates += 1;
                }
                Ratio::Unbounded => unreachable!(),
            }

            if theta <= 1e-12 {
                degenerate += 1;
                if degenerate > CYCLE_GUARD {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
        };

        let x: Vec<f64> = self.x[..n].to_vec();
        let objective = -(0..n).map(|j| sf.cost[j] * x[j]).sum::<f64>();
        let warm = Some(WarmStart {
            basic: self.basic.clone(),
            at_upper: (0..n + m)
                .filter(|&j| self.state[j] == VarState::AtUpper)
                .collect(),
        });
        LpOutcome {
            status,
            x,
            objective,
            warm,
        }
    }
}

/// Solves the LP defined by `sf` with the given structural bounds.
pub(crate) fn solve_bounded(
    sf: &StandardForm,
    lower: &[f64],
    upper: &[f64],
    feas_tol: f64,
    warm: Option<&WarmStart>,
    deadline: Option<Instant>,
) -> LpOutcome {
    if sf.n > 0 && lower.iter().zip(upper).any(|(l, u)| l > u) {
        return LpOutcome {
            status: LpStatus::Infeasible,
            x: Vec::new(),
            objective: f64::NEG_INFINITY,
            warm: warm.cloned(),
        };
    }
    Simplex::new(sf, lower, upper, feas_tol).solve(warm, deadline)
}
