use crate::model::LinearModel;
use crate::simplex::{solve_bounded, LpStatus, StandardForm, WarmStart};
use crate::{MipError, Solution, SolverConfig, Status};

/// Enumerates every integer assignment within the variable bounds and solves
/// the remaining LP over the continuous variables for each one. Refuses when
/// the number of assignments exceeds `max_enum`.
///
/// Constraints that involve only integer variables are checked as soon as
/// their last variable is assigned, which skips infeasible assignments
/// without changing the result.
pub fn brute_force_solve(model: &LinearModel, max_enum: u64) -> Result<Solution, MipError> {
    let cfg = SolverConfig::default();
    let int_vars: Vec<usize> = model.integer_vars().collect();
    let mut domains = Vec::with_capacity(int_vars.len());
    let mut required: u128 = 1;
    for &v in &int_vars {
        let var = &model.variables()[v];
        if !var.upper.is_finite() {
            return Err(MipError::UnboundedInteger(v));
        }
        let lo = (var.lower - cfg.integrality_tol).ceil();
        let hi = (var.upper + cfg.integrality_tol).floor();
        if hi < lo {
            return Ok(Solution::empty(Status::Infeasible, 0));
        }
        required = required.saturating_mul((hi - lo) as u128 + 1);
        domains.push((lo as i64, hi as i64));
    }
    if required > max_enum as u128 {
        return Err(MipError::EnumerationBudget {
            required,
            budget: max_enum,
        });
    }

    // rows_at[d]: pure-integer rows whose last integer variable sits at depth d
    let mut depth_of = vec![usize::MAX; model.num_vars()];
    for (d, &v) in int_vars.iter().enumerate() {
        depth_of[v] = d;
    }
    let mut rows_at: Vec<Vec<usize>> = vec![Vec::new(); int_vars.len()];
    for (r, row) in model.constraints().iter().enumerate() {
        if row.coefs.is_empty() || row.coefs.iter().any(|&(v, _)| depth_of[v] == usize::MAX) {
            continue;
        }
        let last = row.coefs.iter().map(|&(v, _)| depth_of[v]).max().unwrap();
        rows_at[last].push(r);
    }

    let sf = StandardForm::new(model);
    let mut state = Enumeration {
        model,
        sf: &sf,
        cfg: &cfg,
        int_vars: &int_vars,
        domains: &domains,
        rows_at: &rows_at,
        lower: sf.lower[..sf.n].to_vec(),
        upper: sf.upper[..sf.n].to_vec(),
        point: model.variables().iter().map(|v| v.lower).collect(),
        warm: None,
        best: None,
        leaves: 0,
        unbounded: false,
        failed: false,
    };
    state.descend(0);

    let leaves = state.leaves;
    Ok(if state.unbounded {
        Solution::empty(Status::Unbounded, leaves)
    } else if let Some((objective, values)) = state.best {
        Solution {
            status: if state.failed { Status::Failed } else { Status::Optimal },
            values,
            objective,
            nodes: leaves,
        }
    } else if state.failed {
        Solution::empty(Status::Failed, leaves)
    } else {
        Solution::empty(Status::Infeasible, leaves)
    })
}

struct Enumeration<'a> {
    model: &'a LinearModel,
    sf: &'a StandardForm,
    cfg: &'a SolverConfig,
    int_vars: &'a [usize],
    domains: &'a [(i64, i64)],
    rows_at: &'a [Vec<usize>],
    lower: Vec<f64>,
    upper: Vec<f64>,
    point: Vec<f64>,
    warm: Option<WarmStart>,
    best: Option<(f64, Vec<f64>)>,
    leaves: usize,
    unbounded: bool,
    failed: bool,
}

impl Enumeration<'_> {
    fn descend(&mut self, depth: usize) {
        if self.unbounded {
            return;
        }
        if depth == self.int_vars.len() {
            self.leaf();
            return;
        }
        let v = self.int_vars[depth];
        let (lo, hi) = self.domains[depth];
        for value in lo..=hi {
            let value = value as f64;
            self.lower[v] = value;
            self.upper[v] = value;
            self.point[v] = value;
            if self.rows_at[depth].iter().all(|&r| self.row_ok(r)) {
                self.descend(depth + 1);
            }
        }
    }

    fn row_ok(&self, r: usize) -> bool {
        let row = &self.model.constraints()[r];
        let act = row.activity(&self.point);
        let tol = self.cfg.feasibility_tol * (1.0 + row.rhs.abs());
        match row.sense {
            crate::Sense::Le => act <= row.rhs + tol,
            crate::Sense::Ge => act >= row.rhs - tol,
            crate::Sense::Eq => (act - row.rhs).abs() <= tol,
        }
    }

    fn leaf(&mut self) {
        self.leaves += 1;
        let out = solve_bounded(
            self.sf,
            &self.lower,
            &self.upper,
            self.cfg.feasibility_tol,
            self.warm.as_ref(),
            None,
        );
        match out.status {
            LpStatus::Optimal => {
                if self.best.as_ref().map_or(true, |(b, _)| out.objective > *b) {
                    let mut values = out.x;
                    for &v in self.int_vars {
                        values[v] = self.point[v];
                    }
                    self.best = Some((out.objective, values));
                }
                self.warm = out.warm;
            }
            LpStatus::Infeasible => {}
            LpStatus::Unbounded => self.unbounded = true,
            LpStatus::Failed | LpStatus::TimeLimit => self.failed = true,
        }
    }
}
