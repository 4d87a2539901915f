#![allow(dead_code)]

use fleetsim_mip::{LinearModel, ModelBuilder, Sense};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Textbook dense-tableau two-phase simplex with Bland's rule. Slow and
/// simple on purpose; shares no code with the library.
pub fn tableau_simplex(model: &LinearModel) -> (OracleStatus, f64) {
    let vars = model.variables();
    let n = vars.len();
    // x = lower + x', x' >= 0; finite upper bounds become rows.
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
    for c in model.constraints() {
        let mut a = vec![0.0; n];
        let mut shift = 0.0;
        for &(v, coef) in &c.coefs {
            a[v] = coef;
            shift += coef * vars[v].lower;
        }
        rows.push((a, c.sense, c.rhs - shift));
    }
    for (j, v) in vars.iter().enumerate() {
        if v.upper.is_finite() {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            rows.push((a, Sense::Le, v.upper - v.lower));
        }
    }
    let obj_shift: f64 = vars.iter().map(|v| v.objective * v.lower).sum();
    for row in rows.iter_mut() {
        if row.2 < 0.0 {
            row.0.iter_mut().for_each(|a| *a = -*a);
            row.2 = -row.2;
            row.1 = match row.1 {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Sense::Le).count();
    let width = n + n_slack + n_art;
    // tableau rows: m constraint rows, each [coefs..., rhs]
    let mut t = vec![vec![0.0; width + 1]; m];
    let mut basis = vec![0usize; m];
    let (mut s, mut a) = (n, n + n_slack);
    for (i, (coefs, sense, rhs)) in rows.iter().enumerate() {
        t[i][..n].copy_from_slice(coefs);
        t[i][width] = *rhs;
        match sense {
            Sense::Le => {
                t[i][s] = 1.0;
                basis[i] = s;
                s += 1;
            }
            Sense::Ge => {
                t[i][s] = -1.0;
                s += 1;
                t[i][a] = 1.0;
                basis[i] = a;
                a += 1;
            }
            Sense::Eq => {
                t[i][a] = 1.0;
                basis[i] = a;
                a += 1;
            }
        }
    }
    let art_start = n + n_slack;
    // phase 1: maximize -sum(artificials)
    let mut cost1 = vec![0.0; width];
    for c in cost1.iter_mut().skip(art_start) {
        *c = -1.0;
    }
    if n_art > 0 {
        let allowed: Vec<bool> = vec![true; width];
        if !run(&mut t, &mut basis, &cost1, &allowed) {
            unreachable!("phase 1 is bounded");
        }
        let infeas: f64 = basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| b >= art_start)
            .map(|(i, _)| t[i][width])
            .sum();
        if infeas > 1e-7 {
            return (OracleStatus::Infeasible, f64::NAN);
        }
        // drive zero-level artificials out where possible
        for i in 0..m {
            if basis[i] >= art_start {
                if let Some(j) = (0..art_start).find(|&j| t[i][j].abs() > 1e-9) {
                    pivot(&mut t, &mut basis, i, j);
                }
            }
        }
    }
    let mut cost2 = vec![0.0; width];
    for (j, v) in vars.iter().enumerate() {
        cost2[j] = v.objective;
    }
    let allowed: Vec<bool> = (0..width).map(|j| j < art_start).collect();
    if !run(&mut t, &mut basis, &cost2, &allowed) {
        return (OracleStatus::Unbounded, f64::INFINITY);
    }
    let mut obj = obj_shift;
    for (i, &b) in basis.iter().enumerate() {
        obj += cost2[b] * t[i][width];
    }
    (OracleStatus::Optimal, obj)
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, q: usize) {
    let p = t[r][q];
    t[r].iter_mut().for_each(|v| *v /= p);
    let pivot_row = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i != r && row[q] != 0.0 {
            let f = row[q];
            row.iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
        }
    }
    basis[r] = q;
}

/// Maximizes `cost` over the tableau with Bland's rule. Returns false when
/// unbounded.
fn run(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: &[bool]) -> bool {
    let width = cost.len();
    loop {
        let mut entering = None;
        for j in 0..width {
            if !allowed[j] || basis.contains(&j) {
                continue;
            }
            let mut reduced = cost[j];
            for (i, &b) in basis.iter().enumerate() {
                reduced -= cost[b] * t[i][j];
            }
            if reduced > 1e-9 {
                entering = Some(j);
                break;
            }
        }
        let Some(q) = entering else { return true };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..t.len() {
            if t[i][q] > 1e-9 {
                let ratio = t[i][width] / t[i][q];
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && basis[i] < basis[li]) {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((r, _)) = leave else { return false };
        pivot(t, basis, r, q);
    }
}

/// Dense random model: up to `max_vars` variables and `max_rows` rows with
/// mixed senses. Right-hand sides are built around a random in-bounds point
/// so most instances are feasible.
pub fn random_model(seed: u64, max_vars: usize, max_rows: usize, integer_share: f64) -> LinearModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_vars);
    let m = rng.gen_range(1..=max_rows);
    let mut b = ModelBuilder::new();
    let mut point = Vec::new();
    for _ in 0..n {
        let lower = if rng.gen_bool(0.6) { 0.0 } else { rng.gen_range(-3..=1) as f64 };
        let integer = rng.gen_bool(integer_share);
        let upper = if integer || rng.gen_bool(0.85) {
            lower + rng.gen_range(1..=6) as f64
        } else {
            f64::INFINITY
        };
        let obj = (rng.gen_range(-50..=50) as f64) / 10.0 + rng.gen_range(0.0..0.01);
        b.add_var(lower, upper, integer, obj);
        let hi = if upper.is_finite() { upper } else { lower + 4.0 };
        point.push(if integer {
            rng.gen_range(lower as i64..=hi as i64) as f64
        } else {
            rng.gen_range(lower..=hi)
        });
    }
    for _ in 0..m {
        let mut coefs: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.8) {
                coefs.push((j, (rng.gen_range(-40..=40) as f64) / 8.0));
            }
        }
        let act: f64 = coefs.iter().map(|&(j, a)| a * point[j]).sum();
        let roll: f64 = rng.gen();
        let (sense, rhs) = if roll < 0.6 {
            (Sense::Le, act + rng.gen_range(0.0..4.0))
        } else if roll < 0.85 {
            (Sense::Ge, act - rng.gen_range(0.0..4.0))
        } else {
            (Sense::Eq, act)
        };
        // occasionally make a row infeasible-leaning
        let rhs = if rng.gen_bool(0.05) { rhs - 30.0 } else { rhs };
        b.add_row(coefs, sense, rhs);
    }
    b.seal().unwrap()
}
