use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::model::LinearModel;
use crate::simplex::{solve_bounded, LpOutcome, LpStatus, StandardForm, WarmStart};
use crate::{MipError, Solution, SolverConfig, Status};

/// Solves the continuous relaxation (integrality flags ignored).
pub fn solve_lp(model: &LinearModel) -> Solution {
    let sf = StandardForm::new(model);
    let cfg = SolverConfig::default();
    let out = solve_bounded(&sf, &sf.lower[..sf.n], &sf.upper[..sf.n], cfg.feasibility_tol, None, None);
    lp_solution(out)
}

fn lp_solution(out: LpOutcome) -> Solution {
    match out.status {
        LpStatus::Optimal => Solution {
            status: Status::Optimal,
            values: out.x,
            objective: out.objective,
            nodes: 0,
        },
        LpStatus::Infeasible => Solution::empty(Status::Infeasible, 0),
        LpStatus::Unbounded => Solution::empty(Status::Unbounded, 0),
        LpStatus::TimeLimit => Solution::empty(Status::NodeLimit, 0),
        LpStatus::Failed => Solution::empty(Status::Failed, 0),
    }
}

/// Pseudocost observations needed before a variable's estimate is trusted
/// over strong branching.
const RELIABLE: u32 = 2;
/// Strong-branching candidates evaluated per node.
const STRONG_CANDIDATES: usize = 8;

/// Nodes between diving heuristic runs.
const DIVE_EVERY: usize = 64;

/// How a node was created: the branched variable, direction, the parent's
/// bound and the distance the variable was pushed.
#[derive(Debug, Clone, Copy)]
struct Origin {
    var: usize,
    up: bool,
    parent_bound: f64,
    dist: f64,
}

struct Node {
    bound: f64,
    seq: usize,
    /// Bound tightenings along the path from the root: (var, lower, upper).
    fixes: Vec<(usize, f64, f64)>,
    warm: Option<Arc<WarmStart>>,
    origin: Option<Origin>,
    /// Relaxation already solved during strong branching.
    solved: Option<LpOutcome>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Max-heap: larger bound first, then older node first.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Incumbent {
    objective: f64,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Pseudocost {
    down_sum: f64,
    down_n: u32,
    up_sum: f64,
    up_n: u32,
}

/// Result of evaluating one branching candidate by solving both children.
struct Strong {
    var: usize,
    down: LpOutcome,
    up: LpOutcome,
}

enum Branching {
    /// Branch on the variable; children are solved only when popped.
    Estimate(usize),
    Strong(Strong),
}

struct Search<'a> {
    model: &'a LinearModel,
    cfg: &'a SolverConfig,
    sf: StandardForm,
    int_vars: Vec<usize>,
    root_lower: Vec<f64>,
    root_upper: Vec<f64>,
    incumbent: Option<Incumbent>,
    deadline: Instant,
    pseudo: Vec<Pseudocost>,
    lp_solves: usize,
}

fn child_bounds(fixes: &[(usize, f64, f64)], v: usize, root: (f64, f64)) -> (f64, f64) {
    fixes
        .iter()
        .rev()
        .find(|f| f.0 == v)
        .map(|f| (f.1, f.2))
        .unwrap_or(root)
}

impl Search<'_> {
    fn cutoff(&self) -> f64 {
        match &self.incumbent {
            None => f64::NEG_INFINITY,
            Some(inc) => {
                let abs = 1e-9 * (1.0 + inc.objective.abs());
                inc.objective + abs.max(self.cfg.mip_gap * inc.objective.abs())
            }
        }
    }

    fn bounds_for(&self, fixes: &[(usize, f64, f64)]) -> (Vec<f64>, Vec<f64>) {
        let mut lo = self.root_lower.clone();
        let mut up = self.root_upper.clone();
        for &(v, l, u) in fixes {
            lo[v] = l;
            up[v] = u;
        }
        (lo, up)
    }

    fn solve(&mut self, lo: &[f64], up: &[f64], warm: Option<&WarmStart>) -> LpOutcome {
        self.lp_solves += 1;
        solve_bounded(&self.sf, lo, up, self.cfg.feasibility_tol, warm, Some(self.deadline))
    }

    fn record(&mut self, origin: Origin, out: &LpOutcome) {
        if out.status != LpStatus::Optimal || origin.dist <= 0.0 {
            return;
        }
        let gain = (origin.parent_bound - out.objective).max(0.0) / origin.dist;
        let pc = &mut self.pseudo[origin.var];
        if origin.up {
            pc.up_sum += gain;
            pc.up_n += 1;
        } else {
            pc.down_sum += gain;
            pc.down_n += 1;
        }
    }

    /// Average per-unit degradation over all variables, per direction.
    fn average_gains(&self) -> (f64, f64) {
        let (mut ds, mut dn, mut us, mut un) = (0.0, 0u32, 0.0, 0u32);
        for pc in &self.pseudo {
            ds += pc.down_sum;
            dn += pc.down_n;
            us += pc.up_sum;
            un += pc.up_n;
        }
        let avg = |s: f64, n: u32| if n == 0 { 1.0 } else { s / n as f64 };
        (avg(ds, dn), avg(us, un))
    }

    fn fractional(&self, x: &[f64]) -> Vec<usize> {
        let tol = self.cfg.integrality_tol;
        self.int_vars
            .iter()
            .copied()
            .filter(|&v| {
                let frac = x[v] - x[v].floor();
                frac > tol && frac < 1.0 - tol
            })
            .collect()
    }

    fn estimate(&self, v: usize, x: f64, avg: (f64, f64)) -> (f64, f64) {
        let pc = &self.pseudo[v];
        let down = if pc.down_n > 0 { pc.down_sum / pc.down_n as f64 } else { avg.0 };
        let up = if pc.up_n > 0 { pc.up_sum / pc.up_n as f64 } else { avg.1 };
        let f = x - x.floor();
        (down * f, up * (1.0 - f))
    }

    /// Picks a branching variable among the fractional ones: trusted
    /// pseudocosts where available, strong branching on the most fractional
    /// unreliable candidates otherwise. Scores use the product rule; ties go
    /// to the lowest id.
    fn choose(
        &mut self,
        x: &[f64],
        bound: f64,
        fixes: &[(usize, f64, f64)],
        warm: Option<&WarmStart>,
    ) -> Option<Branching> {
        let cands = self.fractional(x);
        if cands.is_empty() {
            return None;
        }
        let score = |d: f64, u: f64| d.max(1e-6) * u.max(1e-6);
        let avg = self.average_gains();
        let mut best: Option<(f64, usize)> = None;
        let mut unreliable: Vec<usize> = Vec::new();
        for &v in &cands {
            let pc = &self.pseudo[v];
            if pc.down_n.min(pc.up_n) >= RELIABLE {
                let (d, u) = self.estimate(v, x[v], avg);
                let s = score(d, u);
                if best.map_or(true, |(b, _)| s > b) {
                    best = Some((s, v));
                }
            } else {
                unreliable.push(v);
            }
        }
        let frac_score = |v: usize| {
            let f = x[v] - x[v].floor();
            f.min(1.0 - f)
        };
        unreliable.sort_by(|&a, &b| frac_score(b).total_cmp(&frac_score(a)).then(a.cmp(&b)));
        let mut strong_best: Option<(f64, Strong)> = None;
        let (lo, up) = self.bounds_for(fixes);
        for &v in unreliable.iter().take(STRONG_CANDIDATES) {
            if Instant::now() >= self.deadline {
                break;
            }
            let root = (self.root_lower[v], self.root_upper[v]);
            let (l, u) = child_bounds(fixes, v, root);
            let f = x[v] - x[v].floor();
            let mut child = |lo_v: f64, up_v: f64| {
                let (mut clo, mut cup) = (lo.clone(), up.clone());
                clo[v] = lo_v;
                cup[v] = up_v;
                self.solve(&clo, &cup, warm)
            };
            let down = child(l, x[v].floor());
            let upc = child(x[v].ceil(), u);
            for (out, is_up, dist) in [(&down, false, f), (&upc, true, 1.0 - f)] {
                self.record(
                    Origin {
                        var: v,
                        up: is_up,
                        parent_bound: bound,
                        dist,
                    },
                    out,
                );
            }
            let gain = |o: &LpOutcome| match o.status {
                LpStatus::Optimal => (bound - o.objective).max(0.0),
                _ => f64::INFINITY,
            };
            let s = score(gain(&down), gain(&upc));
            let strong = Strong { var: v, down, up: upc };
            // a child that cannot beat the incumbent settles the choice
            let decisive = [&strong.down, &strong.up]
                .iter()
                .any(|o| o.status != LpStatus::Optimal || o.objective <= self.cutoff());
            if decisive {
                return Some(Branching::Strong(strong));
            }
            if strong_best.as_ref().map_or(true, |(b, _)| s > *b) {
                strong_best = Some((s, strong));
            }
        }
        match (strong_best, best) {
            (Some((s, strong)), Some((b, v))) => {
                if s >= b {
                    Some(Branching::Strong(strong))
                } else {
                    Some(Branching::Estimate(v))
                }
            }
            (Some((_, strong)), None) => Some(Branching::Strong(strong)),
            (None, Some((_, v))) => Some(Branching::Estimate(v)),
            // out of time before any evaluation
            (None, None) => Some(Branching::Estimate(unreliable[0])),
        }
    }

    fn offer(&mut self, x: &[f64]) {
        let mut values = x.to_vec();
        for &v in &self.int_vars {
            values[v] = values[v].round();
        }
        let objective = self.model.objective_value(&values);
        if self.incumbent.as_ref().map_or(true, |inc| objective > inc.objective) {
            self.incumbent = Some(Incumbent { objective, values });
        }
    }

    /// Repeatedly fixes the least fractional variable to its nearest integer
    /// and re-solves, trying the other side once on infeasibility, until the
    /// relaxation is integral or no longer promising.
    fn dive(&mut self, x: &[f64], fixes: &[(usize, f64, f64)], warm: Option<&WarmStart>) {
        let (mut lo, mut up) = self.bounds_for(fixes);
        let mut x = x.to_vec();
        let mut warm = warm.cloned();
        for _ in 0..=self.int_vars.len() {
            if Instant::now() >= self.deadline {
                return;
            }
            let cands = self.fractional(&x);
            let Some(&v) = cands.iter().min_by(|&&a, &&b| {
                let d = |v: usize| (x[v] - x[v].round()).abs();
                d(a).total_cmp(&d(b)).then(a.cmp(&b))
            }) else {
                self.offer(&x);
                return;
            };
            let near = x[v].round();
            let far = if near > x[v] { x[v].floor() } else { x[v].ceil() };
            let mut next = None;
            for r in [near, far] {
                let (ol, ou) = (lo[v], up[v]);
                lo[v] = r;
                up[v] = r;
                let out = self.solve(&lo, &up, warm.as_ref());
                if out.status == LpStatus::Optimal && out.objective > self.cutoff() {
                    next = Some(out);
                    break;
                }
                lo[v] = ol;
                up[v] = ou;
            }
            let Some(out) = next else { return };
            x = out.x;
            warm = out.warm;
        }
    }

    /// Fix integers to rounded relaxation values and re-solve the rest.
    fn rounding_heuristic(&mut self, x: &[f64], warm: Option<&WarmStart>) {
        for round in [f64::ceil as fn(f64) -> f64, f64::round, f64::floor] {
            let (mut lo, mut up) = (self.root_lower.clone(), self.root_upper.clone());
            for &v in &self.int_vars {
                let r = round(x[v]).clamp(lo[v], up[v]);
                lo[v] = r;
                up[v] = r;
            }
            let out = self.solve(&lo, &up, warm);
            if out.status == LpStatus::Optimal {
                self.offer(&out.x);
            }
        }
    }
}

/// Best-first branch-and-bound with reliability branching: pseudocost
/// estimates once a variable has enough history, strong branching before
/// that. Open nodes are explored in order of their relaxation bound.
pub fn solve_mip(model: &LinearModel, cfg: &SolverConfig) -> Result<Solution, MipError> {
    let int_vars: Vec<usize> = model.integer_vars().collect();
    for &v in &int_vars {
        if !model.variables()[v].upper.is_finite() {
            return Err(MipError::UnboundedInteger(v));
        }
    }
    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(cfg.time_limit_s.max(0.0));
    let sf = StandardForm::new(model);
    let mut root_lower = sf.lower[..sf.n].to_vec();
    let mut root_upper = sf.upper[..sf.n].to_vec();
    for &v in &int_vars {
        root_lower[v] = (root_lower[v] - cfg.integrality_tol).ceil();
        root_upper[v] = (root_upper[v] + cfg.integrality_tol).floor();
    }
    let n = sf.n;
    let mut search = Search {
        model,
        cfg,
        sf,
        int_vars,
        root_lower,
        root_upper,
        incumbent: None,
        deadline,
        pseudo: vec![Pseudocost::default(); n],
        lp_solves: 0,
    };

    let (lo, up) = (search.root_lower.clone(), search.root_upper.clone());
    let root = search.solve(&lo, &up, None);
    match root.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Ok(Solution::empty(Status::Infeasible, 1)),
        LpStatus::Unbounded => return Ok(Solution::empty(Status::Unbounded, 1)),
        LpStatus::Failed => return Ok(Solution::empty(Status::Failed, 1)),
        LpStatus::TimeLimit => return Ok(Solution::empty(Status::NodeLimit, 1)),
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    let mut nodes = 1usize;
    let mut limited = false;

    if !search.fractional(&root.x).is_empty() {
        search.rounding_heuristic(&root.x, root.warm.as_ref());
        if root.objective > search.cutoff() {
            search.dive(&root.x, &[], root.warm.as_ref());
        }
    }
    let mut pending = Some((root, Vec::new()));

    loop {
        if let Some((out, fixes)) = pending.take() {
            match out.status {
                LpStatus::Optimal if out.objective > search.cutoff() => {
                    if nodes % DIVE_EVERY == 0 && !search.fractional(&out.x).is_empty() {
                        search.dive(&out.x, &fixes, out.warm.as_ref());
                    }
                    match search.choose(&out.x, out.objective, &fixes, out.warm.as_ref()) {
                        None => search.offer(&out.x),
                        Some(branching) => {
                            let v = match &branching {
                                Branching::Estimate(v) => *v,
                                Branching::Strong(s) => s.var,
                            };
                            let val = out.x[v];
                            let root_b = (search.root_lower[v], search.root_upper[v]);
                            let (lo, up) = child_bounds(&fixes, v, root_b);
                            let f = val - val.floor();
                            let warm = out.warm.map(Arc::new);
                            let mut solved = match branching {
                                Branching::Estimate(_) => [None, None],
                                Branching::Strong(s) => [Some(s.down), Some(s.up)],
                            };
                            for (k, (l, u)) in [(lo, val.floor()), (val.ceil(), up)].into_iter().enumerate() {
                                let pre = solved[k].take();
                                if let Some(p) = &pre {
                                    // strong branching already proved this child useless
                                    if p.status != LpStatus::Optimal || p.objective <= search.cutoff() {
                                        continue;
                                    }
                                }
                                let mut child = fixes.clone();
                                child.push((v, l, u));
                                seq += 1;
                                heap.push(Node {
                                    bound: pre.as_ref().map_or(out.objective, |p| p.objective),
                                    seq,
                                    fixes: child,
                                    warm: warm.clone(),
                                    origin: pre.is_none().then_some(Origin {
                                        var: v,
                                        up: k == 1,
                                        parent_bound: out.objective,
                                        dist: if k == 1 { 1.0 - f } else { f },
                                    }),
                                    solved: pre,
                                });
                            }
                        }
                    }
                }
                LpStatus::Optimal | LpStatus::Infeasible => {}
                // An unbounded node relaxation under finite integer bounds
                // can only come from numerical trouble; the subtree is not
                // proven, so the result is not either.
                LpStatus::Unbounded | LpStatus::Failed => limited = true,
                LpStatus::TimeLimit => {
                    limited = true;
                    break;
                }
            }
        }

        let Some(node) = heap.pop() else { break };
        if node.bound <= search.cutoff() {
            break;
        }
        if nodes >= cfg.node_limit || Instant::now() >= deadline {
            limited = true;
            break;
        }
        nodes += 1;
        let out = match node.solved {
            Some(out) => out,
            None => {
                let (lo, up) = search.bounds_for(&node.fixes);
                let out = search.solve(&lo, &up, node.warm.as_deref());
                if let Some(origin) = node.origin {
                    search.record(origin, &out);
                }
                out
            }
        };
        pending = Some((out, node.fixes));
    }

    Ok(match search.incumbent {
        Some(inc) => Solution {
            status: if limited { Status::NodeLimit } else { Status::Optimal },
            values: inc.values,
            objective: inc.objective,
            nodes,
        },
        None if limited => Solution::empty(Status::NodeLimit, nodes),
        None => Solution::empty(Status::Infeasible, nodes),
    })
}
