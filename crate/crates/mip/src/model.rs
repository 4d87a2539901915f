//! Linear model representation, validation, and the plain-text instance format.

use std::fmt::{self, Write as _};

use crate::MipError;

pub type VarId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    fn token(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }

    fn parse(token: &str) -> Option<Sense> {
        match token {
            "<=" => Some(Sense::Le),
            "=" | "==" => Some(Sense::Eq),
            ">=" => Some(Sense::Ge),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub lower: f64,
    /// `f64::INFINITY` for an unbounded variable.
    pub upper: f64,
    pub integer: bool,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// Sparse row, sorted by variable id with duplicates merged.
    pub coefs: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coefs.iter().map(|&(v, a)| a * values[v]).sum()
    }
}

/// Accumulates variables and constraints; [`ModelBuilder::seal`] validates
/// and freezes them into a [`LinearModel`].
#[derive(Debug, Default, Clone)]
pub struct ModelBuilder {
    vars: Vec<Variable>,
    rows: Vec<Constraint>,
}

impl ModelBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(vars: usize, rows: usize) -> Self {
        ModelBuilder {
            vars: Vec::with_capacity(vars),
            rows: Vec::with_capacity(rows),
        }
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, integer: bool, objective: f64) -> VarId {
        self.vars.push(Variable {
            lower,
            upper,
            integer,
            objective,
        });
        self.vars.len() - 1
    }

    pub fn continuous(&mut self, lower: f64, upper: f64, objective: f64) -> VarId {
        self.add_var(lower, upper, false, objective)
    }

    pub fn integer(&mut self, lower: f64, upper: f64, objective: f64) -> VarId {
        self.add_var(lower, upper, true, objective)
    }

    pub fn add_row<I>(&mut self, coefs: I, sense: Sense, rhs: f64)
    where
        I: IntoIterator<Item = (VarId, f64)>,
    {
        self.rows.push(Constraint {
            coefs: coefs.into_iter().collect(),
            sense,
            rhs,
        });
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn seal(self) -> Result<LinearModel, MipError> {
        let ModelBuilder { vars, mut rows } = self;
        for (id, v) in vars.iter().enumerate() {
            if !v.lower.is_finite() {
                return Err(MipError::InvalidModel(format!("variable {id}: lower bound must be finite")));
            }
            if v.upper.is_nan() || v.upper == f64::NEG_INFINITY || v.upper < v.lower {
                return Err(MipError::InvalidModel(format!(
                    "variable {id}: bounds [{}, {}] are empty",
                    v.lower, v.upper
                )));
            }
            if !v.objective.is_finite() {
                return Err(MipError::InvalidModel(format!("variable {id}: objective must be finite")));
            }
        }
        for (r, row) in rows.iter_mut().enumerate() {
            if !row.rhs.is_finite() {
                return Err(MipError::InvalidModel(format!("row {r}: rhs must be finite")));
            }
            for &(v, a) in &row.coefs {
                if v >= vars.len() {
                    return Err(MipError::InvalidModel(format!("row {r}: unknown variable {v}")));
                }
                if !a.is_finite() {
                    return Err(MipError::InvalidModel(format!("row {r}: coefficient of {v} is not finite")));
                }
            }
            row.coefs.sort_by_key(|&(v, _)| v);
            row.coefs.dedup_by(|later, first| {
                if later.0 == first.0 {
                    first.1 += later.1;
                    true
                } else {
                    false
                }
            });
            row.coefs.retain(|&(_, a)| a != 0.0);
        }
        Ok(LinearModel { vars, rows })
    }
}

/// A sealed maximization model. Immutable; share freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    vars: Vec<Variable>,
    rows: Vec<Constraint>,
}

/// The first violated condition found by [`LinearModel::check`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Length { expected: usize, got: usize },
    Bound { var: VarId, value: f64 },
    Integrality { var: VarId, value: f64 },
    Row { row: usize, activity: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Length { expected, got } => write!(f, "expected {expected} values, got {got}"),
            Violation::Bound { var, value } => write!(f, "variable {var} = {value} outside its bounds"),
            Violation::Integrality { var, value } => write!(f, "integer variable {var} = {value} is fractional"),
            Violation::Row { row, activity } => write!(f, "row {row} violated (activity {activity})"),
        }
    }
}

impl LinearModel {
    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.rows
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn integer_vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.vars.iter().enumerate().filter(|(_, v)| v.integer).map(|(i, _)| i)
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.vars.iter().zip(values).map(|(v, x)| v.objective * x).sum()
    }

    /// Same model with every objective coefficient multiplied by `factor`.
    pub fn scaled_objective(&self, factor: f64) -> LinearModel {
        let mut out = self.clone();
        for v in &mut out.vars {
            v.objective *= factor;
        }
        out
    }

    /// Independent feasibility re-check of a candidate point.
    pub fn check(&self, values: &[f64], feas_tol: f64, int_tol: f64) -> Result<(), Violation> {
        if values.len() != self.vars.len() {
            return Err(Violation::Length {
                expected: self.vars.len(),
                got: values.len(),
            });
        }
        for (id, (v, &x)) in self.vars.iter().zip(values).enumerate() {
            if !(x >= v.lower - feas_tol && x <= v.upper + feas_tol) {
                return Err(Violation::Bound { var: id, value: x });
            }
            if v.integer && (x - x.round()).abs() > int_tol {
                return Err(Violation::Integrality { var: id, value: x });
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            let act = row.activity(values);
            let scale = 1.0 + row.rhs.abs();
            let ok = match row.sense {
                Sense::Le => act <= row.rhs + feas_tol * scale,
                Sense::Ge => act >= row.rhs - feas_tol * scale,
                Sense::Eq => (act - row.rhs).abs() <= feas_tol * scale,
            };
            if !ok {
                return Err(Violation::Row { row: r, activity: act });
            }
        }
        Ok(())
    }

    /// Serialize to the line-oriented instance format:
    /// `var <id> <lb> <ub> <int|cont> <obj>` and `row <sense> <rhs> <id:coef>...`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, v) in self.vars.iter().enumerate() {
            let kind = if v.integer { "int" } else { "cont" };
            let _ = writeln!(out, "var {id} {} {} {kind} {}", v.lower, v.upper, v.objective);
        }
        for row in &self.rows {
            let _ = write!(out, "row {} {}", row.sense.token(), row.rhs);
            for &(v, a) in &row.coefs {
                let _ = write!(out, " {v}:{a}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<LinearModel, MipError> {
        let bad = |line: usize, msg: &str| MipError::Parse {
            line: line + 1,
            message: msg.to_string(),
        };
        let mut builder = ModelBuilder::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut tok = line.split_whitespace();
            match tok.next() {
                Some("var") => {
                    let fields: Vec<&str> = tok.collect();
                    if fields.len() != 5 {
                        return Err(bad(ln, "var line needs: id lb ub int|cont obj"));
                    }
                    let id: usize = fields[0].parse().map_err(|_| bad(ln, "bad variable id"))?;
                    if id != builder.num_vars() {
                        return Err(bad(ln, "variable ids must be dense and ascending"));
                    }
                    let num = |s: &str| s.parse::<f64>().map_err(|_| bad(ln, "bad number"));
                    let integer = match fields[3] {
                        "int" => true,
                        "cont" => false,
                        _ => return Err(bad(ln, "expected int or cont")),
                    };
                    builder.add_var(num(fields[1])?, num(fields[2])?, integer, num(fields[4])?);
                }
                Some("row") => {
                    let sense = tok
                        .next()
                        .and_then(Sense::parse)
                        .ok_or_else(|| bad(ln, "bad row sense"))?;
                    let rhs: f64 = tok
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad(ln, "bad rhs"))?;
                    let mut coefs = Vec::new();
                    for term in tok {
                        let (v, a) = term.split_once(':').ok_or_else(|| bad(ln, "expected id:coef"))?;
                        let v: usize = v.parse().map_err(|_| bad(ln, "bad id in term"))?;
                        let a: f64 = a.parse().map_err(|_| bad(ln, "bad coefficient"))?;
                        coefs.push((v, a));
                    }
                    builder.add_row(coefs, sense, rhs);
                }
                _ => return Err(bad(ln, "expected `var` or `row`")),
            }
        }
        builder.seal()
    }
}
