//! Exact solver for small and medium mixed-integer linear programs.
//!
//! * [`solve_lp`]: bounded revised primal simplex on the continuous relaxation.
//! * [`solve_mip`]: best-first branch-and-bound over the integer variables.
//! * [`brute_force_solve`]: exhaustive enumeration of integer assignments,
//!   kept as an independent reference for testing the tree search.
//!
//! Models are always maximized.

mod branch;
mod brute;
mod model;
mod simplex;

pub use branch::{solve_lp, solve_mip};
pub use brute::brute_force_solve;
pub use model::{Constraint, LinearModel, ModelBuilder, Sense, VarId, Variable, Violation};

#[derive(Debug, thiserror::Error)]
pub enum MipError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("instance text, line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("integer variable {0} has no finite upper bound")]
    UnboundedInteger(VarId),
    #[error("enumeration needs {required} integer assignments, budget is {budget}")]
    EnumerationBudget { required: u128, budget: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    /// Node or time limit reached; `values` holds the best integer solution
    /// found, if any.
    NodeLimit,
    /// Simplex iteration cap or numerical breakdown.
    Failed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::NodeLimit => "node-limit",
            Status::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: Status,
    /// One value per model variable; empty when no feasible point is known.
    pub values: Vec<f64>,
    pub objective: f64,
    /// Branch-and-bound nodes solved (leaves enumerated for brute force).
    pub nodes: usize,
}

impl Solution {
    pub fn has_values(&self) -> bool {
        !self.values.is_empty()
    }

    fn empty(status: Status, nodes: usize) -> Self {
        Solution {
            status,
            values: Vec::new(),
            objective: f64::NEG_INFINITY,
            nodes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub feasibility_tol: f64,
    pub integrality_tol: f64,
    pub node_limit: usize,
    pub time_limit_s: f64,
    /// Relative optimality gap at which the tree search stops. Zero asks for
    /// a proven optimum.
    pub mip_gap: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            feasibility_tol: 1e-7,
            integrality_tol: 1e-6,
            node_limit: 100_000,
            time_limit_s: 30.0,
            mip_gap: 0.0,
        }
    }
}
