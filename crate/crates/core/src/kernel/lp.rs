use microlp::{ComparisonOp, OptimizationDirection, Problem};

use super::{SolveResult, SolveStatus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearRelation {
    Le,
    Ge,
    Eq,
}

/// `sum_j coeffs_j x_j (<=|>=|=) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: LinearRelation,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(coeffs: Vec<(usize, f64)>, relation: LinearRelation, rhs: f64) -> Self {
        Self { coeffs, relation, rhs }
    }
}

/// Minimizes `c^T x` subject to `constraints` and per-variable `bounds`.
pub fn solve_lp(c: &[f64], constraints: &[LinearConstraint], bounds: &[(f64, f64)]) -> Result<SolveResult> {
    if bounds.len() != c.len() {
        return Err(Error::Program(format!("{} bounds for {} variables", bounds.len(), c.len())));
    }
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = c.iter().zip(bounds).map(|(ci, b)| problem.add_var(*ci, *b)).collect();
    for con in constraints {
        let mut expr = Vec::with_capacity(con.coeffs.len());
        for &(i, a) in &con.coeffs {
            let v = *vars
                .get(i)
                .ok_or_else(|| Error::Program(format!("variable index {i} out of range for {} variables", c.len())))?;
            expr.push((v, a));
        }
        let op = match con.relation {
            LinearRelation::Le => ComparisonOp::Le,
            LinearRelation::Ge => ComparisonOp::Ge,
            LinearRelation::Eq => ComparisonOp::Eq,
        };
        problem.add_constraint(expr.as_slice(), op, con.rhs);
    }
    let empty = |status| SolveResult {
        status,
        point: Vec::new(),
        objective: f64::NAN,
        iterations: 0,
        duality_measure: 0.0,
        path_objectives: Vec::new(),
        phase1_value: None,
    };
    match problem.solve() {
        Ok(outcome) => {
            let sol = outcome
                .into_solution()
                .map_err(|_| Error::Internal("LP solve interrupted without a solution".into()))?;
            let point: Vec<f64> = vars.iter().map(|v| sol.var_value(*v)).collect();
            Ok(SolveResult { status: SolveStatus::Optimal, objective: sol.objective(), point, ..empty(SolveStatus::Optimal) })
        }
        Err(microlp::Error::Infeasible) => Ok(empty(SolveStatus::Infeasible)),
        Err(microlp::Error::Unbounded) => Ok(empty(SolveStatus::Unbounded)),
        Err(e) => Err(Error::Internal(format!("LP solver failure: {e}"))),
    }
}
