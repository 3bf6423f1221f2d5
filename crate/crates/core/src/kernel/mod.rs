//! Small dense convex solvers: a log-barrier interior-point method for smooth
//! programs with affine, convex-quadratic and base-2 exponential constraints,
//! and a thin wrapper over a simplex LP solver.

mod barrier;
mod lp;

pub use barrier::{solve_smooth_convex, solve_smooth_convex_with, BarrierOptions};
pub use lp::{solve_lp, LinearConstraint, LinearRelation};

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Exit state of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub point: Vec<f64>,
    pub objective: f64,
    /// Newton steps (barrier) or zero (LP).
    pub iterations: usize,
    /// `m / t` at exit; zero for LPs.
    pub duality_measure: f64,
    /// Objective at the end of each centering step, in order of increasing `t`.
    pub path_objectives: Vec<f64>,
    /// Optimal slack of the feasibility phase, when it ran.
    pub phase1_value: Option<f64>,
}

/// `sum_j coeffs_j x_j <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// `x^T P x + q^T x + r <= 0` with `P` symmetric positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexQuadratic {
    p: DMatrix<f64>,
    q: DVector<f64>,
    r: f64,
    /// Rows/columns of `P` that are not identically zero.
    support: Vec<usize>,
}

impl ConvexQuadratic {
    /// Validates symmetry and positive semidefiniteness (by attempting a
    /// Cholesky factorization of a slightly shifted `P`).
    pub fn new(p: DMatrix<f64>, q: Vec<f64>, r: f64) -> Result<Self> {
        let n = q.len();
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::Program(format!(
                "quadratic form is {}x{} but the linear part has {n} entries",
                p.nrows(),
                p.ncols()
            )));
        }
        let scale = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if (&p - p.transpose()).iter().any(|v| v.abs() > 1e-12 * (1.0 + scale)) {
            return Err(Error::Program("quadratic form is not symmetric".into()));
        }
        let shifted = &p + DMatrix::identity(n, n) * (1e-10 * (1.0 + scale));
        if shifted.cholesky().is_none() {
            return Err(Error::Program("quadratic form is not positive semidefinite".into()));
        }
        let support = (0..n).filter(|&i| p.row(i).iter().any(|v| *v != 0.0)).collect();
        Ok(Self { p, q: DVector::from_vec(q), r, support })
    }

    /// `sum_j (u_j^T x)^2 + linear^T x + r <= 0`; PSD by construction.
    pub fn from_squares(num_vars: usize, squares: &[Vec<(usize, f64)>], linear: &[(usize, f64)], r: f64) -> Result<Self> {
        let mut p = DMatrix::zeros(num_vars, num_vars);
        for u in squares {
            for &(i, a) in u {
                for &(j, b) in u {
                    check_index(i.max(j), num_vars)?;
                    p[(i, j)] += a * b;
                }
            }
        }
        let mut q = vec![0.0; num_vars];
        for &(i, a) in linear {
            check_index(i, num_vars)?;
            q[i] += a;
        }
        Self::new(p, q, r)
    }

    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut quad = 0.0;
        for &i in &self.support {
            let mut row = 0.0;
            for &j in &self.support {
                row += self.p[(i, j)] * x[j];
            }
            quad += x[i] * row;
        }
        quad + self.q.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.r
    }
}

/// One constraint `f(x) <= 0` of a [`SmoothConvexProgram`].
#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Affine(AffineConstraint),
    Quadratic(ConvexQuadratic),
    /// `2^x[delta] - x[zeta] <= 0`.
    Exponential { zeta: usize, delta: usize },
}

impl Constraint {
    /// `f(x)`; non-positive when satisfied.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::Affine(a) => a.coeffs.iter().map(|&(i, c)| c * x[i]).sum::<f64>() - a.rhs,
            Self::Quadratic(q) => q.value(x),
            Self::Exponential { zeta, delta } => x[*delta].exp2() - x[*zeta],
        }
    }

    /// Sparse gradient at `x`, written into `out` (cleared first).
    fn gradient(&self, x: &[f64], out: &mut Vec<(usize, f64)>) {
        out.clear();
        match self {
            Self::Affine(a) => out.extend_from_slice(&a.coeffs),
            Self::Quadratic(q) => {
                let n = q.num_vars();
                let mut g: Vec<f64> = q.q.iter().copied().collect();
                for &i in &q.support {
                    for &j in &q.support {
                        g[i] += 2.0 * q.p[(i, j)] * x[j];
                    }
                }
                out.extend((0..n).filter(|&i| g[i] != 0.0).map(|i| (i, g[i])));
            }
            Self::Exponential { zeta, delta } => {
                out.push((*delta, std::f64::consts::LN_2 * x[*delta].exp2()));
                out.push((*zeta, -1.0));
            }
        }
    }

    /// Adds `weight * Hessian(f)` to `h`.
    fn add_hessian(&self, x: &[f64], weight: f64, h: &mut DMatrix<f64>) {
        match self {
            Self::Affine(_) => {}
            Self::Quadratic(q) => {
                for &i in &q.support {
                    for &j in &q.support {
                        h[(i, j)] += 2.0 * weight * q.p[(i, j)];
                    }
                }
            }
            Self::Exponential { delta, .. } => {
                let ln2 = std::f64::consts::LN_2;
                h[(*delta, *delta)] += weight * ln2 * ln2 * x[*delta].exp2();
            }
        }
    }
}

fn check_index(i: usize, n: usize) -> Result<()> {
    if i >= n {
        return Err(Error::Program(format!("variable index {i} out of range for {n} variables")));
    }
    Ok(())
}

/// Minimize `objective^T x` subject to convex constraints `f_i(x) <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothConvexProgram {
    num_vars: usize,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    labels: Vec<String>,
}

impl SmoothConvexProgram {
    pub fn new(num_vars: usize) -> Self {
        Self { num_vars, objective: vec![0.0; num_vars], constraints: Vec::new(), labels: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Sets the minimized coefficient of variable `i`.
    pub fn set_objective(&mut self, i: usize, coeff: f64) -> Result<()> {
        check_index(i, self.num_vars)?;
        self.objective[i] = coeff;
        Ok(())
    }

    pub fn add_affine(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64, label: impl Into<String>) -> Result<()> {
        for &(i, c) in &coeffs {
            check_index(i, self.num_vars)?;
            if !c.is_finite() {
                return Err(Error::Program(format!("non-finite coefficient on x{i}")));
            }
        }
        if !rhs.is_finite() {
            return Err(Error::Program("non-finite right-hand side".into()));
        }
        self.push(Constraint::Affine(AffineConstraint { coeffs, rhs }), label);
        Ok(())
    }

    /// `lo <= x_i <= hi`; infinite ends are skipped.
    pub fn add_bounds(&mut self, i: usize, lo: f64, hi: f64, label: &str) -> Result<()> {
        if lo.is_finite() {
            self.add_affine(vec![(i, -1.0)], -lo, format!("{label} lower"))?;
        }
        if hi.is_finite() {
            self.add_affine(vec![(i, 1.0)], hi, format!("{label} upper"))?;
        }
        Ok(())
    }

    pub fn add_quadratic(&mut self, q: ConvexQuadratic, label: impl Into<String>) -> Result<()> {
        if q.num_vars() != self.num_vars {
            return Err(Error::Program(format!(
                "quadratic over {} variables in a program with {}",
                q.num_vars(),
                self.num_vars
            )));
        }
        self.push(Constraint::Quadratic(q), label);
        Ok(())
    }

    /// `x[zeta] >= 2^x[delta]`.
    pub fn add_exponential(&mut self, zeta: usize, delta: usize, label: impl Into<String>) -> Result<()> {
        check_index(zeta, self.num_vars)?;
        check_index(delta, self.num_vars)?;
        self.push(Constraint::Exponential { zeta, delta }, label);
        Ok(())
    }

    fn push(&mut self, c: Constraint, label: impl Into<String>) {
        self.constraints.push(c);
        self.labels.push(label.into());
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Largest `f_i(x)` (positive means violated); `-inf` with no constraints.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints.iter().map(|c| c.value(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Count of exponential constraints.
    pub fn num_exponential(&self) -> usize {
        self.constraints.iter().filter(|c| matches!(c, Constraint::Exponential { .. })).count()
    }

    /// Plain-text canonical form, one constraint per line.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "variables {}", self.num_vars);
        let obj: Vec<(usize, f64)> = self.objective.iter().copied().enumerate().filter(|(_, c)| *c != 0.0).collect();
        let _ = writeln!(s, "minimize {}", linear_text(&obj));
        for (c, label) in self.constraints.iter().zip(&self.labels) {
            match c {
                Constraint::Affine(a) => {
                    let _ = writeln!(s, "affine [{label}] {} <= {:e}", linear_text(&a.coeffs), a.rhs);
                }
                Constraint::Quadratic(q) => {
                    let mut terms = Vec::new();
                    for &i in &q.support {
                        for &j in &q.support {
                            if j >= i && q.p[(i, j)] != 0.0 {
                                let coeff = if i == j { q.p[(i, j)] } else { 2.0 * q.p[(i, j)] };
                                terms.push(format!("{coeff:e}*x{i}*x{j}"));
                            }
                        }
                    }
                    let lin: Vec<(usize, f64)> = q.q.iter().copied().enumerate().filter(|(_, c)| *c != 0.0).collect();
                    let _ = writeln!(
                        s,
                        "quadratic [{label}] {} + {} + {:e} <= 0",
                        if terms.is_empty() { "0".to_string() } else { terms.join(" + ") },
                        linear_text(&lin),
                        q.r
                    );
                }
                Constraint::Exponential { zeta, delta } => {
                    let _ = writeln!(s, "exponential [{label}] 2^x{delta} - x{zeta} <= 0");
                }
            }
        }
        s
    }
}

fn linear_text(terms: &[(usize, f64)]) -> String {
    if terms.is_empty() {
        return "0".into();
    }
    terms.iter().map(|(i, c)| format!("{c:e}*x{i}")).collect::<Vec<_>>().join(" + ")
}
