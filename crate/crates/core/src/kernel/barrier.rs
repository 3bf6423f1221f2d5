use nalgebra::{DMatrix, DVector};

use super::{SmoothConvexProgram, SolveResult, SolveStatus};
use crate::error::Result;

/// Log-barrier tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierOptions {
    /// Stop when `m / t <= tol * (1 + |objective|)`.
    pub tol: f64,
    /// Backtracking sufficient-decrease fraction.
    pub alpha: f64,
    /// Backtracking shrink factor.
    pub beta: f64,
    /// Barrier parameter multiplier.
    pub mu: f64,
    pub t0: f64,
    /// Centering stops when half the squared Newton decrement drops below this.
    pub newton_tol: f64,
    pub max_newton_per_center: usize,
    pub max_total_newton: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            alpha: 0.1,
            beta: 0.5,
            mu: 10.0,
            t0: 1.0,
            newton_tol: 1e-10,
            max_newton_per_center: 200,
            max_total_newton: 10_000,
        }
    }
}

/// Minimizes the program's linear objective with a two-phase barrier method.
/// The feasible set must be bounded, otherwise centering can diverge.
/// `warm_start`, when strictly feasible, skips the feasibility phase.
pub fn solve_smooth_convex(prog: &SmoothConvexProgram, warm_start: Option<&[f64]>, tol: f64) -> Result<SolveResult> {
    solve_smooth_convex_with(prog, warm_start, &BarrierOptions { tol, ..BarrierOptions::default() })
}

pub fn solve_smooth_convex_with(
    prog: &SmoothConvexProgram,
    warm_start: Option<&[f64]>,
    opts: &BarrierOptions,
) -> Result<SolveResult> {
    let n = prog.num_vars();
    let x0: Vec<f64> = match warm_start {
        Some(w) if w.len() == n && w.iter().all(|v| v.is_finite()) => w.to_vec(),
        _ => vec![0.0; n],
    };
    let mut iterations = 0;
    let mut phase1_value = None;

    let start = if prog.max_violation(&x0) < 0.0 {
        x0
    } else {
        let s0 = prog.max_violation(&x0).max(0.0) + 1.0;
        let mut y = x0;
        y.push(s0);
        let phase1 = Barrier { prog, phase1: true };
        let out = phase1.run(y, opts, &mut iterations, true);
        let s = *out.point.last().expect("slack present");
        phase1_value = Some(s);
        if s >= 0.0 {
            let status = if out.converged { SolveStatus::Infeasible } else { SolveStatus::MaxIterations };
            let mut point = out.point;
            point.pop();
            return Ok(SolveResult {
                status,
                objective: prog.objective_value(&point),
                point,
                iterations,
                duality_measure: out.duality_measure,
                path_objectives: Vec::new(),
                phase1_value,
            });
        }
        let mut x = out.point;
        x.pop();
        x
    };

    let phase2 = Barrier { prog, phase1: false };
    let out = phase2.run(start, opts, &mut iterations, false);
    let status = if out.converged { SolveStatus::Optimal } else { SolveStatus::MaxIterations };
    Ok(SolveResult {
        status,
        objective: prog.objective_value(&out.point),
        point: out.point,
        iterations,
        duality_measure: out.duality_measure,
        path_objectives: out.path,
        phase1_value,
    })
}

struct Barrier<'a> {
    prog: &'a SmoothConvexProgram,
    /// Adds a shared slack `s` (last variable): minimize `s` subject to
    /// `f_i(x) <= s` and `s >= -1`.
    phase1: bool,
}

struct RunOutput {
    point: Vec<f64>,
    converged: bool,
    duality_measure: f64,
    path: Vec<f64>,
}

impl Barrier<'_> {
    fn dim(&self) -> usize {
        self.prog.num_vars() + usize::from(self.phase1)
    }

    fn num_constraints(&self) -> usize {
        self.prog.constraints().len() + usize::from(self.phase1)
    }

    fn objective(&self, y: &[f64]) -> f64 {
        if self.phase1 {
            y[y.len() - 1]
        } else {
            self.prog.objective_value(y)
        }
    }

    /// Constraint values `f_i(y)`; all must be negative inside the domain.
    fn values(&self, y: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let x = &y[..self.prog.num_vars()];
        let s = if self.phase1 { y[y.len() - 1] } else { 0.0 };
        out.extend(self.prog.constraints().iter().map(|c| c.value(x) - s));
        if self.phase1 {
            out.push(-1.0 - s);
        }
    }

    /// `t * objective - sum log(-f_i)`, or `+inf` outside the domain.
    fn merit(&self, y: &[f64], t: f64, buf: &mut Vec<f64>) -> f64 {
        self.values(y, buf);
        if buf.iter().any(|v| !(*v < 0.0)) {
            return f64::INFINITY;
        }
        t * self.objective(y) - buf.iter().map(|v| (-v).ln()).sum::<f64>()
    }

    fn run(&self, mut y: Vec<f64>, opts: &BarrierOptions, total: &mut usize, stop_when_negative: bool) -> RunOutput {
        let m = self.num_constraints() as f64;
        let mut t = opts.t0;
        let mut path = Vec::new();
        loop {
            let done = self.center(&mut y, t, opts, total, stop_when_negative);
            let obj = self.objective(&y);
            path.push(obj);
            let gap = m / t;
            if stop_when_negative && (y[y.len() - 1] < 0.0 || obj - gap > 0.0) {
                // feasible point found, or the lower bound certifies infeasibility
                return RunOutput { point: y, converged: true, duality_measure: gap, path };
            }
            if gap <= opts.tol * (1.0 + obj.abs()) {
                return RunOutput { point: y, converged: true, duality_measure: gap, path };
            }
            if !done || *total >= opts.max_total_newton {
                return RunOutput { point: y, converged: false, duality_measure: gap, path };
            }
            t *= opts.mu;
        }
    }

    /// Damped Newton on the barrier merit. Returns false on iteration limits.
    fn center(&self, y: &mut Vec<f64>, t: f64, opts: &BarrierOptions, total: &mut usize, stop_when_negative: bool) -> bool {
        let n = self.dim();
        let nx = self.prog.num_vars();
        let mut vals = Vec::new();
        let mut buf = Vec::new();
        let mut grad_i = Vec::new();
        for _ in 0..opts.max_newton_per_center {
            if *total >= opts.max_total_newton {
                return false;
            }
            *total += 1;
            self.values(y, &mut vals);
            let mut g = DVector::<f64>::zeros(n);
            let mut h = DMatrix::<f64>::zeros(n, n);
            if self.phase1 {
                g[n - 1] = t;
            } else {
                for (i, c) in self.prog.objective().iter().enumerate() {
                    g[i] = t * c;
                }
            }
            let x = &y[..nx];
            for (ci, c) in self.prog.constraints().iter().enumerate() {
                let f = vals[ci];
                c.gradient(x, &mut grad_i);
                if self.phase1 {
                    grad_i.push((n - 1, -1.0));
                }
                let inv = -1.0 / f;
                for &(i, a) in &grad_i {
                    g[i] += inv * a;
                    for &(j, b) in &grad_i {
                        h[(i, j)] += inv * inv * a * b;
                    }
                }
                c.add_hessian(x, inv, &mut h);
            }
            if self.phase1 {
                // s >= -1, gradient of (-1 - s) is -1
                let inv = -1.0 / vals[vals.len() - 1];
                g[n - 1] -= inv;
                h[(n - 1, n - 1)] += inv * inv;
            }
            let Some(dy) = newton_direction(&h, &g) else { return false };
            let decrement = -g.dot(&dy);
            let f0 = self.merit(y, t, &mut buf);
            // at large t the merit carries too few significant digits to
            // resolve a smaller decrement
            let floor = 1e-13 * f0.abs().max(1.0);
            if decrement / 2.0 <= opts.newton_tol.max(floor) {
                return true;
            }
            let mut step = 1.0;
            let mut trial = vec![0.0; n];
            loop {
                for i in 0..n {
                    trial[i] = y[i] + step * dy[i];
                }
                let f1 = self.merit(&trial, t, &mut buf);
                if f1 <= f0 - opts.alpha * step * decrement {
                    break;
                }
                step *= opts.beta;
                if step < 1e-16 {
                    // no further progress is representable
                    return true;
                }
            }
            y.copy_from_slice(&trial);
            if stop_when_negative && y[n - 1] < 0.0 {
                return true;
            }
        }
        false
    }
}

/// Solves `H d = -g`, regularizing `H` when it is numerically singular.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = h.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut hr = h.clone();
        if reg > 0.0 {
            for i in 0..hr.nrows() {
                hr[(i, i)] += reg;
            }
        }
        if let Some(ch) = hr.cholesky() {
            let d = ch.solve(&(-g));
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::ConvexQuadratic;

    #[test]
    fn linear_corner() {
        // maximize x s.t. x <= 3, bounded below for a compact domain
        let mut p = SmoothConvexProgram::new(1);
        p.set_objective(0, -1.0).unwrap();
        p.add_bounds(0, -10.0, 3.0, "x").unwrap();
        let r = solve_smooth_convex(&p, None, 1e-9).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.point[0] - 3.0).abs() < 1e-7, "{:?}", r.point);
    }

    #[test]
    fn exponential_bound() {
        // maximize delta s.t. zeta >= 2^delta, zeta <= 8
        let mut p = SmoothConvexProgram::new(2);
        p.set_objective(1, -1.0).unwrap();
        p.add_exponential(0, 1, "exp").unwrap();
        p.add_bounds(0, f64::NEG_INFINITY, 8.0, "zeta").unwrap();
        p.add_bounds(1, -20.0, f64::INFINITY, "delta").unwrap();
        let r = solve_smooth_convex(&p, None, 1e-10).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.point[1] - 3.0).abs() < 1e-7, "{:?}", r.point);
    }

    #[test]
    fn least_norm_on_halfplane() {
        // minimize x^2 + y^2 s.t. x + y >= 2 via the epigraph variable z
        let mut p = SmoothConvexProgram::new(3);
        p.set_objective(2, 1.0).unwrap();
        let q = ConvexQuadratic::from_squares(3, &[vec![(0, 1.0)], vec![(1, 1.0)]], &[(2, -1.0)], 0.0).unwrap();
        p.add_quadratic(q, "epigraph").unwrap();
        p.add_affine(vec![(0, -1.0), (1, -1.0)], -2.0, "halfplane").unwrap();
        p.add_bounds(0, -10.0, 10.0, "x").unwrap();
        p.add_bounds(1, -10.0, 10.0, "y").unwrap();
        p.add_bounds(2, f64::NEG_INFINITY, 100.0, "z").unwrap();
        let r = solve_smooth_convex(&p, None, 1e-10).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal, "{r:?}");
        assert!((r.point[0] - 1.0).abs() < 1e-4 && (r.point[1] - 1.0).abs() < 1e-4, "{:?}", r.point);
        assert!((r.objective - 2.0).abs() < 1e-7);
        assert!(p.max_violation(&r.point) <= 1e-7);
        assert!(r.path_objectives.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn detects_infeasibility() {
        let mut p = SmoothConvexProgram::new(1);
        p.add_bounds(0, 2.0, 1.0, "x").unwrap();
        let r = solve_smooth_convex(&p, None, 1e-8).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
        assert!(r.phase1_value.unwrap() >= 0.0);
    }

    #[test]
    fn warm_start_skips_phase_one() {
        let mut p = SmoothConvexProgram::new(1);
        p.set_objective(0, 1.0).unwrap();
        p.add_bounds(0, 0.0, 1.0, "x").unwrap();
        let r = solve_smooth_convex(&p, Some(&[0.5]), 1e-9).unwrap();
        assert!(r.phase1_value.is_none());
        assert!(r.point[0].abs() < 1e-8);
    }
}
