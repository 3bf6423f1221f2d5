//! Compression-ratio and DC-bias subproblem at fixed beams and common rates:
//! closed-form DC bias, then a Dinkelbach loop over `f(rho) / g(rho)` whose
//! parametric problems are solved by a difference-of-convex iteration.
//!
//! `f(rho) = sum_k p_k / rho_k` with payload `p_k = a_k + r_k` (less any
//! unicast knowledge rate) and `g(rho) = eps4 + eta sum_k Q_k(rho_k)`.

use std::io::Write;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::kernel::{solve_lp, LinearConstraint, LinearRelation, SolveStatus};
use crate::model::{user_rates, Design, Problem, RateModel};
use crate::semantics::{computation_power, CompressionProfile};

#[derive(Debug, Clone, PartialEq)]
pub struct DinkelbachOptions {
    pub tol: f64,
    pub max_outer: usize,
    pub max_dca: usize,
}

impl Default for DinkelbachOptions {
    fn default() -> Self {
        Self { tol: 1e-4, max_outer: 100, max_dca: 100 }
    }
}

/// Smallest DC bias that keeps every LED above `I_L`:
/// `max_i sum_l |w_{l,i}| + I_L`. Fails when the interval left by the upper
/// drive current and the power budget is empty.
pub fn optimal_dc_bias(beams: &[Vec<f64>], rho: &[f64], problem: &Problem) -> Result<f64> {
    let (i_l, i_u) = problem.qos.drive_current;
    let n = problem.num_leds();
    let colmax = (0..n)
        .map(|i| beams.iter().map(|b| b[i].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let lower = colmax + i_l;
    let p_ac: f64 = beams.iter().flatten().map(|w| w * w).sum();
    let eps3 = p_ac + problem.qos.circuit_power;
    let p_comp = computation_power(&problem.profiles, rho, problem.eta)?;
    let by_current = i_u - colmax;
    let by_power = (problem.qos.power_max - eps3 - p_comp) / (n as f64 * problem.qos.led_voltage);
    let slack = 1e-12 * (1.0 + lower.abs());
    if lower > by_current + slack {
        return Err(Error::Infeasible {
            binding: "clipping".into(),
            detail: format!("DC bias must be at least {lower} A but at most {by_current} A"),
        });
    }
    if lower > by_power + slack {
        return Err(Error::Infeasible {
            binding: "power_budget".into(),
            detail: format!("DC bias must be at least {lower} A but the budget allows {by_power} A"),
        });
    }
    Ok(lower)
}

pub fn f_value(rho: &[f64], payload: &[f64]) -> f64 {
    rho.iter().zip(payload).map(|(r, p)| p / r).sum()
}

pub fn g_value(rho: &[f64], profiles: &[CompressionProfile], eta: f64, eps4: f64) -> Result<f64> {
    Ok(eps4 + computation_power(profiles, rho, eta)?)
}

/// `-p_k / rho_k^2` per user.
pub fn grad_f(rho: &[f64], payload: &[f64]) -> Vec<f64> {
    rho.iter().zip(payload).map(|(r, p)| -p / (r * r)).collect()
}

/// Data of the parametric compression-ratio problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioProblem {
    pub payload: Vec<f64>,
    pub profiles: Vec<CompressionProfile>,
    pub eta: f64,
    pub eps4: f64,
    /// Budget left for computation power.
    pub eps5: f64,
    pub rate_min: Vec<f64>,
}

impl RatioProblem {
    /// `[rho_min, min(1, p_k / R_k)]` per user.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.profiles
            .iter()
            .zip(&self.payload)
            .zip(&self.rate_min)
            .map(|((prof, p), r)| {
                let cap = if *r > 0.0 { (p / r).min(1.0) } else { 1.0 };
                (prof.rho_min, cap.max(prof.rho_min))
            })
            .collect()
    }

    pub fn f(&self, rho: &[f64]) -> f64 {
        f_value(rho, &self.payload)
    }

    pub fn g(&self, rho: &[f64]) -> Result<f64> {
        g_value(rho, &self.profiles, self.eta, self.eps4)
    }

    /// `lambda g(rho) - f(rho)`.
    pub fn objective(&self, lambda: f64, rho: &[f64]) -> Result<f64> {
        Ok(lambda * self.g(rho)? - self.f(rho))
    }
}

/// One linearized step: minimize `lambda g(rho) - f(rho_j) - grad f(rho_j)^T (rho - rho_j)`
/// as an LP with an epigraph variable per overhead curve.
pub fn dca_step(lambda: f64, rho_j: &[f64], prob: &RatioProblem) -> Result<Vec<f64>> {
    let k = rho_j.len();
    let grad = grad_f(rho_j, &prob.payload);
    // variables: rho_0..rho_{K-1}, q_0..q_{K-1}
    let mut c = vec![0.0; 2 * k];
    for u in 0..k {
        c[u] = -grad[u];
        c[k + u] = lambda * prob.eta;
    }
    let mut cons = Vec::new();
    for (u, prof) in prob.profiles.iter().enumerate() {
        for s in &prof.segments {
            cons.push(LinearConstraint::new(vec![(u, s.slope), (k + u, -1.0)], LinearRelation::Le, -s.intercept));
        }
    }
    cons.push(LinearConstraint::new((0..k).map(|u| (k + u, prob.eta)).collect(), LinearRelation::Le, prob.eps5));
    let mut bounds = prob.bounds();
    bounds.extend(std::iter::repeat_n((0.0, f64::INFINITY), k));
    let res = solve_lp(&c, &cons, &bounds)?;
    if res.status != SolveStatus::Optimal {
        return Err(Error::Internal(format!("compression-ratio LP returned {:?}", res.status)));
    }
    let rho = res.point[..k]
        .iter()
        .zip(prob.bounds())
        .map(|(r, (lo, hi))| r.clamp(lo, hi))
        .collect();
    Ok(rho)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcaOutput {
    pub rho: Vec<f64>,
    /// True objective `lambda g - f` at the start and after every step.
    pub objectives: Vec<f64>,
    pub converged: bool,
}

/// Repeats [`dca_step`] from `rho0` until the objective settles.
pub fn run_dca(lambda: f64, rho0: &[f64], prob: &RatioProblem, opts: &DinkelbachOptions) -> Result<DcaOutput> {
    let mut rho = rho0.to_vec();
    let mut obj = prob.objective(lambda, &rho)?;
    let mut objectives = vec![obj];
    for _ in 0..opts.max_dca {
        let next = dca_step(lambda, &rho, prob)?;
        let next_obj = prob.objective(lambda, &next)?;
        if next_obj > obj {
            // only rounding can push the objective up; keep the better point
            return Ok(DcaOutput { rho, objectives, converged: true });
        }
        // the objective sits near zero once lambda is accurate, so measure
        // changes against the size of its terms
        let scale = obj.abs().max(lambda * prob.g(&rho)?).max(1e-12);
        let done = (obj - next_obj) <= opts.tol * scale;
        rho = next;
        obj = next_obj;
        objectives.push(obj);
        if done {
            return Ok(DcaOutput { rho, objectives, converged: true });
        }
    }
    warn!("DCA stopped at the iteration cap of {}", opts.max_dca);
    Ok(DcaOutput { rho, objectives, converged: false })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaRow {
    pub outer_iter: usize,
    pub lambda: f64,
    pub f: f64,
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DinkelbachOutput {
    pub rho: Vec<f64>,
    pub dc_bias: f64,
    /// `lambda = f / g` at the incoming ratios (row 0) and after each outer step.
    pub trace: Vec<LambdaRow>,
    /// `f(rho*) - lambda g(rho*)` for the last parametric problem.
    pub final_gap: f64,
    pub final_g: f64,
    pub dca_iterations: usize,
    /// Every DCA objective sequence, one per outer iteration.
    pub dca_objectives: Vec<Vec<f64>>,
    pub converged: bool,
}

/// Payload `a_k + r_k` (minus unicast knowledge) per user at fixed beams.
pub fn payloads(design: &Design, problem: &Problem, model: &RateModel) -> Vec<f64> {
    let (_, private) = user_rates(design, problem, model);
    (0..problem.num_users())
        .map(|k| {
            let a_k = if model.has_common { design.common_rates[k + 1] } else { 0.0 };
            model.payload(a_k, private[k])
        })
        .collect()
}

/// Ratio problem at fixed beams and common rates with the DC bias at `dc_bias`.
pub fn ratio_problem(design: &Design, problem: &Problem, model: &RateModel, dc_bias: f64) -> RatioProblem {
    let eps3 = design.ac_power() + problem.qos.circuit_power;
    let eps4 = problem.num_leds() as f64 * problem.qos.led_voltage * dc_bias + eps3;
    RatioProblem {
        payload: payloads(design, problem, model),
        profiles: problem.profiles.clone(),
        eta: problem.eta,
        eps4,
        eps5: problem.qos.power_max - eps4,
        rate_min: problem.qos.user_rate_min.clone(),
    }
}

/// DC bias from the closed form, then Dinkelbach over the compression ratios
/// starting from `design.rho`.
pub fn run_dinkelbach(design: &Design, problem: &Problem, model: &RateModel, opts: &DinkelbachOptions) -> Result<DinkelbachOutput> {
    let dc_bias = optimal_dc_bias(&design.beams, &design.rho, problem)?;
    let prob = ratio_problem(design, problem, model, dc_bias);
    let mut rho = design.rho.clone();
    let (f0, g0) = (prob.f(&rho), prob.g(&rho)?);
    let mut lambda = f0 / g0;
    let mut trace = vec![LambdaRow { outer_iter: 0, lambda, f: f0, g: g0 }];
    let mut dca_iterations = 0;
    let mut dca_objectives = Vec::new();
    let mut final_gap = 0.0;
    let mut final_g = g0;
    let mut converged = false;
    for outer in 1..=opts.max_outer {
        let dca = run_dca(lambda, &rho, &prob, opts)?;
        dca_iterations += dca.objectives.len() - 1;
        dca_objectives.push(dca.objectives);
        rho = dca.rho;
        let (f, g) = (prob.f(&rho), prob.g(&rho)?);
        final_gap = f - lambda * g;
        final_g = g;
        let next = f / g;
        trace.push(LambdaRow { outer_iter: outer, lambda: next, f, g });
        let change = (next - lambda).abs() / lambda.abs().max(1e-300);
        lambda = next;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("Dinkelbach stopped at the iteration cap of {}", opts.max_outer);
    }
    Ok(DinkelbachOutput { rho, dc_bias, trace, final_gap, final_g, dca_iterations, dca_objectives, converged })
}

pub fn write_lambda_trace<W: Write>(rows: &[LambdaRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["outer_iter", "lambda", "f", "g"])?;
    for r in rows {
        w.write_record([r.outer_iter.to_string(), format!("{:.9e}", r.lambda), format!("{:.9e}", r.f), format!("{:.9e}", r.g)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_lambda_trace(rows: &[LambdaRow], path: &Path) -> Result<()> {
    write_lambda_trace(rows, std::fs::File::create(path)?)
}
