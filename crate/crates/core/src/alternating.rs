//! Outer alternation between the beamforming subproblem and the
//! compression-ratio / DC-bias subproblem.

use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::dinkelbach::{optimal_dc_bias, run_dinkelbach, DinkelbachOptions, LambdaRow};
use crate::error::{Error, Result};
use crate::model::{check_feasibility, energy_efficiency, evaluate, Design, EvalReport, Problem, RateModel};
use crate::sca::{init_point, run_sca, ScaOptions, ScaTraceRow};

/// Post-hoc violations larger than this abort the solve.
pub const OUTPUT_FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub sca: ScaOptions,
    pub dinkelbach: DinkelbachOptions,
    /// Fractional change in energy efficiency that stops the outer loop.
    pub tol: f64,
    pub max_outer: usize,
    /// Number of DC-bias levels screened by [`initialize`].
    pub dc_candidates: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            sca: ScaOptions::default(),
            dinkelbach: DinkelbachOptions::default(),
            tol: 1e-4,
            max_outer: 30,
            dc_candidates: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
}

impl SolveStatus {
    pub fn tag(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max-iterations",
        }
    }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRow {
    pub iter: usize,
    /// Energy efficiency after the beamforming step.
    pub v_s1: f64,
    /// After the compression-ratio / DC-bias step.
    pub v_s2: f64,
    pub v_obj: f64,
    pub sca_iterations: usize,
    pub dinkelbach_iterations: usize,
    pub dca_iterations: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    /// Energy efficiency of the initial design.
    pub v_init: f64,
    pub rows: Vec<OuterRow>,
    pub status: SolveStatus,
    pub sca: Vec<Vec<ScaTraceRow>>,
    pub lambda: Vec<Vec<LambdaRow>>,
    pub seconds: f64,
}

impl SolveTrace {
    pub fn outer_iterations(&self) -> usize {
        self.rows.len()
    }

    /// `V_obj` sequence with the initial value first.
    pub fn objective_sequence(&self) -> Vec<f64> {
        std::iter::once(self.v_init).chain(self.rows.iter().map(|r| r.v_obj)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub design: Design,
    pub report: EvalReport,
    pub trace: SolveTrace,
}

/// Maximum-ratio start with no compression. Each screened DC bias `B` in
/// `(I_L, (I_L + I_U) / 2]` yields a start whose own bias is then lowered to
/// the closed-form value; the start whose single beamforming + ratio pass
/// reaches the highest energy efficiency is returned.
///
/// When no uncompressed start exists (unicast schemes whose private streams
/// cannot carry knowledge plus full demand) the screen is repeated with the
/// ratios lowered step by step toward their minimum; the first level that
/// admits a start wins.
pub fn initialize(problem: &Problem, model: &RateModel, opts: &SolverOptions) -> Result<Design> {
    let k = problem.num_users();
    let first = screen(problem, model, &vec![1.0; k], opts);
    let e = match first {
        Err(e) if e.is_infeasible_config() && !model.fixed_rho => e,
        r => return r,
    };
    let rho_min = problem.rho_min();
    for j in 1..=RATIO_LEVELS {
        let t = j as f64 / RATIO_LEVELS as f64;
        let rho: Vec<f64> = rho_min.iter().map(|m| 1.0 - (1.0 - m) * t).collect();
        match screen(problem, model, &rho, opts) {
            Ok(d) => {
                debug!("uncompressed start unavailable ({e}); started at ratios {rho:?}");
                return Ok(d);
            }
            Err(e2) if e2.is_infeasible_config() => continue,
            Err(e2) => return Err(e2),
        }
    }
    Err(e)
}

/// Compression levels tried by [`initialize`] after the uncompressed one.
const RATIO_LEVELS: usize = 8;

fn screen(problem: &Problem, model: &RateModel, rho: &[f64], opts: &SolverOptions) -> Result<Design> {
    let (i_l, i_u) = problem.qos.drive_current;
    let levels = opts.dc_candidates.max(1);
    let mut best: Option<(f64, Design)> = None;
    let mut first_err = None;
    for j in 1..=levels {
        let bias = i_l + 0.5 * (i_u - i_l) * j as f64 / levels as f64;
        let start = match start_at(problem, model, rho, bias) {
            Ok(d) => d,
            Err(e) if e.is_infeasible_config() => {
                first_err.get_or_insert(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let score = match one_pass(problem, model, &start, opts) {
            Ok(v) => v,
            Err(e) if e.is_infeasible_config() => {
                first_err.get_or_insert(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        debug!("initial DC bias {bias:.4}: start {:.6e}, one pass {score:.6e}", start.dc_bias);
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, start));
        }
    }
    match (best, first_err) {
        (Some((_, d)), _) => Ok(d),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::Internal("no DC bias level screened".into())),
    }
}

fn start_at(problem: &Problem, model: &RateModel, rho: &[f64], bias: f64) -> Result<Design> {
    let mut d = init_point(problem, model, rho, bias)?;
    d.dc_bias = optimal_dc_bias(&d.beams, rho, problem)?;
    if let Some(v) = check_feasibility(&d, problem, model, 1e-9)?.first() {
        return Err(Error::NoFeasibleStart { binding: v.id.to_string(), detail: format!("residual {:.3e}", v.residual) });
    }
    Ok(d)
}

fn one_pass(problem: &Problem, model: &RateModel, start: &Design, opts: &SolverOptions) -> Result<f64> {
    let sca = run_sca(problem, model, start, &opts.sca)?;
    let (design, _, _) = ratio_step(problem, model, &sca.design, opts)?;
    energy_efficiency(&design, problem, model)
}

/// Closed-form DC bias plus, when ratios are free, the Dinkelbach loop.
fn ratio_step(problem: &Problem, model: &RateModel, design: &Design, opts: &SolverOptions) -> Result<(Design, Vec<LambdaRow>, (usize, usize))> {
    if model.fixed_rho {
        let dc_bias = optimal_dc_bias(&design.beams, &design.rho, problem)?;
        return Ok((Design { dc_bias, ..design.clone() }, Vec::new(), (0, 0)));
    }
    let out = run_dinkelbach(design, problem, model, &opts.dinkelbach)?;
    let next = Design { rho: out.rho, dc_bias: out.dc_bias, ..design.clone() };
    Ok((next, out.trace.clone(), (out.trace.len() - 1, out.dca_iterations)))
}

/// Runs the alternation from [`initialize`].
pub fn solve(problem: &Problem, model: &RateModel, opts: &SolverOptions) -> Result<SolveOutput> {
    let start = initialize(problem, model, opts)?;
    solve_from(problem, model, start, opts)
}

/// Runs the alternation from a given feasible design.
pub fn solve_from(problem: &Problem, model: &RateModel, start: Design, opts: &SolverOptions) -> Result<SolveOutput> {
    let clock = Instant::now();
    let v_init = energy_efficiency(&start, problem, model)?;
    let mut best = (v_init, start.clone());
    let mut current = start;
    let mut prev = v_init;
    let mut rows = Vec::new();
    let mut sca_traces = Vec::new();
    let mut lambda_traces = Vec::new();
    let mut status = SolveStatus::MaxIterations;

    for iter in 1..=opts.max_outer {
        let tick = Instant::now();
        let sca = run_sca(problem, model, &current, &opts.sca)?;
        let v_s1 = sca.energy_efficiency;
        let (mut next, lambda, (dink_iters, dca_iters)) = ratio_step(problem, model, &sca.design, opts)?;
        let mut v_s2 = energy_efficiency(&next, problem, model)?;
        let feasible = check_feasibility(&next, problem, model, 1e-9)?.is_empty();
        if v_s2 < v_s1 || !feasible {
            // a ratio step that loses ground (only possible through rounding) is discarded
            next = sca.design.clone();
            v_s2 = v_s1;
        }
        rows.push(OuterRow {
            iter,
            v_s1,
            v_s2,
            v_obj: v_s2,
            sca_iterations: sca.trace.len(),
            dinkelbach_iterations: dink_iters,
            dca_iterations: dca_iters,
            seconds: tick.elapsed().as_secs_f64(),
        });
        sca_traces.push(sca.trace);
        lambda_traces.push(lambda);
        debug!("outer {iter}: s1 {v_s1:.6e} s2 {v_s2:.6e}");
        if v_s2 > best.0 {
            best = (v_s2, next.clone());
        }
        let change = (v_s2 - prev).abs() / prev.abs().max(1e-300);
        current = next;
        prev = v_s2;
        if change < opts.tol {
            status = SolveStatus::Converged;
            break;
        }
    }
    info!("{} after {} outer iterations, EE {:.6e}", status.tag(), rows.len(), best.0);

    let design = best.1;
    let report = evaluate(&design, problem, model)?;
    let worst = check_feasibility(&design, problem, model, OUTPUT_FEASIBILITY_TOL)?;
    if let Some(v) = worst.first() {
        return Err(Error::Internal(format!("solution violates {} by {:.3e}", v.id, -v.residual)));
    }
    let trace = SolveTrace { v_init, rows, status, sca: sca_traces, lambda: lambda_traces, seconds: clock.elapsed().as_secs_f64() };
    Ok(SolveOutput { design, report, trace })
}
