//! Exhaustive grid search over single-user, one- or two-LED instances, used
//! to check the alternating solver.

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::benchmarks::Scheme;
use crate::error::{Error, Result};
use crate::model::{check_feasibility, evaluate, stream_rate, Design, EvalReport, Problem, RateModel};
use crate::semantics::overhead;

pub const BEAM_LEVELS: usize = 40;
pub const SPLIT_LEVELS: usize = 20;
pub const RATIO_LEVELS: usize = 50;

/// Config overlay for the standard tiny instance: one LED above the room
/// centre and one user half a metre off-axis.
pub fn tiny_instance() -> Value {
    json!({
        "scene": { "leds": [[2.5, 2.5, 3.0]], "users": [[2.0, 2.5, 0.0]] },
        "scenarios": { "placements": [[[2.0, 2.5, 0.0]]] }
    })
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub design: Design,
    /// Evaluated by the regular model at the argmax.
    pub report: EvalReport,
    pub grid_points: u64,
    pub feasible_points: u64,
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Clone, Copy)]
struct Best {
    ee: f64,
    beams: usize,
    split: usize,
    ratio: usize,
}

/// Rate-splitting optimum over the grid: every beam entry on
/// `BEAM_LEVELS` points of `[0, (I_U - I_L) / 2]`, the user's common share on
/// `SPLIT_LEVELS` points of the residual common capacity, the ratio on
/// `RATIO_LEVELS` points of `[rho_min, 1]`, and the DC bias at its
/// closed-form value.
pub fn oracle_solve(problem: &Problem) -> Result<OracleResult> {
    let (k, n) = (problem.num_users(), problem.num_leds());
    if k != 1 || n > 2 {
        return Err(Error::Config(vec![format!("oracle handles one user and at most two LEDs (got {k} users, {n} LEDs)")]));
    }
    let q = &problem.qos;
    let (i_l, i_u) = q.drive_current;
    let levels = grid(0.0, 0.5 * (i_u - i_l), BEAM_LEVELS);
    let rho_grid = grid(problem.profiles[0].rho_min, 1.0, RATIO_LEVELS);
    let comp: Vec<f64> = rho_grid.iter().map(|&r| overhead(&problem.profiles[0], r).map(|o| problem.eta * o)).collect::<Result<_>>()?;
    let h = problem.channel.row(0);
    let (sigma2, r0, r_min) = (q.noise_power[0], q.knowledge_rate_min, q.user_rate_min[0]);
    let dims = 2 * n;
    let total = BEAM_LEVELS.pow(dims as u32);

    let decode = |mut idx: usize| -> Vec<Vec<f64>> {
        let mut beams = vec![vec![0.0; n]; 2];
        for slot in 0..dims {
            beams[slot / n][slot % n] = levels[idx % BEAM_LEVELS];
            idx /= BEAM_LEVELS;
        }
        beams
    };

    let (best, feasible) = (0..total)
        .into_par_iter()
        .map(|idx| {
            let beams = decode(idx);
            let mut best: Option<Best> = None;
            let mut feasible = 0u64;
            let col = (0..n).map(|i| beams[0][i].abs() + beams[1][i].abs()).fold(0.0, f64::max);
            let bias = col + i_l;
            if bias + col > i_u + 1e-12 {
                return (best, feasible);
            }
            let c = stream_rate(h, &beams, 0, &[1], sigma2);
            let r = stream_rate(h, &beams, 1, &[], sigma2);
            if c < r0 {
                return (best, feasible);
            }
            let fixed = beams.iter().flatten().map(|w| w * w).sum::<f64>() + n as f64 * q.led_voltage * bias + q.circuit_power;
            for (js, a1) in grid(0.0, c - r0, SPLIT_LEVELS).into_iter().enumerate() {
                for (jr, &rho) in rho_grid.iter().enumerate() {
                    let power = comp[jr] + fixed;
                    if power > q.power_max || (a1 + r) / rho < r_min {
                        continue;
                    }
                    feasible += 1;
                    let ee = (a1 + r) / rho / power;
                    if best.is_none_or(|b| ee > b.ee) {
                        best = Some(Best { ee, beams: idx, split: js, ratio: jr });
                    }
                }
            }
            (best, feasible)
        })
        .reduce(
            || (None, 0),
            |(a, fa), (b, fb)| {
                // ties go to the lower grid index so the result is order independent
                let pick = match (a, b) {
                    (Some(x), Some(y)) => {
                        let key = |v: Best| (v.beams, v.split, v.ratio);
                        Some(if y.ee > x.ee || (y.ee == x.ee && key(y) < key(x)) { y } else { x })
                    }
                    (x, None) => x,
                    (None, y) => y,
                };
                (pick, fa + fb)
            },
        );
    let best = best.ok_or_else(|| Error::Infeasible { binding: "grid".into(), detail: "no feasible grid point".into() })?;

    let beams = decode(best.beams);
    let c = stream_rate(h, &beams, 0, &[1], sigma2);
    let a1 = grid(0.0, c - r0, SPLIT_LEVELS)[best.split];
    let col = (0..n).map(|i| beams[0][i].abs() + beams[1][i].abs()).fold(0.0, f64::max);
    let design = Design { beams, dc_bias: col + i_l, common_rates: vec![r0, a1], rho: vec![rho_grid[best.ratio]] };
    let model = RateModel::new(Scheme::PscomRsma, problem, false);
    let report = evaluate(&design, problem, &model)?;
    if let Some(v) = check_feasibility(&design, problem, &model, 1e-9)?.first() {
        return Err(Error::Internal(format!("oracle argmax violates {} by {:.3e}", v.id, -v.residual)));
    }
    Ok(OracleResult { design, report, grid_points: total as u64 * (SPLIT_LEVELS * RATIO_LEVELS) as u64, feasible_points: feasible })
}
