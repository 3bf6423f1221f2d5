//! Acceptance suite. Every criterion prints one PASS/FAIL line to stderr
//! (bypassing the test harness capture) before asserting.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vlc_pscom::alternating::{initialize, solve, SolveStatus, SolverOptions};
use vlc_pscom::benchmarks::Scheme;
use vlc_pscom::config::{default_config_value, from_value, merge, NetworkConfig};
use vlc_pscom::dinkelbach::{f_value, grad_f, optimal_dc_bias, run_dinkelbach};
use vlc_pscom::geometry::floor_channel_map;
use vlc_pscom::harness::{run_scenarios, run_sweep, PointResult, SweepSpec};
use vlc_pscom::kernel::{
    solve_lp, solve_smooth_convex, ConvexQuadratic, LinearConstraint, LinearRelation, SmoothConvexProgram, SolveStatus as KernelStatus,
};
use vlc_pscom::model::{check_feasibility, energy_efficiency, Design, Problem, RateModel};
use vlc_pscom::oracle::{oracle_solve, tiny_instance};
use vlc_pscom::sca::{init_point, run_sca, taylor_quad_over_lin, ScaContext};
use vlc_pscom::semantics::computation_power;

/// Runs one criterion, prints its verdict line and fails the test on FAIL.
fn criterion(id: u32, name: &str, check: impl FnOnce() -> Result<String, String>) {
    let outcome = match catch_unwind(AssertUnwindSafe(check)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    };
    let line = match &outcome {
        Ok(detail) => format!("criterion {id} PASS {name}: {detail}\n"),
        Err(detail) => format!("criterion {id} FAIL {name}: {detail}\n"),
    };
    let _ = std::io::stderr().write_all(line.as_bytes());
    if let Err(detail) = outcome {
        panic!("criterion {id} ({name}) failed: {detail}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn within(t: Instant, limit: Duration) -> Result<f64, String> {
    let s = t.elapsed().as_secs_f64();
    ensure(t.elapsed() < limit, || format!("took {s:.2} s, limit {:.0} s", limit.as_secs_f64()))?;
    Ok(s)
}

fn default_cfg() -> NetworkConfig {
    from_value(&default_config_value()).unwrap()
}

fn table_problem() -> Problem {
    default_cfg().problem().unwrap()
}

#[test]
fn c1_channel_map_ratio() {
    criterion(1, "channel map dynamic range", || {
        let t = Instant::now();
        let cfg = default_cfg();
        let map = floor_channel_map(&cfg.scene, &cfg.optical, 0.1).map_err(|e| e.to_string())?;
        let ratio = map.dynamic_range();
        let secs = within(t, Duration::from_secs(5))?;
        ensure((2.5..=4.5).contains(&ratio), || format!("max/min {ratio:.4} outside [2.5, 4.5]"))?;
        Ok(format!("max/min {ratio:.4} in {secs:.2} s"))
    });
}

/// Random feasible design: a start at a random bias and random ratios with
/// its common-rate split scaled down at random, kept only when feasible at
/// the closed-form bias.
fn random_feasible(rng: &mut ChaCha8Rng, p: &Problem, m: &RateModel) -> Design {
    let (i_l, i_u) = p.qos.drive_current;
    for _ in 0..1000 {
        let rho: Vec<f64> = p.rho_min().iter().map(|&lo| rng.random_range(lo..=1.0)).collect();
        let bias = rng.random_range(i_l + 0.02 * (i_u - i_l)..=0.5 * (i_l + i_u));
        let Ok(mut d) = init_point(p, m, &rho, bias) else { continue };
        for a in d.common_rates.iter_mut().skip(1) {
            *a *= rng.random_range(0.5..=1.0);
        }
        let Ok(b_star) = optimal_dc_bias(&d.beams, &d.rho, p) else { continue };
        d.dc_bias = b_star;
        if check_feasibility(&d, p, m, 1e-9).unwrap().is_empty() {
            return d;
        }
    }
    panic!("no random feasible design found");
}

#[test]
fn c2_closed_form_dc_bias() {
    criterion(2, "closed-form DC bias dominates its interval", || {
        let t = Instant::now();
        let p = table_problem();
        let m = RateModel::new(Scheme::PscomRsma, &p, false);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (i_l, i_u) = p.qos.drive_current;
        let n = p.num_leds() as f64;
        let mut worst_margin = f64::INFINITY;
        for case in 0..20 {
            let d = random_feasible(&mut rng, &p, &m);
            let colmax = d.max_column_sum();
            let p_comp = computation_power(&p.profiles, &d.rho, p.eta).unwrap();
            let lo = colmax + i_l;
            let hi = (i_u - colmax).min((p.qos.power_max - p_comp - d.ac_power() - p.qos.circuit_power) / (n * p.qos.led_voltage));
            ensure(hi > lo, || format!("case {case}: empty bias interval [{lo}, {hi}]"))?;
            let b_star = optimal_dc_bias(&d.beams, &d.rho, &p).unwrap();
            ensure((b_star - lo).abs() <= 1e-12, || format!("case {case}: closed form {b_star} vs lower end {lo}"))?;
            let ee_star = energy_efficiency(&d, &p, &m).unwrap();
            for j in 0..100 {
                let b = lo + (hi - lo) * j as f64 / 99.0;
                let ee = energy_efficiency(&Design { dc_bias: b, ..d.clone() }, &p, &m).unwrap();
                if j == 0 {
                    ensure(ee_star >= ee - 1e-9, || format!("case {case}: endpoint EE {ee} above {ee_star}"))?;
                } else {
                    ensure(ee_star > ee, || format!("case {case}: EE {ee} at B={b} not below {ee_star}"))?;
                    worst_margin = worst_margin.min(ee_star - ee);
                }
            }
        }
        let secs = within(t, Duration::from_secs(10))?;
        Ok(format!("20 designs x 100 biases, smallest interior margin {worst_margin:.3e}, {secs:.2} s"))
    });
}

#[test]
fn c3_monotone_convergence() {
    criterion(3, "outer loop monotone and converged", || {
        let t = Instant::now();
        let cfg = default_cfg();
        let p = cfg.problem().unwrap();
        let m = RateModel::new(Scheme::PscomRsma, &p, false);
        let out = solve(&p, &m, &cfg.solver.options).map_err(|e| e.to_string())?;
        let tr = &out.trace;
        let mut prev = tr.v_init;
        for r in &tr.rows {
            let tol = 1e-6 * prev.abs().max(1e-12);
            ensure(r.v_s1 >= prev - tol, || format!("iter {}: V_s1 {} below previous {prev}", r.iter, r.v_s1))?;
            ensure(r.v_s2 >= r.v_s1 - tol, || format!("iter {}: V_s2 {} below V_s1 {}", r.iter, r.v_s2, r.v_s1))?;
            ensure(r.v_obj >= prev - tol, || format!("iter {}: V_obj {} below previous {prev}", r.iter, r.v_obj))?;
            prev = r.v_obj;
        }
        let seq = tr.objective_sequence();
        let n = seq.len();
        let last_change = if n >= 2 { (seq[n - 1] - seq[n - 2]).abs() / seq[n - 2].abs() } else { f64::INFINITY };
        ensure(tr.status == SolveStatus::Converged, || format!("status {}", tr.status.tag()))?;
        ensure(tr.outer_iterations() <= 30, || format!("{} outer iterations", tr.outer_iterations()))?;
        ensure(last_change < 1e-4, || format!("final fractional change {last_change:.3e}"))?;
        let secs = within(t, Duration::from_secs(60))?;
        Ok(format!(
            "EE {:.6} after {} outer iterations, final change {last_change:.2e}, {secs:.2} s",
            out.report.energy_efficiency,
            tr.outer_iterations()
        ))
    });
}

#[test]
fn c4_oracle_equivalence() {
    criterion(4, "alternating solver vs grid oracle on the tiny instance", || {
        let t = Instant::now();
        let mut raw = default_config_value();
        merge(&mut raw, &tiny_instance());
        let cfg = from_value(&raw).unwrap();
        let p = cfg.problem().unwrap();
        let m = RateModel::new(Scheme::PscomRsma, &p, false);
        let alg = solve(&p, &m, &cfg.solver.options).map_err(|e| e.to_string())?;
        let oracle = oracle_solve(&p).map_err(|e| e.to_string())?;
        let (a, o) = (alg.report.energy_efficiency, oracle.report.energy_efficiency);
        let residual = alg.report.max_violation();
        ensure(residual <= 1e-6, || format!("solver output violates constraints by {residual:.3e}"))?;
        ensure(a >= 0.95 * o, || format!("solver EE {a:.6} below 0.95 x oracle EE {o:.6}"))?;
        let secs = within(t, Duration::from_secs(120))?;
        Ok(format!("solver {a:.6} / oracle {o:.6} = {:.4}, residual {residual:.1e}, {secs:.2} s", a / o))
    });
}

#[test]
fn c5_dinkelbach_properties() {
    criterion(5, "Dinkelbach trace, final gap and gradient", || {
        let p = table_problem();
        let m = RateModel::new(Scheme::PscomRsma, &p, false);
        let opts = SolverOptions::default();
        let start = initialize(&p, &m, &opts).map_err(|e| e.to_string())?;
        let after_sca = run_sca(&p, &m, &start, &opts.sca).map_err(|e| e.to_string())?.design;
        let mut worst_gap = 0.0f64;
        for (label, d) in [("start", &start), ("after beamforming", &after_sca)] {
            let out = run_dinkelbach(d, &p, &m, &opts.dinkelbach).map_err(|e| e.to_string())?;
            for w in out.trace.windows(2) {
                ensure(w[1].lambda >= w[0].lambda, || format!("{label}: lambda fell from {} to {}", w[0].lambda, w[1].lambda))?;
            }
            let rel = out.final_gap.abs() / out.final_g;
            ensure(rel <= 1e-3, || format!("{label}: |f - lambda g| = {:.3e} exceeds 1e-3 g", out.final_gap.abs()))?;
            worst_gap = worst_gap.max(rel);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let k = rng.random_range(1..=4);
            let rho: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..=1.0)).collect();
            let payload: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..=10.0)).collect();
            let g = grad_f(&rho, &payload);
            for i in 0..k {
                let (mut up, mut dn) = (rho.clone(), rho.clone());
                up[i] += h;
                dn[i] -= h;
                let fd = (f_value(&up, &payload) - f_value(&dn, &payload)) / (2.0 * h);
                let err = (fd - g[i]).abs() / g[i].abs();
                worst = worst.max(err);
                ensure(err <= 1e-5, || format!("gradient {} vs finite difference {fd} at {rho:?}", g[i]))?;
            }
        }
        Ok(format!("worst relative gap {worst_gap:.2e}, worst gradient error {worst:.2e} on 100 points"))
    });
}

#[test]
fn c6_taylor_minorants() {
    criterion(6, "Taylor minorants under-estimate", || {
        let p = table_problem();
        let k_users = p.num_users();
        let ctx_model = RateModel::new(Scheme::PscomRsma, &p, false);
        let ctx = ScaContext::new(&p, &ctx_model, &vec![1.0; k_users], 0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let beams = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..=k_users).map(|_| (0..p.num_leds()).map(|_| rng.random_range(-ctx.eps2..=ctx.eps2)).collect()).collect()
        };
        let below = |x0: f64, y0: f64, x: f64, y: f64| -> Result<(), String> {
            let t = taylor_quad_over_lin(x0, y0).map_err(|e| e.to_string())?;
            let truth = x * x / y;
            ensure(t.eval(x, y) <= truth + 1e-12 * (1.0 + truth.abs()), || {
                format!("minorant {} above {truth} at ({x}, {y}) around ({x0}, {y0})", t.eval(x, y))
            })
        };

        for _ in 0..1000 {
            // alpha^2 / beta
            let (a0, b0) = (rng.random_range(0.0..=10.0), rng.random_range(1e-3..=20.0));
            let (a, b) = (rng.random_range(0.0..=10.0), rng.random_range(1e-3..=20.0));
            below(a0, b0, a, b)?;
        }
        // common stream: |h_k^T w_0|^2 over the private-stream interference
        for _ in 0..1000 {
            let k = rng.random_range(0..k_users);
            let h = &ctx.h_norm[k];
            let (w0, w) = (beams(&mut rng), beams(&mut rng));
            let mu = |w: &[Vec<f64>]| (1..=k_users).map(|l| dot(h, &w[l]).powi(2)).sum::<f64>() + 1.0;
            let slack = rng.random_range(0.0..=5.0);
            below(dot(h, &w0[0]), mu(&w0), dot(h, &w[0]), mu(&w) + slack)?;
        }
        // private stream: |h_k^T w_k|^2 over the other private streams
        for _ in 0..1000 {
            let k = rng.random_range(0..k_users);
            let h = &ctx.h_norm[k];
            let (w0, w) = (beams(&mut rng), beams(&mut rng));
            let mu = |w: &[Vec<f64>]| (1..=k_users).filter(|&l| l != k + 1).map(|l| dot(h, &w[l]).powi(2)).sum::<f64>() + 1.0;
            let slack = rng.random_range(0.0..=5.0);
            below(dot(h, &w0[k + 1]), mu(&w0), dot(h, &w[k + 1]), mu(&w) + slack)?;
        }
        Ok("3 x 1000 random points, no violation".into())
    });
}

/// EE with failed points counted as zero service.
fn ee(r: &PointResult) -> f64 {
    r.energy_efficiency().unwrap_or(0.0)
}

fn series<'a>(rows: &'a [PointResult], scheme: Scheme) -> Vec<&'a PointResult> {
    rows.iter().filter(|r| r.scheme == scheme).collect()
}

fn monotone(rows: &[PointResult], param: &str, increasing: bool, schemes: &[Scheme]) -> Result<(), String> {
    for &s in schemes {
        let pts = series(rows, s);
        for w in pts.windows(2) {
            let (a, b) = (ee(w[0]), ee(w[1]));
            let tol = 1e-6 * a.abs().max(b.abs());
            let ok = if increasing { b >= a - tol } else { b <= a + tol };
            ensure(ok, || format!("{param}: {s} EE {a:.6} at {} then {b:.6} at {}", w[0].value, w[1].value))?;
        }
    }
    Ok(())
}

fn rsma_dominates(rows: &[PointResult], param: &str) -> Result<(), String> {
    for r in rows.iter().filter(|r| r.scheme == Scheme::PscomRsma) {
        let top = ee(r);
        for other in rows.iter().filter(|o| o.value == r.value && o.scheme != Scheme::PscomRsma) {
            ensure(top >= ee(other) * (1.0 - 1e-6), || {
                format!("{param}={}: pscom-rsma {top:.6} below {} {:.6}", r.value, other.scheme, ee(other))
            })?;
        }
    }
    Ok(())
}

#[test]
fn c7_trend_suite() {
    criterion(7, "sweep and scenario trends", || {
        let t = Instant::now();
        let cfg = default_cfg();
        let sweep = |param: &str, values: &[f64]| {
            let spec = SweepSpec { param: param.into(), values: values.to_vec(), schemes: Scheme::ALL.to_vec() };
            run_sweep(&cfg, &spec).map_err(|e| e.to_string())
        };
        let pscom = [Scheme::PscomRsma, Scheme::PscomSdma, Scheme::PscomNoma];
        let mut failed_points = 0;

        let rows = sweep("optical.semi_angle", &[45.0, 52.5, 60.0, 67.5, 75.0])?;
        monotone(&rows, "semi-angle", false, &Scheme::ALL)?;
        rsma_dominates(&rows, "semi-angle")?;
        failed_points += rows.iter().filter(|r| r.solution.is_none()).count();

        let rows = sweep("optical.pd_area", &[0.5, 1.0, 1.5, 2.0])?;
        monotone(&rows, "pd area", true, &Scheme::ALL)?;
        rsma_dominates(&rows, "pd area")?;
        failed_points += rows.iter().filter(|r| r.solution.is_none()).count();

        let rows = sweep("eta", &[0.5, 1.0, 1.5, 2.0])?;
        monotone(&rows, "eta", false, &pscom)?;
        let conv: Vec<f64> = series(&rows, Scheme::ConventionalRsma).into_iter().map(ee).collect();
        ensure(conv[0] > 0.0, || "conventional scheme failed on the eta sweep".into())?;
        for (i, v) in conv.iter().enumerate() {
            ensure((v - conv[0]).abs() <= 1e-9 * conv[0], || format!("eta: conventional EE {v} at point {i} differs from {}", conv[0]))?;
        }
        rsma_dominates(&rows, "eta")?;
        failed_points += rows.iter().filter(|r| r.solution.is_none()).count();

        let rows = sweep("qos.noise", &[-105.0, -100.0, -95.0, -90.0])?;
        monotone(&rows, "noise", false, &Scheme::ALL)?;
        rsma_dominates(&rows, "noise")?;
        failed_points += rows.iter().filter(|r| r.solution.is_none()).count();

        let scen = run_scenarios(&cfg).map_err(|e| e.to_string())?;
        for &u in &cfg.scenarios.led_voltage {
            let at = |s: usize| scen.iter().find(|r| r.scenario == s && r.point.value == u).map(|r| ee(&r.point)).unwrap_or(0.0);
            let (s1, s2, s3) = (at(1), at(2), at(3));
            ensure(s2 > 0.0, || format!("scenario 2 failed at U_LED={u}"))?;
            ensure(s2 >= s1 && s1 >= s3, || format!("U_LED={u}: scenario EE {s1:.6} / {s2:.6} / {s3:.6}"))?;
        }

        let secs = within(t, Duration::from_secs(15 * 60))?;
        Ok(format!("4 sweeps and {} scenario points, {failed_points} benchmark points without service, {secs:.1} s", scen.len()))
    });
}

/// Best vertex of `min c^T x` over `a_i^T x <= b_i`, by enumerating every
/// pair of constraint lines.
fn vertex_oracle(c: [f64; 2], rows: &[([f64; 2], f64)]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let ([a, b], e) = rows[i];
            let ([cc, d], f) = rows[j];
            let det = a * d - b * cc;
            if det.abs() < 1e-12 {
                continue;
            }
            let x = (e * d - b * f) / det;
            let y = (a * f - e * cc) / det;
            if rows.iter().all(|([p, q], r)| p * x + q * y <= r + 1e-9) {
                let v = c[0] * x + c[1] * y;
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
    }
    best
}

/// Two-stage grid minimum of `c^T x` over the feasible part of `[-2, 2]^2`.
fn grid_oracle(c: [f64; 2], feasible: impl Fn(f64, f64) -> bool) -> Option<f64> {
    let scan = |x0: f64, x1: f64, y0: f64, y1: f64, n: usize| {
        let mut best: Option<(f64, f64, f64)> = None;
        for i in 0..=n {
            for j in 0..=n {
                let x = x0 + (x1 - x0) * i as f64 / n as f64;
                let y = y0 + (y1 - y0) * j as f64 / n as f64;
                if feasible(x, y) {
                    let v = c[0] * x + c[1] * y;
                    if best.is_none_or(|b| v < b.0) {
                        best = Some((v, x, y));
                    }
                }
            }
        }
        best
    };
    let (_, x, y) = scan(-2.0, 2.0, -2.0, 2.0, 400)?;
    let cell = 4.0 / 400.0;
    let (v, _, _) = scan((x - 2.0 * cell).max(-2.0), (x + 2.0 * cell).min(2.0), (y - 2.0 * cell).max(-2.0), (y + 2.0 * cell).min(2.0), 400)?;
    Some(v)
}

fn kernel_examples() -> Result<(), String> {
    let opt = |r: &vlc_pscom::kernel::SolveResult, what: &str| {
        ensure(r.status == KernelStatus::Optimal, || format!("{what}: status {:?}", r.status))
    };
    let close = |a: f64, b: f64, what: &str| ensure((a - b).abs() <= 1e-6, || format!("{what}: {a} vs {b}"));

    // maximize x s.t. x <= 3
    let mut p = SmoothConvexProgram::new(1);
    p.set_objective(0, -1.0).unwrap();
    p.add_bounds(0, -10.0, 3.0, "x").unwrap();
    let r = solve_smooth_convex(&p, None, 1e-9).map_err(|e| e.to_string())?;
    opt(&r, "linear corner")?;
    close(r.point[0], 3.0, "linear corner")?;

    // maximize delta s.t. zeta >= 2^delta, zeta <= 8
    let mut p = SmoothConvexProgram::new(2);
    p.set_objective(1, -1.0).unwrap();
    p.add_exponential(0, 1, "exp").unwrap();
    p.add_bounds(0, f64::NEG_INFINITY, 8.0, "zeta").unwrap();
    p.add_bounds(1, -20.0, f64::INFINITY, "delta").unwrap();
    let r = solve_smooth_convex(&p, None, 1e-10).map_err(|e| e.to_string())?;
    opt(&r, "exponential bound")?;
    close(r.point[1], 3.0, "exponential bound")?;

    // minimize x^2 + y^2 s.t. x + y >= 2
    let mut p = SmoothConvexProgram::new(3);
    p.set_objective(2, 1.0).unwrap();
    p.add_quadratic(ConvexQuadratic::from_squares(3, &[vec![(0, 1.0)], vec![(1, 1.0)]], &[(2, -1.0)], 0.0).unwrap(), "epi").unwrap();
    p.add_affine(vec![(0, -1.0), (1, -1.0)], -2.0, "halfplane").unwrap();
    p.add_bounds(0, -10.0, 10.0, "x").unwrap();
    p.add_bounds(1, -10.0, 10.0, "y").unwrap();
    p.add_bounds(2, f64::NEG_INFINITY, 100.0, "z").unwrap();
    let r = solve_smooth_convex(&p, None, 1e-10).map_err(|e| e.to_string())?;
    opt(&r, "least norm")?;
    close(r.objective, 2.0, "least norm objective")?;
    ensure((r.point[0] - 1.0).abs() < 1e-4 && (r.point[1] - 1.0).abs() < 1e-4, || format!("least norm point {:?}", r.point))?;

    // min -rho s.t. 0.2 <= rho <= 1
    let r = solve_lp(&[-1.0], &[], &[(0.2, 1.0)]).map_err(|e| e.to_string())?;
    opt(&r, "lp box")?;
    close(r.point[0], 1.0, "lp box")?;

    // min q s.t. q >= -2 rho + 2, q >= -4 rho + 2.5, rho = 0.25
    let cons = [
        LinearConstraint::new(vec![(1, 1.0), (0, 2.0)], LinearRelation::Ge, 2.0),
        LinearConstraint::new(vec![(1, 1.0), (0, 4.0)], LinearRelation::Ge, 2.5),
        LinearConstraint::new(vec![(0, 1.0)], LinearRelation::Eq, 0.25),
    ];
    let r = solve_lp(&[0.0, 1.0], &cons, &[(0.0, 1.0), (-100.0, 100.0)]).map_err(|e| e.to_string())?;
    opt(&r, "lp epigraph")?;
    close(r.point[1], 1.5, "lp epigraph")?;

    // 2-variable LP with 3 constraints against vertex enumeration
    let rows = [([1.0, 1.0], 4.0), ([1.0, -1.0], 1.0), ([-1.0, 2.0], 2.0)];
    let c = [-1.0, -2.0];
    let cons: Vec<_> = rows.iter().map(|([a, b], r)| LinearConstraint::new(vec![(0, *a), (1, *b)], LinearRelation::Le, *r)).collect();
    let r = solve_lp(&c, &cons, &[(f64::NEG_INFINITY, f64::INFINITY); 2]).map_err(|e| e.to_string())?;
    opt(&r, "lp vertex")?;
    close(r.objective, vertex_oracle(c, &rows).unwrap(), "lp vertex")?;
    Ok(())
}

#[test]
fn c8_convex_kernel() {
    criterion(8, "convex kernel examples and random oracles", || {
        kernel_examples()?;
        let mut rng = ChaCha8Rng::seed_from_u64(8);

        let mut worst_lp = 0.0f64;
        for case in 0..50 {
            // constraints feasible at an interior point, plus the box [-5, 5]^2
            let centre = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
            let mut rows: Vec<([f64; 2], f64)> = (0..3)
                .map(|_| {
                    let a = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
                    (a, a[0] * centre[0] + a[1] * centre[1] + rng.random_range(0.1..=2.0))
                })
                .collect();
            let c = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
            let cons: Vec<_> = rows.iter().map(|([a, b], r)| LinearConstraint::new(vec![(0, *a), (1, *b)], LinearRelation::Le, *r)).collect();
            let r = solve_lp(&c, &cons, &[(-5.0, 5.0); 2]).map_err(|e| e.to_string())?;
            rows.extend([([1.0, 0.0], 5.0), ([-1.0, 0.0], 5.0), ([0.0, 1.0], 5.0), ([0.0, -1.0], 5.0)]);
            let want = vertex_oracle(c, &rows).unwrap();
            ensure(r.status == KernelStatus::Optimal, || format!("lp case {case}: {:?}", r.status))?;
            let err = (r.objective - want).abs() / want.abs().max(1.0);
            worst_lp = worst_lp.max(err);
            ensure(err <= 1e-9, || format!("lp case {case}: {} vs vertex oracle {want}", r.objective))?;
        }

        let mut worst = 0.0f64;
        for case in 0..20 {
            // linear objective over [-2, 2]^2 cut by a disc, a half-plane and
            // optionally y >= 2^x
            let c = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
            let centre = [rng.random_range(-0.5..=0.5), rng.random_range(0.5..=1.5)];
            let radius: f64 = rng.random_range(0.6..=1.5);
            let a = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
            let b = a[0] * centre[0] + a[1] * centre[1] + rng.random_range(0.05..=0.5);
            let with_exp = case % 2 == 0;
            let mut p = SmoothConvexProgram::new(2);
            p.set_objective(0, c[0]).unwrap();
            p.set_objective(1, c[1]).unwrap();
            let disc = ConvexQuadratic::from_squares(
                2,
                &[vec![(0, 1.0)], vec![(1, 1.0)]],
                &[(0, -2.0 * centre[0]), (1, -2.0 * centre[1])],
                centre[0] * centre[0] + centre[1] * centre[1] - radius * radius,
            )
            .unwrap();
            p.add_quadratic(disc, "disc").unwrap();
            p.add_affine(vec![(0, a[0]), (1, a[1])], b, "halfplane").unwrap();
            p.add_bounds(0, -2.0, 2.0, "x").unwrap();
            p.add_bounds(1, -2.0, 2.0, "y").unwrap();
            if with_exp {
                p.add_exponential(1, 0, "y >= 2^x").unwrap();
            }
            let feasible = |x: f64, y: f64| {
                (x - centre[0]).powi(2) + (y - centre[1]).powi(2) <= radius * radius
                    && a[0] * x + a[1] * y <= b
                    && (!with_exp || y >= x.exp2())
            };
            let Some(want) = grid_oracle(c, feasible) else { continue };
            let r = solve_smooth_convex(&p, None, 1e-9).map_err(|e| e.to_string())?;
            ensure(r.status == KernelStatus::Optimal, || format!("smooth case {case}: {:?}", r.status))?;
            ensure(p.max_violation(&r.point) <= 1e-7, || format!("smooth case {case}: violation {}", p.max_violation(&r.point)))?;
            let err = (r.objective - want).abs() / want.abs().max(1.0);
            worst = worst.max(err);
            ensure(err <= 1e-3, || format!("smooth case {case}: {} vs grid oracle {want}", r.objective))?;
        }
        Ok(format!("6 analytic examples, 50 LPs (worst {worst_lp:.1e}), 20 smooth programs (worst {worst:.1e})"))
    });
}
