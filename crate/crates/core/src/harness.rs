//! Parameter sweeps, placement scenarios and the on-disk run layout.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alternating::{OuterRow, SolveOutput};
use crate::benchmarks::{solve_scheme, Scheme};
use crate::config::NetworkConfig;
use crate::dinkelbach::LambdaRow;
use crate::error::{Error, Result};
use crate::model::{Design, EvalReport};
use crate::sca::ScaTraceRow;

pub const SWEEP_COLUMNS: [&str; 12] =
    ["param", "value", "scheme", "ee", "sum_eff_rate", "p_total", "p_comp", "p_ac", "p_dc", "b_dc", "outer_iters", "status"];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Dotted config path, for example `optical.semi_angle`.
    pub param: String,
    pub values: Vec<f64>,
    pub schemes: Vec<Scheme>,
}

impl SweepSpec {
    fn descriptor(&self) -> String {
        let values: Vec<String> = self.values.iter().map(f64::to_string).collect();
        let schemes: Vec<&str> = self.schemes.iter().map(|s| s.tag()).collect();
        format!("sweep {} {} {}", self.param, values.join(","), schemes.join(","))
    }
}

/// How a sweep point ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointStatus {
    Converged,
    MaxIterations,
    Infeasible,
    Error,
}

impl PointStatus {
    pub fn tag(self) -> &'static str {
        match self {
            PointStatus::Converged => "converged",
            PointStatus::MaxIterations => "max-iterations",
            PointStatus::Infeasible => "infeasible",
            PointStatus::Error => "error",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub param: String,
    pub value: f64,
    pub scheme: Scheme,
    pub status: PointStatus,
    /// Present when the solve produced a design.
    pub solution: Option<SolveOutput>,
    /// Failure message for infeasible or failed points.
    pub message: Option<String>,
}

impl PointResult {
    pub fn report(&self) -> Option<&EvalReport> {
        self.solution.as_ref().map(|s| &s.report)
    }

    pub fn energy_efficiency(&self) -> Option<f64> {
        self.report().map(|r| r.energy_efficiency)
    }
}

/// Solves one configuration under one scheme, folding failures into the
/// status instead of returning them.
pub fn run_point(cfg: &NetworkConfig, param: &str, value: f64, scheme: Scheme) -> PointResult {
    let outcome = cfg
        .problem()
        .and_then(|p| solve_scheme(&p, scheme, cfg.conventional_keeps_knowledge, &cfg.solver.options));
    let base = PointResult { param: param.to_string(), value, scheme, status: PointStatus::Error, solution: None, message: None };
    match outcome {
        Ok(out) => {
            let status = match out.trace.status {
                crate::alternating::SolveStatus::Converged => PointStatus::Converged,
                crate::alternating::SolveStatus::MaxIterations => PointStatus::MaxIterations,
            };
            PointResult { status, solution: Some(out), ..base }
        }
        Err(e) => {
            let status = if e.is_infeasible_config() { PointStatus::Infeasible } else { PointStatus::Error };
            if param.is_empty() {
                warn!("{scheme}: {e}");
            } else {
                warn!("{scheme} at {param}={value}: {e}");
            }
            PointResult { status, message: Some(e.to_string()), ..base }
        }
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))
}

/// Runs every `(value, scheme)` pair; rows come back value-major in the
/// order given by `spec`, whatever order the workers finish in.
pub fn run_sweep(cfg: &NetworkConfig, spec: &SweepSpec) -> Result<Vec<PointResult>> {
    if spec.values.is_empty() || spec.schemes.is_empty() {
        return Err(Error::Parse("a sweep needs at least one value and one scheme".into()));
    }
    // resolve every point up front so a bad path fails before any solve
    let configs = spec.values.iter().map(|&v| cfg.with_param(&spec.param, v)).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, Scheme)> = (0..configs.len()).flat_map(|i| spec.schemes.iter().map(move |&s| (i, s))).collect();
    let rows = pool(cfg.solver.workers)?
        .install(|| jobs.par_iter().map(|&(i, s)| run_point(&configs[i], &spec.param, spec.values[i], s)).collect());
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    /// 1-based scenario number.
    pub scenario: usize,
    pub point: PointResult,
}

/// Runs each configured user placement over the LED forward-voltage sweep
/// under the config's scheme.
pub fn run_scenarios(cfg: &NetworkConfig) -> Result<Vec<ScenarioResult>> {
    let volts = &cfg.scenarios.led_voltage;
    let mut configs = Vec::new();
    for (s, users) in cfg.scenarios.placements.iter().enumerate() {
        let placed = cfg.with_users(users)?;
        for &u in volts {
            configs.push((s + 1, u, placed.with_param("qos.led_voltage", u)?));
        }
    }
    let scheme = cfg.scheme;
    let rows = pool(cfg.solver.workers)?.install(|| {
        configs
            .par_iter()
            .map(|(s, u, c)| ScenarioResult { scenario: *s, point: run_point(c, "qos.led_voltage", *u, scheme) })
            .collect()
    });
    Ok(rows)
}

fn num(x: f64) -> String {
    // shortest text that parses back to the same f64
    format!("{x}")
}

fn sweep_record(p: &PointResult) -> Vec<String> {
    let mut rec = vec![p.param.clone(), num(p.value), p.scheme.tag().to_string()];
    match &p.solution {
        Some(s) => {
            let r = &s.report;
            rec.extend([
                num(r.energy_efficiency),
                num(r.sum_effective_rate()),
                num(r.p_total()),
                num(r.p_comp),
                num(r.p_ac),
                num(r.p_dc),
                num(s.design.dc_bias),
                s.trace.outer_iterations().to_string(),
            ]);
        }
        None => rec.extend(std::iter::repeat_n(String::new(), 8)),
    }
    rec.push(p.status.tag().to_string());
    rec
}

pub fn write_sweep_csv<W: Write>(rows: &[PointResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for r in rows {
        w.write_record(sweep_record(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Same columns as a sweep with a leading `scenario` column.
pub fn write_scenario_csv<W: Write>(rows: &[ScenarioResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(std::iter::once("scenario").chain(SWEEP_COLUMNS))?;
    for r in rows {
        w.write_record(std::iter::once(r.scenario.to_string()).chain(sweep_record(&r.point)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_outer_trace<W: Write>(rows: &[OuterRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "v_s1", "v_s2", "v_obj", "sca_iters", "dinkelbach_iters", "dca_iters"])?;
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            num(r.v_s1),
            num(r.v_s2),
            num(r.v_obj),
            r.sca_iterations.to_string(),
            r.dinkelbach_iterations.to_string(),
            r.dca_iterations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_inner_traces<W: Write>(sca: &[Vec<ScaTraceRow>], lambda: &[Vec<LambdaRow>], sca_out: W, lambda_out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sca_out);
    w.write_record(["outer", "iter", "objective", "energy_efficiency", "ac_power", "max_residual"])?;
    for (o, rows) in sca.iter().enumerate() {
        for r in rows {
            w.write_record([
                (o + 1).to_string(),
                r.iter.to_string(),
                num(r.objective),
                num(r.energy_efficiency),
                num(r.ac_power),
                num(r.max_residual),
            ])?;
        }
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(lambda_out);
    w.write_record(["outer", "dinkelbach_iter", "lambda", "f", "g"])?;
    for (o, rows) in lambda.iter().enumerate() {
        for r in rows {
            w.write_record([(o + 1).to_string(), r.outer_iter.to_string(), num(r.lambda), num(r.f), num(r.g)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Stored alongside each sweep row so its numbers can be recomputed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignRecord {
    pub row: usize,
    pub param: String,
    pub value: f64,
    pub scheme: Scheme,
    pub design: Design,
}

/// Hex digest naming a run directory.
pub fn run_id(cfg: &NetworkConfig, descriptor: &str) -> String {
    let mut h = Sha256::new();
    h.update(cfg.snapshot().as_bytes());
    h.update(b"\n");
    h.update(descriptor.as_bytes());
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// `<out>/<run-id>/` with `config.snapshot`, `trace/`, `plots/`, `designs/`.
pub fn prepare_run_dir(out: &Path, cfg: &NetworkConfig, descriptor: &str) -> Result<PathBuf> {
    let dir = out.join(run_id(cfg, descriptor));
    for sub in ["trace", "plots", "designs"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    fs::write(dir.join("config.snapshot"), cfg.snapshot())?;
    Ok(dir)
}

fn save_artifacts(dir: &Path, row: usize, p: &PointResult) -> Result<()> {
    let Some(s) = &p.solution else { return Ok(()) };
    let stem = format!("{row:03}_{}", p.scheme.tag());
    write_outer_trace(&s.trace.rows, fs::File::create(dir.join("trace").join(format!("{stem}_outer.csv")))?)?;
    write_inner_traces(
        &s.trace.sca,
        &s.trace.lambda,
        fs::File::create(dir.join("trace").join(format!("{stem}_sca.csv")))?,
        fs::File::create(dir.join("trace").join(format!("{stem}_lambda.csv")))?,
    )?;
    let rec = DesignRecord { row, param: p.param.clone(), value: p.value, scheme: p.scheme, design: s.design.clone() };
    fs::write(dir.join("designs").join(format!("{stem}.json")), serde_json::to_string_pretty(&rec)?)?;
    Ok(())
}

/// Writes a finished sweep into a fresh run directory and returns its path.
pub fn save_sweep(out: &Path, cfg: &NetworkConfig, spec: &SweepSpec, rows: &[PointResult]) -> Result<PathBuf> {
    let dir = prepare_run_dir(out, cfg, &spec.descriptor())?;
    let mut buf = Vec::new();
    write_sweep_csv(rows, &mut buf)?;
    fs::write(dir.join("sweep.csv"), &buf)?;
    for (i, r) in rows.iter().enumerate() {
        save_artifacts(&dir, i, r)?;
    }
    let svg = crate::plot::emit_plot(std::str::from_utf8(&buf).expect("csv output is UTF-8"), &spec.param)?;
    fs::write(dir.join("plots").join("sweep.svg"), svg)?;
    Ok(dir)
}

pub fn save_scenarios(out: &Path, cfg: &NetworkConfig, rows: &[ScenarioResult]) -> Result<PathBuf> {
    let dir = prepare_run_dir(out, cfg, "scenarios")?;
    let mut buf = Vec::new();
    write_scenario_csv(rows, &mut buf)?;
    fs::write(dir.join("sweep.csv"), &buf)?;
    for (i, r) in rows.iter().enumerate() {
        save_artifacts(&dir, i, &r.point)?;
    }
    let svg = crate::plot::emit_plot(std::str::from_utf8(&buf).expect("csv output is UTF-8"), "qos.led_voltage")?;
    fs::write(dir.join("plots").join("scenarios.svg"), svg)?;
    Ok(dir)
}

/// Single solve written as a one-row sweep.
pub fn save_solve(out: &Path, cfg: &NetworkConfig, point: &PointResult) -> Result<PathBuf> {
    let dir = prepare_run_dir(out, cfg, &format!("solve {}", point.scheme))?;
    let mut buf = Vec::new();
    write_sweep_csv(std::slice::from_ref(point), &mut buf)?;
    fs::write(dir.join("sweep.csv"), &buf)?;
    save_artifacts(&dir, 0, point)?;
    Ok(dir)
}
