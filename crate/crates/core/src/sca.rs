//! Successive convex approximation for the beamforming and rate-allocation
//! subproblem at fixed compression ratios and DC bias.
//!
//! The fractional objective is lifted to `max gamma` with
//! `alpha^2 / beta >= gamma`, `sum_k payload_k / rho_k >= alpha^2` and
//! `sum ||w_l||^2 + eps1 <= beta`. Every decoding step gets a rate variable
//! `delta`, an exponential epigraph `zeta >= 2^delta`, an interference
//! epigraph `mu >= sum |h^T w_l|^2 + sigma^2` and a quadratic-over-linear
//! constraint `|h^T w_s|^2 / mu >= (pi e / 2)(zeta - 1)`. The three
//! quadratic-over-linear constraints are replaced by affine Taylor minorants
//! around the current iterate.
//!
//! Internally channels are divided by the noise amplitude, so `mu` is in
//! units of the listener's noise power.

use std::io::Write;
use std::path::Path;

use log::{debug, warn};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::ChannelMatrix;
use crate::kernel::{solve_smooth_convex, ConvexQuadratic, SmoothConvexProgram, SolveStatus};
use crate::model::{
    check_feasibility, constraint_residuals, energy_efficiency, noma_strength_order, stream_rate, user_rates, DecodeTerm, Design,
    Problem, RateModel, VLC_RATE_COEFF,
};
use crate::semantics::computation_power;

/// `pi e / 2`, the inverse of the achievable-rate coefficient.
const INV_RATE_COEFF: f64 = 1.0 / VLC_RATE_COEFF;
/// Expansion points with a smaller interference epigraph are clamped to the noise floor.
const MU_FLOOR: f64 = 1e-15;
const DELTA_MIN: f64 = -30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ScaOptions {
    /// Fractional change of the lifted objective that stops the loop.
    pub tol: f64,
    pub max_iters: usize,
    /// Tolerance handed to the barrier solver.
    pub solver_tol: f64,
}

impl Default for ScaOptions {
    fn default() -> Self {
        Self { tol: 1e-4, max_iters: 50, solver_tol: 1e-9 }
    }
}

/// `(eps1, eps2)`: the power that does not depend on the beams, and the
/// per-LED amplitude headroom left by the DC bias.
pub fn subproblem_constants(rho: &[f64], dc_bias: f64, problem: &Problem) -> Result<(f64, f64)> {
    let p_comp = computation_power(&problem.profiles, rho, problem.eta)?;
    let eps1 = p_comp + problem.dc_power(dc_bias);
    let (i_l, i_u) = problem.qos.drive_current;
    let eps2 = (dc_bias - i_l).min(i_u - dc_bias);
    if !(eps2 > 0.0) {
        return Err(Error::Domain(format!(
            "DC bias {dc_bias} leaves no amplitude headroom inside [{i_l}, {i_u}]"
        )));
    }
    Ok((eps1, eps2))
}

/// Affine under-estimator `coeff_x * x + coeff_y * y` of `x^2 / y` on `y > 0`,
/// tangent at `(x0, y0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorMinorant {
    pub coeff_x: f64,
    pub coeff_y: f64,
}

impl TaylorMinorant {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.coeff_x * x + self.coeff_y * y
    }
}

/// Tangent of `x^2 / y` at `(x0, y0)`: `2 x0 / y0 * x - (x0 / y0)^2 * y`.
/// For `|h^T w|^2 / mu` pass `x0 = h^T w0` and scale `coeff_x` by `h`.
pub fn taylor_quad_over_lin(x0: f64, y0: f64) -> Result<TaylorMinorant> {
    if !(y0 > 0.0) {
        return Err(Error::Domain(format!("denominator {y0} must be positive")));
    }
    let ratio = x0 / y0;
    Ok(TaylorMinorant { coeff_x: 2.0 * ratio, coeff_y: -ratio * ratio })
}

/// Decoding step together with the index of its rate variable.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaTerm {
    pub term: DecodeTerm,
    /// Index into the rate block: common terms use `delta_c[listener]`,
    /// private terms `delta_r[user]`.
    pub common: bool,
    pub rate_index: usize,
}

/// Position of every variable in the convexified program.
///
/// Order: for each present beam row, `N` positive parts then `N` negative
/// parts; the common-rate vector `a` (when the scheme has a common stream);
/// `alpha`, `beta`, `gamma`; `delta_c` (one per common decoding step);
/// `delta_r` (one per user); then `zeta, mu` per decoding step, common steps
/// first. With a common stream and one step per stream this totals
/// `2(K+1)N + (K+1) + 3 + 2K + 4K` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct VarLayout {
    pub num_users: usize,
    pub num_leds: usize,
    /// Beam rows (stream indices) that carry variables.
    pub streams: Vec<usize>,
    pub a_base: Option<usize>,
    pub alpha: usize,
    pub beta: usize,
    pub gamma: usize,
    pub delta_c_base: usize,
    pub num_delta_c: usize,
    pub delta_r_base: usize,
    pub term_base: usize,
    pub terms: Vec<ScaTerm>,
    pub total: usize,
}

impl VarLayout {
    pub fn new(model: &RateModel, num_users: usize, num_leds: usize) -> Self {
        let streams: Vec<usize> = if model.has_common { (0..=num_users).collect() } else { (1..=num_users).collect() };
        let mut next = 2 * streams.len() * num_leds;
        let a_base = model.has_common.then(|| {
            let b = next;
            next += num_users + 1;
            b
        });
        let alpha = next;
        let beta = next + 1;
        let gamma = next + 2;
        next += 3;
        let num_delta_c = model.common_terms.len();
        let delta_c_base = next;
        next += num_delta_c;
        let delta_r_base = next;
        next += num_users;
        let mut terms = Vec::new();
        for (j, t) in model.common_terms.iter().enumerate() {
            terms.push(ScaTerm { term: t.clone(), common: true, rate_index: j });
        }
        for (k, ts) in model.private_terms.iter().enumerate() {
            for t in ts {
                terms.push(ScaTerm { term: t.clone(), common: false, rate_index: k });
            }
        }
        let term_base = next;
        next += 2 * terms.len();
        Self {
            num_users,
            num_leds,
            streams,
            a_base,
            alpha,
            beta,
            gamma,
            delta_c_base,
            num_delta_c,
            delta_r_base,
            term_base,
            terms,
            total: next,
        }
    }

    fn stream_pos(&self, stream: usize) -> Option<usize> {
        self.streams.iter().position(|&s| s == stream)
    }

    pub fn w_plus(&self, stream: usize, led: usize) -> usize {
        let p = self.stream_pos(stream).expect("stream present in layout");
        2 * p * self.num_leds + led
    }

    pub fn w_minus(&self, stream: usize, led: usize) -> usize {
        self.w_plus(stream, led) + self.num_leds
    }

    pub fn a(&self, i: usize) -> Option<usize> {
        self.a_base.map(|b| b + i)
    }

    pub fn delta(&self, term: &ScaTerm) -> usize {
        if term.common {
            self.delta_c_base + term.rate_index
        } else {
            self.delta_r_base + term.rate_index
        }
    }

    pub fn delta_r(&self, user: usize) -> usize {
        self.delta_r_base + user
    }

    pub fn zeta(&self, t: usize) -> usize {
        self.term_base + 2 * t
    }

    pub fn mu(&self, t: usize) -> usize {
        self.term_base + 2 * t + 1
    }

    /// `(index, coefficient)` pairs of `h^T w_stream` in split variables.
    fn inner(&self, h: &[f64], stream: usize) -> Vec<(usize, f64)> {
        let mut v = Vec::with_capacity(2 * h.len());
        for (i, hi) in h.iter().enumerate() {
            v.push((self.w_plus(stream, i), *hi));
            v.push((self.w_minus(stream, i), -hi));
        }
        v
    }
}

/// Fixed inputs of one SCA run.
#[derive(Debug, Clone)]
pub struct ScaContext<'a> {
    pub problem: &'a Problem,
    pub model: &'a RateModel,
    pub rho: Vec<f64>,
    pub dc_bias: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// Channel rows divided by the listener's noise amplitude.
    pub h_norm: Vec<Vec<f64>>,
}

impl<'a> ScaContext<'a> {
    pub fn new(problem: &'a Problem, model: &'a RateModel, rho: &[f64], dc_bias: f64) -> Result<Self> {
        let (eps1, eps2) = subproblem_constants(rho, dc_bias, problem)?;
        let h_norm = problem
            .channel
            .rows()
            .iter()
            .zip(&problem.qos.noise_power)
            .map(|(h, s2)| h.iter().map(|v| v / s2.sqrt()).collect())
            .collect();
        Ok(Self { problem, model, rho: rho.to_vec(), dc_bias, eps1, eps2, h_norm })
    }

    fn unicast(&self) -> f64 {
        self.model.unicast_knowledge
    }
}

/// Expansion point of the Taylor minorants.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaState {
    /// `(K + 1) x N`, row 0 is the common beam.
    pub beams: Vec<Vec<f64>>,
    pub common_rates: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    /// Interference epigraph per decoding step, in noise units.
    pub mu: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Normalized interference `sum_{l in I} |h~^T w_l|^2 + 1` of a decoding step.
fn interference(ctx: &ScaContext, beams: &[Vec<f64>], t: &DecodeTerm) -> f64 {
    let h = &ctx.h_norm[t.listener];
    t.interferers.iter().map(|&l| dot(h, &beams[l]).powi(2)).sum::<f64>() + 1.0
}

impl ScaState {
    /// Auxiliaries evaluated exactly at a design.
    pub fn from_design(ctx: &ScaContext, layout: &VarLayout, design: &Design) -> Self {
        let (_, private) = user_rates(design, ctx.problem, ctx.model);
        let num: f64 = (0..layout.num_users)
            .map(|k| {
                let a_k = if ctx.model.has_common { design.common_rates[k + 1] } else { 0.0 };
                (a_k + private[k] - ctx.unicast()) / ctx.rho[k]
            })
            .sum();
        Self {
            beams: design.beams.clone(),
            common_rates: design.common_rates.clone(),
            alpha: num.max(0.0).sqrt(),
            beta: design.ac_power() + ctx.eps1,
            mu: layout.terms.iter().map(|t| interference(ctx, &design.beams, &t.term)).collect(),
        }
    }

    /// Full variable vector consistent with this state, with every rate
    /// variable at its true value. Lies on the boundary of the program built
    /// around this state.
    fn to_point(&self, ctx: &ScaContext, layout: &VarLayout) -> Vec<f64> {
        let mut x = vec![0.0; layout.total];
        for &s in &layout.streams {
            for (i, w) in self.beams[s].iter().enumerate() {
                x[layout.w_plus(s, i)] = w.max(0.0);
                x[layout.w_minus(s, i)] = (-w).max(0.0);
            }
        }
        if let Some(b) = layout.a_base {
            x[b..b + self.common_rates.len()].copy_from_slice(&self.common_rates);
        }
        x[layout.alpha] = self.alpha;
        x[layout.beta] = self.beta;
        x[layout.gamma] = self.alpha * self.alpha / self.beta;
        let mut delta_c = vec![f64::INFINITY; layout.num_delta_c];
        let mut delta_r = vec![f64::INFINITY; layout.num_users];
        for (ti, t) in layout.terms.iter().enumerate() {
            let mu = self.mu[ti];
            let rate = (1.0 + VLC_RATE_COEFF * dot(&ctx.h_norm[t.term.listener], &self.beams[t.term.stream]).powi(2) / mu)
                .log2()
                .max(DELTA_MIN);
            let slot = if t.common { &mut delta_c[t.rate_index] } else { &mut delta_r[t.rate_index] };
            *slot = slot.min(rate);
            x[layout.mu(ti)] = mu;
        }
        for (j, d) in delta_c.iter().enumerate() {
            x[layout.delta_c_base + j] = *d;
        }
        for (k, d) in delta_r.iter().enumerate() {
            x[layout.delta_r(k)] = *d;
        }
        for (ti, t) in layout.terms.iter().enumerate() {
            x[layout.zeta(ti)] = x[layout.delta(t)].exp2();
        }
        x
    }
}

/// Upper bound on any normalized interference epigraph: `||h~||^2` times the
/// AC power budget, doubled, plus the noise floor.
fn mu_cap(ctx: &ScaContext, listener: usize) -> f64 {
    let h2: f64 = ctx.h_norm[listener].iter().map(|v| v * v).sum();
    2.0 * (1.0 + h2 * (ctx.problem.qos.power_max - ctx.eps1).max(0.0))
}

/// Builds the convexified program around `state`.
pub fn build_approx_problem(state: &ScaState, ctx: &ScaContext, layout: &VarLayout) -> Result<SmoothConvexProgram> {
    let n = layout.total;
    let k_users = layout.num_users;
    let leds = layout.num_leds;
    let qos = &ctx.problem.qos;
    let mut prog = SmoothConvexProgram::new(n);
    prog.set_objective(layout.gamma, -1.0)?;

    // gamma <= Taylor(alpha^2 / beta)
    let tg = taylor_quad_over_lin(state.alpha, state.beta)?;
    prog.add_affine(
        vec![(layout.gamma, 1.0), (layout.alpha, -tg.coeff_x), (layout.beta, -tg.coeff_y)],
        0.0,
        "objective minorant",
    )?;

    // alpha^2 <= sum_k payload_k / rho_k
    let mut lin = Vec::new();
    let mut constant = 0.0;
    for k in 0..k_users {
        let inv = 1.0 / ctx.rho[k];
        if let Some(a) = layout.a(k + 1) {
            lin.push((a, -inv));
        }
        lin.push((layout.delta_r(k), -inv));
        constant += ctx.unicast() * inv;
    }
    prog.add_quadratic(ConvexQuadratic::from_squares(n, &[vec![(layout.alpha, 1.0)]], &lin, constant)?, "rate sum")?;

    // beam power, as an epigraph and as the budget
    let squares: Vec<Vec<(usize, f64)>> = layout
        .streams
        .iter()
        .flat_map(|&s| (0..leds).map(move |i| (s, i)))
        .map(|(s, i)| vec![(layout.w_plus(s, i), 1.0), (layout.w_minus(s, i), -1.0)])
        .collect();
    prog.add_quadratic(ConvexQuadratic::from_squares(n, &squares, &[(layout.beta, -1.0)], ctx.eps1)?, "power epigraph")?;
    prog.add_quadratic(ConvexQuadratic::from_squares(n, &squares, &[], ctx.eps1 - qos.power_max)?, "power budget")?;

    for i in 0..leds {
        let coeffs = layout
            .streams
            .iter()
            .flat_map(|&s| [(layout.w_plus(s, i), 1.0), (layout.w_minus(s, i), 1.0)])
            .collect();
        prog.add_affine(coeffs, ctx.eps2, format!("clipping led {i}"))?;
    }

    if let Some(a_base) = layout.a_base {
        let sum_a: Vec<(usize, f64)> = (0..=k_users).map(|i| (a_base + i, 1.0)).collect();
        for j in 0..layout.num_delta_c {
            let mut c = sum_a.clone();
            c.push((layout.delta_c_base + j, -1.0));
            prog.add_affine(c, 0.0, format!("common decoding {j}"))?;
        }
        let a0_min = if ctx.model.knowledge_in_common { qos.knowledge_rate_min } else { 0.0 };
        prog.add_bounds(a_base, a0_min, f64::INFINITY, "a_0")?;
        for i in 1..=k_users {
            prog.add_bounds(a_base + i, 0.0, f64::INFINITY, &format!("a_{i}"))?;
        }
    }

    for k in 0..k_users {
        let mut c = vec![(layout.delta_r(k), -1.0)];
        if let Some(a) = layout.a(k + 1) {
            c.push((a, -1.0));
        }
        prog.add_affine(c, ctx.unicast() - ctx.rho[k] * qos.user_rate_min[k], format!("min rate {k}"))?;
        if ctx.unicast() > 0.0 {
            prog.add_bounds(layout.delta_r(k), ctx.unicast(), f64::INFINITY, &format!("knowledge {k}"))?;
        }
    }

    for (ti, t) in layout.terms.iter().enumerate() {
        let (zeta, mu, delta) = (layout.zeta(ti), layout.mu(ti), layout.delta(t));
        let h = &ctx.h_norm[t.term.listener];
        prog.add_exponential(zeta, delta, format!("exp {ti}"))?;
        // (pi e / 2)(zeta - 1) <= Taylor(|h^T w_s|^2 / mu)
        let x0 = dot(h, &state.beams[t.term.stream]);
        let tm = taylor_quad_over_lin(x0, state.mu[ti])?;
        let mut c: Vec<(usize, f64)> = layout
            .inner(h, t.term.stream)
            .into_iter()
            .map(|(i, v)| (i, -tm.coeff_x * v))
            .collect();
        c.push((mu, -tm.coeff_y));
        c.push((zeta, INV_RATE_COEFF));
        prog.add_affine(c, INV_RATE_COEFF, format!("sinr minorant {ti}"))?;
        // mu >= sum_{l in I} |h^T w_l|^2 + 1
        let sq: Vec<Vec<(usize, f64)>> = t.term.interferers.iter().map(|&l| layout.inner(h, l)).collect();
        prog.add_quadratic(ConvexQuadratic::from_squares(n, &sq, &[(mu, -1.0)], 1.0)?, format!("interference {ti}"))?;
        prog.add_bounds(mu, f64::NEG_INFINITY, mu_cap(ctx, t.term.listener), &format!("mu {ti}"))?;
        prog.add_bounds(delta, DELTA_MIN, f64::INFINITY, &format!("delta {ti}"))?;
    }

    for &s in &layout.streams {
        for i in 0..leds {
            prog.add_bounds(layout.w_plus(s, i), 0.0, f64::INFINITY, "w+")?;
            prog.add_bounds(layout.w_minus(s, i), 0.0, f64::INFINITY, "w-")?;
        }
    }
    prog.add_bounds(layout.alpha, 0.0, f64::INFINITY, "alpha")?;
    prog.add_bounds(layout.beta, f64::NEG_INFINITY, qos.power_max, "beta")?;
    prog.add_bounds(layout.gamma, -1.0, f64::INFINITY, "gamma")?;
    Ok(prog)
}

/// Beams and common rates read back from a solver point.
fn extract(ctx: &ScaContext, layout: &VarLayout, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut beams = vec![vec![0.0; layout.num_leds]; layout.num_users + 1];
    for &s in &layout.streams {
        for i in 0..layout.num_leds {
            beams[s][i] = x[layout.w_plus(s, i)] - x[layout.w_minus(s, i)];
        }
    }
    let mut a = vec![0.0; layout.num_users + 1];
    if let Some(b) = layout.a_base {
        for (i, ai) in a.iter_mut().enumerate() {
            *ai = x[b + i].max(0.0);
        }
        if !ctx.model.knowledge_in_common {
            a[0] = 0.0;
        }
    }
    (beams, a)
}

/// Diagonal loadings, relative to the mean channel energy, of the
/// regularized zero-forcing directions tried next to maximum-ratio ones.
const RZF_LOADING: [f64; 5] = [1.0, 0.3, 0.1, 0.01, 0.0];

/// Smallest power share of the common beam in a start.
const MIN_COMMON_SHARE: f64 = 0.01;

/// Ratio between the private powers of consecutive users in strength order.
const SPLIT_TILTS: [f64; 4] = [1.0, 2.0, 4.0, 9.0];

/// Unit-norm columns of `H^T (H H^T + l s I)^-1`, `s = tr(H H^T) / K`.
fn regularized_zf(channel: &ChannelMatrix, loading: f64) -> Option<Vec<Vec<f64>>> {
    let (k, n) = (channel.num_users(), channel.num_leds());
    let h = DMatrix::from_fn(k, n, |u, i| channel.get(u, i));
    let gram = &h * h.transpose();
    let s = gram.trace() / k as f64;
    let inv = (gram + DMatrix::identity(k, k) * (loading * s)).try_inverse()?;
    let w = h.transpose() * inv;
    (0..k)
        .map(|u| {
            let col = w.column(u);
            let norm = col.norm();
            (norm.is_finite() && norm > 0.0).then(|| col.iter().map(|v| v / norm).collect())
        })
        .collect()
}

/// Best feasible start over a small candidate set: maximum-ratio, regularized
/// zero-forcing and single-direction private beams, several private power
/// tilts, and a grid of common-beam power shares. The common beam points along
/// the sum of normalized channels. Each candidate is scaled to 90% of the
/// clipping headroom and of the AC power budget; `a_0 = R_0` and the remaining
/// common capacity is split equally.
pub fn init_point(problem: &Problem, model: &RateModel, rho: &[f64], dc_bias: f64) -> Result<Design> {
    let (eps1, eps2) = subproblem_constants(rho, dc_bias, problem)?;
    let (k, n) = (problem.num_users(), problem.num_leds());
    let ac_budget = problem.qos.power_max - eps1;
    if !(ac_budget > 0.0) {
        return Err(Error::NoFeasibleStart {
            binding: "power_budget".into(),
            detail: format!("fixed power {eps1} W leaves nothing of the {} W budget", problem.qos.power_max),
        });
    }
    let mut mrt = Vec::with_capacity(k);
    for u in 0..k {
        let norm = problem.channel.row_norm(u);
        if !(norm > 0.0) {
            return Err(Error::Domain(format!("user {u} has an all-zero channel row")));
        }
        mrt.push(problem.channel.row(u).iter().map(|v| v / norm).collect::<Vec<f64>>());
    }
    let mut families = vec![mrt.clone()];
    families.extend(RZF_LOADING.iter().filter_map(|&l| regularized_zf(&problem.channel, l)));
    let mut common_dir = vec![0.0; n];
    for d in &mrt {
        for (c, v) in common_dir.iter_mut().zip(d) {
            *c += v;
        }
    }
    let cn = dot(&common_dir, &common_dir).sqrt();
    common_dir.iter_mut().for_each(|v| *v /= cn);
    // superposition along one direction, the usual starting point for SIC
    families.push(vec![common_dir.clone(); k]);

    // private power fractions: equal, then tilted toward the weaker users
    // strongest first; a NOMA model's own decoding order overrides channel strength
    let mut rank = noma_strength_order(&problem.channel);
    rank.sort_by_key(|&u| model.private_terms[u].len());
    let splits: Vec<Vec<f64>> = SPLIT_TILTS
        .iter()
        .map(|&q| {
            let mut f = vec![0.0; k];
            for (r, &u) in rank.iter().enumerate() {
                f[u] = q.powi(r as i32);
            }
            let total: f64 = f.iter().sum();
            f.iter().map(|x| x / total).collect()
        })
        .collect();

    // a silent common beam would pin the common rates to zero in every
    // convexified program, so the smallest share is kept positive
    let shares: Vec<f64> = if model.has_common {
        std::iter::once(MIN_COMMON_SHARE).chain((1..=10).map(|i| i as f64 / 10.0)).collect()
    } else {
        vec![0.0]
    };
    let mut best: Option<(f64, Design)> = None;
    let mut least_bad: Option<(f64, String, String)> = None;
    let mut candidates = Vec::new();
    for f in &families {
        for p in &splits {
            candidates.extend(shares.iter().map(|&t| (f, p, t)));
        }
    }
    for (dirs, split, theta) in candidates {
        let mut beams = vec![vec![0.0; n]; k + 1];
        beams[0] = common_dir.iter().map(|v| theta.sqrt() * v).collect();
        for u in 0..k {
            let amp = ((1.0 - theta) * split[u]).sqrt();
            beams[u + 1] = dirs[u].iter().map(|v| amp * v).collect();
        }
        let mut d = Design { beams, dc_bias, common_rates: vec![0.0; k + 1], rho: rho.to_vec() };
        let (col, pow) = (d.max_column_sum(), d.ac_power());
        if !(col > 0.0 && pow > 0.0) {
            continue;
        }
        let scale = (0.9 * eps2 / col).min((0.9 * ac_budget / pow).sqrt());
        d.beams.iter_mut().flatten().for_each(|w| *w *= scale);
        if model.has_common {
            let (common, _) = user_rates(&d, problem, model);
            let c_min = common.iter().copied().fold(f64::INFINITY, f64::min);
            let a0 = if model.knowledge_in_common { problem.qos.knowledge_rate_min } else { 0.0 };
            d.common_rates[0] = a0;
            let rest = ((c_min - a0) / k as f64).max(0.0);
            d.common_rates[1..].iter_mut().for_each(|a| *a = rest);
        }
        let violations = check_feasibility(&d, problem, model, 0.0)?;
        if violations.is_empty() {
            let ee = energy_efficiency(&d, problem, model)?;
            if best.as_ref().is_none_or(|(b, _)| ee > *b) {
                best = Some((ee, d));
            }
        } else {
            let worst = violations.iter().min_by(|a, b| a.residual.total_cmp(&b.residual)).expect("non-empty");
            if least_bad.as_ref().is_none_or(|(r, _, _)| worst.residual > *r) {
                least_bad = Some((worst.residual, worst.id.to_string(), format!("residual {:.3e}", worst.residual)));
            }
        }
    }
    match (best, least_bad) {
        (Some((_, d)), _) => Ok(d),
        (None, Some((_, binding, detail))) => Err(Error::NoFeasibleStart { binding, detail }),
        (None, None) => Err(Error::NoFeasibleStart { binding: "power_budget".into(), detail: "no usable beam".into() }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaTraceRow {
    pub iter: usize,
    /// Lifted objective `gamma` of the convexified program.
    pub objective: f64,
    /// Energy efficiency of the extracted design.
    pub energy_efficiency: f64,
    pub ac_power: f64,
    /// Largest violation of the original constraints (zero when feasible).
    pub max_residual: f64,
}

/// Relative slack of a decoding step's epigraphs. A step whose stream carries
/// no power (`desired_snr == 0`) leaves `mu` unconstrained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermActivity {
    /// `(zeta - 2^delta) / zeta`.
    pub zeta_gap: f64,
    /// `(mu - interference - 1) / mu` in noise units.
    pub mu_gap: f64,
    pub desired_snr: f64,
}

/// Last convexified solve, kept for inspection.
#[derive(Debug, Clone)]
pub struct ScaSolution {
    pub layout: VarLayout,
    pub point: Vec<f64>,
    pub program: SmoothConvexProgram,
}

#[derive(Debug, Clone)]
pub struct ScaOutput {
    /// Best feasible design seen, including the start.
    pub design: Design,
    pub energy_efficiency: f64,
    pub trace: Vec<ScaTraceRow>,
    pub converged: bool,
    pub last: Option<ScaSolution>,
}

fn max_violation(design: &Design, problem: &Problem, model: &RateModel) -> Result<f64> {
    Ok(constraint_residuals(design, problem, model)?
        .iter()
        .map(|r| -r.residual)
        .fold(0.0, f64::max))
}

/// Phase-one optimum below which a convexified program counts as feasible
/// without interior.
const FLAT_INTERIOR_TOL: f64 = 1e-7;

/// Runs the SCA loop from `start` (beams and common rates; `rho` and `dc_bias`
/// are held fixed).
pub fn run_sca(problem: &Problem, model: &RateModel, start: &Design, opts: &ScaOptions) -> Result<ScaOutput> {
    let ctx = ScaContext::new(problem, model, &start.rho, start.dc_bias)?;
    let layout = VarLayout::new(model, problem.num_users(), problem.num_leds());
    let start_violation = max_violation(start, problem, model)?;
    if start_violation > 1e-9 {
        return Err(Error::NoFeasibleStart {
            binding: "start point".into(),
            detail: format!("start violates the constraints by {start_violation:.3e}"),
        });
    }
    let mut state = ScaState::from_design(&ctx, &layout, start);
    let mut warm = state.to_point(&ctx, &layout);
    let mut best = (energy_efficiency(start, problem, model)?, start.clone());
    let mut trace = Vec::new();
    let mut prev: Option<f64> = None;
    let mut converged = false;
    let mut last = None;

    for iter in 1..=opts.max_iters {
        let prog = build_approx_problem(&state, &ctx, &layout)?;
        let res = solve_smooth_convex(&prog, Some(&warm), opts.solver_tol)?;
        match res.status {
            SolveStatus::Optimal => {}
            SolveStatus::MaxIterations if prog.max_violation(&res.point) < 0.0 => {
                warn!("SCA iteration {iter}: barrier solver hit its iteration cap");
            }
            // A silent stream linearizes to a zero minorant, which pins its
            // rate to zero and leaves the program without an interior. The
            // expansion point is then already the best this model can reach.
            _ if res.phase1_value.is_some_and(|v| v < FLAT_INTERIOR_TOL) => {
                debug!("SCA {iter}: program has no interior (phase-one value {:?}), stopping", res.phase1_value);
                converged = true;
                break;
            }
            status => {
                return Err(Error::Internal(format!(
                    "convexified program at SCA iteration {iter} returned {status:?} (phase-one value {:?})",
                    res.phase1_value
                )));
            }
        }
        let x = res.point;
        let gamma = x[layout.gamma];
        let (beams, a) = extract(&ctx, &layout, &x);
        let design = Design { beams, dc_bias: start.dc_bias, common_rates: a, rho: start.rho.clone() };
        let ee = energy_efficiency(&design, problem, model)?;
        let viol = max_violation(&design, problem, model)?;
        debug!("SCA {iter}: gamma {gamma:.6e} ee {ee:.6e} violation {viol:.2e}");
        trace.push(ScaTraceRow { iter, objective: gamma, energy_efficiency: ee, ac_power: design.ac_power(), max_residual: viol });
        if viol <= 1e-9 && ee > best.0 {
            best = (ee, design.clone());
        }
        state = ScaState {
            beams: design.beams.clone(),
            common_rates: design.common_rates.clone(),
            alpha: x[layout.alpha],
            beta: x[layout.beta],
            mu: (0..layout.terms.len())
                .map(|ti| {
                    let m = x[layout.mu(ti)];
                    if m < MU_FLOOR { 1.0 } else { m }
                })
                .collect(),
        };
        warm = x.clone();
        last = Some(ScaSolution { layout: layout.clone(), point: x, program: prog });
        if let Some(p) = prev {
            if (gamma - p).abs() <= opts.tol * p.abs().max(1e-12) {
                converged = true;
                break;
            }
        }
        prev = Some(gamma);
    }
    if !converged {
        warn!("SCA stopped at the iteration cap of {}", opts.max_iters);
    }
    Ok(ScaOutput { design: best.1, energy_efficiency: best.0, trace, converged, last })
}

impl ScaSolution {
    /// Tightness of the exponential and interference epigraphs per decoding
    /// step at the solver point.
    pub fn activity_gaps(&self, problem: &Problem) -> Vec<TermActivity> {
        let l = &self.layout;
        let mut beams = vec![vec![0.0; l.num_leds]; l.num_users + 1];
        for &s in &l.streams {
            for i in 0..l.num_leds {
                beams[s][i] = self.point[l.w_plus(s, i)] - self.point[l.w_minus(s, i)];
            }
        }
        l.terms
            .iter()
            .enumerate()
            .map(|(ti, t)| {
                let zeta = self.point[l.zeta(ti)];
                let delta = self.point[l.delta(t)];
                let mu = self.point[l.mu(ti)];
                let s2 = problem.qos.noise_power[t.term.listener];
                let h = problem.channel.row(t.term.listener);
                let interf: f64 = t.term.interferers.iter().map(|&j| dot(h, &beams[j]).powi(2)).sum::<f64>() / s2 + 1.0;
                TermActivity {
                    zeta_gap: (zeta - delta.exp2()) / zeta,
                    mu_gap: (mu - interf) / mu,
                    desired_snr: dot(h, &beams[t.term.stream]).powi(2) / s2,
                }
            })
            .collect()
    }

    /// Index of the common decoding step whose rate variable binds the common
    /// load, if the scheme has a common stream.
    pub fn binding_common_term(&self) -> Option<usize> {
        let l = &self.layout;
        l.terms
            .iter()
            .enumerate()
            .filter(|(_, t)| t.common)
            .min_by(|a, b| self.point[l.delta(a.1)].total_cmp(&self.point[l.delta(b.1)]))
            .map(|(i, _)| i)
    }
}

/// True private and common rates at a design, for callers that only need
/// one stream's rate.
pub fn term_rate(problem: &Problem, design: &Design, t: &DecodeTerm) -> f64 {
    stream_rate(problem.channel.row(t.listener), &design.beams, t.stream, &t.interferers, problem.qos.noise_power[t.listener])
}

pub fn write_trace<W: Write>(rows: &[ScaTraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "objective", "ac_power", "max_residual"])?;
    for r in rows {
        w.write_record([r.iter.to_string(), format!("{:.9e}", r.objective), format!("{:.9e}", r.ac_power), format!("{:.3e}", r.max_residual)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace(rows: &[ScaTraceRow], path: &Path) -> Result<()> {
    write_trace(rows, std::fs::File::create(path)?)
}
