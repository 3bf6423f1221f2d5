//! Rate, power and feasibility evaluation of a candidate design.
//!
//! Beam rows are indexed by stream: row 0 carries the common message and row
//! `k + 1` carries the private message of user `k` (users are 0-based).

use std::f64::consts::{E, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::benchmarks::Scheme;
use crate::error::{Error, Result};
use crate::geometry::ChannelMatrix;
use crate::semantics::{computation_power, CompressionProfile};

/// The `2 / (pi e)` factor of the VLC achievable-rate expression.
pub const VLC_RATE_COEFF: f64 = 2.0 / (PI * E);

/// Absolute tolerance used by [`check_feasibility`] unless told otherwise.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Quality-of-service and hardware limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosParams {
    /// Minimum knowledge-update rate `R_0` in bps/Hz.
    pub knowledge_rate_min: f64,
    /// Minimum effective rate `R_k` per user, bps/Hz.
    pub user_rate_min: Vec<f64>,
    /// Transmitter power budget in watts.
    pub power_max: f64,
    /// Linear drive-current range `(I_L, I_U)` in amperes.
    pub drive_current: (f64, f64),
    /// LED forward voltage in volts.
    pub led_voltage: f64,
    pub circuit_power: f64,
    /// Receiver noise power per user in watts.
    pub noise_power: Vec<f64>,
}

impl QosParams {
    pub fn validate(&self, num_users: usize) -> Vec<String> {
        let mut v = Vec::new();
        let (lo, hi) = self.drive_current;
        if !(lo >= 0.0 && lo < hi) {
            v.push(format!("drive current must satisfy 0 <= I_L < I_U (got {lo}, {hi})"));
        }
        if !(self.power_max > self.circuit_power) {
            v.push(format!(
                "power_max ({}) must exceed circuit_power ({})",
                self.power_max, self.circuit_power
            ));
        }
        if !(self.circuit_power >= 0.0) {
            v.push("circuit_power must be non-negative".into());
        }
        if !(self.led_voltage > 0.0) {
            v.push("led_voltage must be positive".into());
        }
        if !(self.knowledge_rate_min >= 0.0) {
            v.push("knowledge_rate_min must be non-negative".into());
        }
        if self.noise_power.len() != num_users {
            v.push(format!("{} noise powers for {num_users} users", self.noise_power.len()));
        }
        if self.noise_power.iter().any(|s| !(*s > 0.0)) {
            v.push("noise powers must be positive".into());
        }
        if self.user_rate_min.len() != num_users {
            v.push(format!("{} minimum rates for {num_users} users", self.user_rate_min.len()));
        }
        if self.user_rate_min.iter().any(|r| !(*r >= 0.0)) {
            v.push("minimum user rates must be non-negative".into());
        }
        v
    }
}

/// Everything needed to evaluate a design: channel, limits and compression costs.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub channel: ChannelMatrix,
    pub qos: QosParams,
    pub profiles: Vec<CompressionProfile>,
    /// Watts per unit of computation overhead.
    pub eta: f64,
}

impl Problem {
    pub fn num_users(&self) -> usize {
        self.channel.num_users()
    }

    pub fn num_leds(&self) -> usize {
        self.channel.num_leds()
    }

    /// `N * U_LED * B_DC + P_cir`.
    pub fn dc_power(&self, dc_bias: f64) -> f64 {
        self.num_leds() as f64 * self.qos.led_voltage * dc_bias + self.qos.circuit_power
    }

    pub fn rho_min(&self) -> Vec<f64> {
        self.profiles.iter().map(|p| p.rho_min).collect()
    }
}

/// A candidate solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    /// `(K + 1) x N` beamforming amplitudes in amperes; row 0 is the common beam.
    pub beams: Vec<Vec<f64>>,
    pub dc_bias: f64,
    /// `[a_0, a_1, ..., a_K]` in bps/Hz.
    pub common_rates: Vec<f64>,
    pub rho: Vec<f64>,
}

impl Design {
    /// All-zero beams and rates, uncompressed.
    pub fn zeros(num_users: usize, num_leds: usize, dc_bias: f64) -> Self {
        Self {
            beams: vec![vec![0.0; num_leds]; num_users + 1],
            dc_bias,
            common_rates: vec![0.0; num_users + 1],
            rho: vec![1.0; num_users],
        }
    }

    pub fn num_users(&self) -> usize {
        self.rho.len()
    }

    pub fn num_leds(&self) -> usize {
        self.beams.first().map_or(0, Vec::len)
    }

    pub fn w_common(&self) -> &[f64] {
        &self.beams[0]
    }

    pub fn w_private(&self, user: usize) -> &[f64] {
        &self.beams[user + 1]
    }

    /// `sum_l ||w_l||^2`.
    pub fn ac_power(&self) -> f64 {
        self.beams.iter().flatten().map(|w| w * w).sum()
    }

    /// `sum_l |w_{l,i}|` for every LED `i`.
    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.num_leds())
            .map(|i| self.beams.iter().map(|b| b[i].abs()).sum())
            .collect()
    }

    pub fn max_column_sum(&self) -> f64 {
        self.column_sums().into_iter().fold(0.0, f64::max)
    }

    fn check_shape(&self, problem: &Problem) -> Result<()> {
        let (k, n) = (problem.num_users(), problem.num_leds());
        if self.beams.len() != k + 1
            || self.beams.iter().any(|b| b.len() != n)
            || self.common_rates.len() != k + 1
            || self.rho.len() != k
        {
            return Err(Error::Dimension(format!(
                "design does not match K = {k}, N = {n}"
            )));
        }
        Ok(())
    }
}

/// One SINR-limited decoding step: `listener` decodes `stream` while the
/// `interferers` are still present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeTerm {
    pub stream: usize,
    pub listener: usize,
    pub interferers: Vec<usize>,
}

/// Rate structure of a multiple-access scheme, resolved for a given problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RateModel {
    pub scheme: Scheme,
    /// Common beam and common-rate split exist.
    pub has_common: bool,
    /// `a_0 >= R_0` is enforced on the common stream.
    pub knowledge_in_common: bool,
    /// Knowledge rate carried inside every private stream (SDMA/NOMA).
    pub unicast_knowledge: f64,
    /// Compression ratios are pinned to 1.
    pub fixed_rho: bool,
    /// Decoding steps for the common stream, one per listener.
    pub common_terms: Vec<DecodeTerm>,
    /// `private_terms[k]`: every step that limits the private rate of user `k`.
    pub private_terms: Vec<Vec<DecodeTerm>>,
}

impl RateModel {
    /// Rate model of `scheme` on `problem`. `conventional_keeps_knowledge`
    /// retains `a_0 >= R_0` for the conventional scheme.
    pub fn new(scheme: Scheme, problem: &Problem, conventional_keeps_knowledge: bool) -> Self {
        match scheme {
            Scheme::PscomNoma => Self::noma_with_order(problem, &noma_strength_order(&problem.channel)),
            _ => Self::build(scheme, problem.num_users(), problem.qos.knowledge_rate_min, conventional_keeps_knowledge),
        }
    }

    fn build(scheme: Scheme, k: usize, r0: f64, keep_knowledge: bool) -> Self {
        let has_common = matches!(scheme, Scheme::PscomRsma | Scheme::ConventionalRsma);
        let privates: Vec<usize> = (1..=k).collect();
        let common_terms = if has_common {
            (0..k)
                .map(|j| DecodeTerm { stream: 0, listener: j, interferers: privates.clone() })
                .collect()
        } else {
            Vec::new()
        };
        let private_terms = (0..k)
            .map(|u| {
                vec![DecodeTerm {
                    stream: u + 1,
                    listener: u,
                    interferers: privates.iter().copied().filter(|&s| s != u + 1).collect(),
                }]
            })
            .collect();
        let (knowledge_in_common, unicast_knowledge) = match scheme {
            Scheme::PscomRsma => (true, 0.0),
            Scheme::ConventionalRsma => (keep_knowledge, 0.0),
            Scheme::PscomSdma | Scheme::PscomNoma => (false, r0),
        };
        Self {
            scheme,
            has_common,
            knowledge_in_common,
            unicast_knowledge,
            fixed_rho: scheme == Scheme::ConventionalRsma,
            common_terms,
            private_terms,
        }
    }

    /// NOMA rate model for an explicit strength ranking (`strong_first[0]` is
    /// the strongest user). Weaker users' streams are decoded and cancelled first,
    /// so the stream of user `k` must be decodable by `k` and by every stronger
    /// user, with only the stronger users' streams left as interference.
    pub fn noma_with_order(problem: &Problem, strong_first: &[usize]) -> Self {
        let k = problem.num_users();
        let mut model = Self::build(Scheme::PscomNoma, k, problem.qos.knowledge_rate_min, false);
        let rank = |u: usize| strong_first.iter().position(|&s| s == u).expect("order covers all users");
        model.private_terms = (0..k)
            .map(|u| {
                let stronger: Vec<usize> = (0..k).filter(|&j| rank(j) < rank(u)).collect();
                let interferers: Vec<usize> = stronger.iter().map(|&j| j + 1).collect();
                std::iter::once(u)
                    .chain(stronger.iter().copied())
                    .map(|listener| DecodeTerm { stream: u + 1, listener, interferers: interferers.clone() })
                    .collect()
            })
            .collect();
        model
    }

    /// Bits per second per Hz that user `k` receives for itself before
    /// dividing by the compression ratio.
    pub fn payload(&self, a_k: f64, r_k: f64) -> f64 {
        a_k + r_k - self.unicast_knowledge
    }
}

/// Users sorted by descending channel norm, ties broken by index.
pub fn noma_strength_order(channel: &ChannelMatrix) -> Vec<usize> {
    let mut order: Vec<usize> = (0..channel.num_users()).collect();
    order.sort_by(|&a, &b| {
        channel
            .row_norm(b)
            .partial_cmp(&channel.row_norm(a))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log2(1 + (2/pi e) |h^T w_s|^2 / (sum_{l in I} |h^T w_l|^2 + sigma2))`.
pub fn stream_rate(h: &[f64], beams: &[Vec<f64>], stream: usize, interferers: &[usize], sigma2: f64) -> f64 {
    let desired = dot(h, &beams[stream]).powi(2);
    let interference: f64 = interferers.iter().map(|&l| dot(h, &beams[l]).powi(2)).sum();
    (1.0 + VLC_RATE_COEFF * desired / (interference + sigma2)).log2()
}

/// Rate at which user `k` (channel `h_k`) decodes the common message.
pub fn common_rate(h_k: &[f64], design: &Design, sigma2: f64) -> f64 {
    let privates: Vec<usize> = (1..design.beams.len()).collect();
    stream_rate(h_k, &design.beams, 0, &privates, sigma2)
}

/// Rate of user `k`'s private message after the common message is removed.
pub fn private_rate(h_k: &[f64], design: &Design, user: usize, sigma2: f64) -> f64 {
    let others: Vec<usize> = (1..design.beams.len()).filter(|&l| l != user + 1).collect();
    stream_rate(h_k, &design.beams, user + 1, &others, sigma2)
}

/// `(a_k + r_k) / rho_k`.
pub fn effective_rate(a_k: f64, r_k: f64, rho_k: f64) -> Result<f64> {
    if !(rho_k > 0.0) {
        return Err(Error::Domain(format!("compression ratio must be positive, got {rho_k}")));
    }
    Ok((a_k + r_k) / rho_k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub p_comp: f64,
    pub p_ac: f64,
    pub p_dc: f64,
}

impl PowerBreakdown {
    pub fn total(&self) -> f64 {
        self.p_comp + self.p_ac + self.p_dc
    }
}

pub fn power_breakdown(design: &Design, problem: &Problem) -> Result<PowerBreakdown> {
    Ok(PowerBreakdown {
        p_comp: computation_power(&problem.profiles, &design.rho, problem.eta)?,
        p_ac: design.ac_power(),
        p_dc: problem.dc_power(design.dc_bias),
    })
}

/// Per-user rates under a rate model: `(c_k, r_k)`; `c` is empty when the
/// scheme has no common stream.
pub fn user_rates(design: &Design, problem: &Problem, model: &RateModel) -> (Vec<f64>, Vec<f64>) {
    let h = &problem.channel;
    let noise = &problem.qos.noise_power;
    let rate = |t: &DecodeTerm| stream_rate(h.row(t.listener), &design.beams, t.stream, &t.interferers, noise[t.listener]);
    let common = model.common_terms.iter().map(rate).collect();
    let private = model
        .private_terms
        .iter()
        .map(|terms| terms.iter().map(rate).fold(f64::INFINITY, f64::min))
        .collect();
    (common, private)
}

/// Named constraint of the joint problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintId {
    PowerBudget,
    /// LED drive signal must stay inside the linear current range.
    Clipping(usize),
    CommonDecoding(usize),
    KnowledgeRate,
    /// Knowledge carried in the private stream of a user (SDMA/NOMA).
    KnowledgeUnicast(usize),
    MinEffectiveRate(usize),
    /// Index into `common_rates`.
    NonNegativeRate(usize),
    CompressionBounds(usize),
    /// Variables the scheme pins (absent common beam, `a_0 = 0`, `rho = 1`).
    SchemeStructure,
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PowerBudget => write!(f, "power_budget"),
            Self::Clipping(i) => write!(f, "clipping[led {i}]"),
            Self::CommonDecoding(k) => write!(f, "common_decoding[user {k}]"),
            Self::KnowledgeRate => write!(f, "knowledge_rate"),
            Self::KnowledgeUnicast(k) => write!(f, "knowledge_unicast[user {k}]"),
            Self::MinEffectiveRate(k) => write!(f, "min_effective_rate[user {k}]"),
            Self::NonNegativeRate(i) => write!(f, "nonnegative_rate[a_{i}]"),
            Self::CompressionBounds(k) => write!(f, "compression_bounds[user {k}]"),
            Self::SchemeStructure => write!(f, "scheme_structure"),
        }
    }
}

/// Signed slack of a constraint; negative means violated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub id: ConstraintId,
    pub residual: f64,
}

/// Full evaluation of a design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub common_rate_per_user: Vec<f64>,
    pub private_rate: Vec<f64>,
    pub effective_rate: Vec<f64>,
    pub p_comp: f64,
    pub p_ac: f64,
    pub p_dc: f64,
    pub energy_efficiency: f64,
    pub violations: Vec<Residual>,
}

impl EvalReport {
    pub fn p_total(&self) -> f64 {
        self.p_comp + self.p_ac + self.p_dc
    }

    pub fn sum_effective_rate(&self) -> f64 {
        self.effective_rate.iter().sum()
    }

    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn max_violation(&self) -> f64 {
        self.violations.iter().map(|v| -v.residual).fold(0.0, f64::max)
    }
}

fn effective_rates(design: &Design, model: &RateModel, private: &[f64]) -> Result<Vec<f64>> {
    (0..design.num_users())
        .map(|k| {
            let a_k = if model.has_common { design.common_rates[k + 1] } else { 0.0 };
            effective_rate(a_k - model.unicast_knowledge, private[k], design.rho[k])
        })
        .collect()
}

/// Sum effective rate over total power. Uses the allocated common rates, not
/// the decodable common rates.
pub fn energy_efficiency(design: &Design, problem: &Problem, model: &RateModel) -> Result<f64> {
    design.check_shape(problem)?;
    let (_, private) = user_rates(design, problem, model);
    let eff = effective_rates(design, model, &private)?;
    let power = power_breakdown(design, problem)?;
    Ok(eff.iter().sum::<f64>() / power.total())
}

/// Every constraint's signed residual, in a stable order.
pub fn constraint_residuals(design: &Design, problem: &Problem, model: &RateModel) -> Result<Vec<Residual>> {
    design.check_shape(problem)?;
    let qos = &problem.qos;
    let (i_l, i_u) = qos.drive_current;
    let mut out = Vec::new();
    let mut push = |id, residual| out.push(Residual { id, residual });

    let p_comp: f64 = problem
        .profiles
        .iter()
        .zip(&design.rho)
        .map(|(p, r)| p.overhead_unchecked(*r).max(0.0))
        .sum::<f64>()
        * problem.eta;
    let total = p_comp + design.ac_power() + problem.dc_power(design.dc_bias);
    push(ConstraintId::PowerBudget, qos.power_max - total);

    let headroom = (design.dc_bias - i_l).min(i_u - design.dc_bias);
    for (i, s) in design.column_sums().into_iter().enumerate() {
        push(ConstraintId::Clipping(i), headroom - s);
    }

    let (common, private) = user_rates(design, problem, model);
    let a = &design.common_rates;
    let common_load: f64 = a.iter().sum();
    if model.has_common {
        for (k, c) in common.iter().enumerate() {
            push(ConstraintId::CommonDecoding(k), c - common_load);
        }
    }
    if model.knowledge_in_common {
        push(ConstraintId::KnowledgeRate, a[0] - qos.knowledge_rate_min);
    }
    if model.unicast_knowledge > 0.0 {
        for (k, r) in private.iter().enumerate() {
            push(ConstraintId::KnowledgeUnicast(k), r - model.unicast_knowledge);
        }
    }
    for k in 0..design.num_users() {
        let a_k = if model.has_common { a[k + 1] } else { 0.0 };
        let eff = (model.payload(a_k, private[k])) / design.rho[k];
        push(ConstraintId::MinEffectiveRate(k), eff - qos.user_rate_min[k]);
    }
    for (i, ai) in a.iter().enumerate() {
        push(ConstraintId::NonNegativeRate(i), *ai);
    }
    for (k, (r, p)) in design.rho.iter().zip(&problem.profiles).enumerate() {
        let slack = if model.fixed_rho { -(r - 1.0).abs() } else { (r - p.rho_min).min(1.0 - r) };
        push(ConstraintId::CompressionBounds(k), slack);
    }

    let mut pinned: f64 = 0.0;
    if !model.has_common {
        pinned = design.beams[0].iter().chain(a.iter()).map(|v| v.abs()).fold(0.0, f64::max);
    } else if !model.knowledge_in_common {
        pinned = a[0].abs();
    }
    push(ConstraintId::SchemeStructure, -pinned);
    Ok(out)
}

/// Constraints violated by more than `tol` (absolute).
pub fn check_feasibility(design: &Design, problem: &Problem, model: &RateModel, tol: f64) -> Result<Vec<Residual>> {
    Ok(constraint_residuals(design, problem, model)?
        .into_iter()
        .filter(|r| !(r.residual >= -tol))
        .collect())
}

pub fn evaluate(design: &Design, problem: &Problem, model: &RateModel) -> Result<EvalReport> {
    design.check_shape(problem)?;
    let (common, private) = user_rates(design, problem, model);
    let effective_rate = effective_rates(design, model, &private)?;
    let power = power_breakdown(design, problem)?;
    let energy_efficiency = effective_rate.iter().sum::<f64>() / power.total();
    Ok(EvalReport {
        common_rate_per_user: common,
        private_rate: private,
        effective_rate,
        p_comp: power.p_comp,
        p_ac: power.p_ac,
        p_dc: power.p_dc,
        energy_efficiency,
        violations: check_feasibility(design, problem, model, FEASIBILITY_TOL)?,
    })
}
