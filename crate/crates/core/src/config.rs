//! Scenario configuration: JSON text merged over the built-in defaults,
//! converted to SI units and validated.
//!
//! Config units differ from the solver's: `optical.pd_area` is in cm², angles
//! are in degrees, and powers may be written as numbers (watts, except noise
//! which is dBm) or strings such as `"-100 dBm"`, `"10 W"`, `"500 mW"`.

use std::path::Path;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::alternating::SolverOptions;
use crate::benchmarks::Scheme;
use crate::dinkelbach::DinkelbachOptions;
use crate::error::{Error, Result};
use crate::geometry::{build_channel_matrix, OpticalParams, Point3, Scene};
use crate::model::{Problem, QosParams};
use crate::sca::ScaOptions;
use crate::semantics::{validate_profile, CompressionProfile, Segment};

/// Knowledge-update rate used when a config does not set one.
pub const DEFAULT_KNOWLEDGE_RATE: f64 = 0.1;

/// Defaults for every field, in config units.
pub fn default_config_value() -> Value {
    json!({
        "scene": {
            "room": [5.0, 5.0, 3.0],
            "leds": [[2.0, 1.5, 3.0], [2.0, 3.5, 3.0], [3.0, 1.5, 3.0], [3.0, 3.5, 3.0]],
            "users": [[1.5, 4.0, 0.0], [2.5, 4.5, 0.0]]
        },
        "optical": {
            "pd_area": 1.0,
            "filter_gain": 1.0,
            "refractive_index": 1.5,
            "semi_angle": 60.0,
            "fov": 75.0
        },
        "qos": {
            "knowledge_rate": DEFAULT_KNOWLEDGE_RATE,
            "rate_min": 1.0,
            "power_max": 10.0,
            "drive_current": [0.1, 1.0],
            "led_voltage": 3.0,
            "circuit_power": 2.0,
            "noise": -100.0
        },
        "profile": {
            "segments": [[-1.0, 1.0], [-3.0, 2.2], [-8.0, 5.0]],
            "rho_min": 0.2
        },
        "eta": 1.0,
        "scheme": "pscom-rsma",
        "conventional_keeps_knowledge": false,
        "solver": {
            "tol": 1e-4,
            "max_outer": 30,
            "dc_candidates": 12,
            "sca_tol": 1e-4,
            "sca_max_iters": 50,
            "barrier_tol": 1e-9,
            "dinkelbach_tol": 1e-4,
            "dinkelbach_max_iters": 100,
            "dca_max_iters": 100,
            "workers": 0,
            "seed": 0
        },
        "scenarios": {
            "led_voltage": [2.0, 2.25, 2.5, 2.75, 3.0, 3.25, 3.5, 3.75, 4.0],
            "placements": [
                [[1.5, 4.0, 0.0], [2.5, 4.5, 0.0]],
                [[2.0, 2.0, 0.0], [3.0, 3.0, 0.0]],
                [[0.5, 0.5, 0.0], [1.5, 1.0, 0.0]]
            ]
        }
    })
}

/// Recursively overlays `top` onto `base`. Objects merge key by key; any
/// other value, arrays included, replaces what was there.
pub fn merge(base: &mut Value, top: &Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub options: SolverOptions,
    /// Sweep worker threads; 0 uses every core.
    pub workers: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSettings {
    pub led_voltage: Vec<f64>,
    pub placements: Vec<Vec<Point3>>,
}

#[derive(Debug, Clone)]
pub struct NetworkConfig {
    /// The merged document in config units; sweeps edit this and re-parse.
    pub raw: Value,
    pub scene: Scene,
    pub optical: OpticalParams,
    pub qos: QosParams,
    pub profiles: Vec<CompressionProfile>,
    pub eta: f64,
    pub scheme: Scheme,
    pub conventional_keeps_knowledge: bool,
    pub solver: SolverSettings,
    pub scenarios: ScenarioSettings,
}

impl NetworkConfig {
    pub fn num_users(&self) -> usize {
        self.scene.num_users()
    }

    pub fn problem(&self) -> Result<Problem> {
        Ok(Problem {
            channel: build_channel_matrix(&self.scene, &self.optical)?,
            qos: self.qos.clone(),
            profiles: self.profiles.clone(),
            eta: self.eta,
        })
    }

    /// Copy with one dotted-path field replaced.
    pub fn with_param(&self, path: &str, value: f64) -> Result<NetworkConfig> {
        let mut raw = self.raw.clone();
        set_param(&mut raw, path, value)?;
        from_value(&raw)
    }

    /// Copy with different user positions.
    pub fn with_users(&self, users: &[Point3]) -> Result<NetworkConfig> {
        let mut raw = self.raw.clone();
        raw["scene"]["users"] = Value::Array(users.iter().map(|p| json!([p.x, p.y, p.z])).collect());
        from_value(&raw)
    }

    /// Canonical text of the merged document.
    pub fn snapshot(&self) -> String {
        serde_json::to_string_pretty(&self.raw).expect("JSON values always serialize")
    }
}

pub fn load_config(path: &Path) -> Result<NetworkConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<NetworkConfig> {
    let user: Value = serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
    if !user.is_object() {
        return Err(Error::Parse("config must be a JSON object".into()));
    }
    let mut raw = default_config_value();
    merge(&mut raw, &user);
    from_value(&raw)
}

/// Replaces the scalar at `path` (dot separated, numeric segments index
/// arrays) with `value`.
pub fn set_param(raw: &mut Value, path: &str, value: f64) -> Result<()> {
    let mut slot = &mut *raw;
    for seg in path.split('.') {
        slot = match slot {
            Value::Object(m) => m.get_mut(seg),
            Value::Array(a) => seg.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::Parse(format!("parameter path '{path}' does not resolve ('{seg}')")))?;
    }
    match slot {
        Value::Number(_) | Value::String(_) => {
            *slot = json!(value);
            Ok(())
        }
        _ => Err(Error::Parse(format!("parameter path '{path}' is not a scalar field"))),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    room: [f64; 3],
    leds: Vec<[f64; 3]>,
    users: Vec<[f64; 3]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptical {
    pd_area: f64,
    filter_gain: f64,
    refractive_index: f64,
    semi_angle: f64,
    fov: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    Many(Vec<T>),
    One(T),
}

impl<T: Clone> OneOrMany<T> {
    fn expand(&self, n: usize, what: &str, errs: &mut Vec<String>) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone(); n],
            OneOrMany::Many(v) => {
                if v.len() != n {
                    errs.push(format!("{what}: {} entries for {n} users", v.len()));
                }
                v.clone()
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQos {
    knowledge_rate: f64,
    rate_min: OneOrMany<f64>,
    power_max: Value,
    drive_current: [f64; 2],
    led_voltage: f64,
    circuit_power: Value,
    noise: OneOrMany<Value>,
}

#[derive(Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    segments: Vec<[f64; 2]>,
    rho_min: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    tol: f64,
    max_outer: usize,
    dc_candidates: usize,
    sca_tol: f64,
    sca_max_iters: usize,
    barrier_tol: f64,
    dinkelbach_tol: f64,
    dinkelbach_max_iters: usize,
    dca_max_iters: usize,
    workers: usize,
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenarios {
    led_voltage: Vec<f64>,
    placements: Vec<Vec<[f64; 3]>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scene: RawScene,
    optical: RawOptical,
    qos: RawQos,
    profile: OneOrMany<RawProfile>,
    eta: f64,
    scheme: String,
    conventional_keeps_knowledge: bool,
    solver: RawSolver,
    scenarios: RawScenarios,
}

/// Parses a power given as a number in `default_unit` or a string with a
/// `W`, `mW` or `dBm` suffix. Returns watts.
pub fn parse_power(v: &Value, default_unit: &str) -> std::result::Result<f64, String> {
    let (num, unit) = match v {
        Value::Number(n) => (n.as_f64().ok_or("non-finite number")?, default_unit.to_string()),
        Value::String(s) => {
            let s = s.trim().replace('\u{2212}', "-");
            let split = s.find(|c: char| c.is_ascii_alphabetic()).ok_or_else(|| format!("'{s}' has no unit"))?;
            let num: f64 = s[..split].trim().parse().map_err(|_| format!("'{s}' is not a number with a unit"))?;
            (num, s[split..].trim().to_string())
        }
        other => return Err(format!("expected a power, got {other}")),
    };
    match unit.as_str() {
        "W" => Ok(num),
        "mW" => Ok(num * 1e-3),
        "dBm" => Ok(10f64.powf((num - 30.0) / 10.0)),
        "dBW" => Ok(10f64.powf(num / 10.0)),
        u => Err(format!("unknown power unit '{u}'")),
    }
}

fn point(p: &[f64; 3]) -> Point3 {
    Point3::from(*p)
}

/// Parses a fully merged document.
pub fn from_value(raw: &Value) -> Result<NetworkConfig> {
    let rc: RawConfig = serde_json::from_value(raw.clone()).map_err(|e| Error::Parse(format!("config: {e}")))?;
    let mut errs = Vec::new();

    let scene = Scene {
        room: rc.scene.room,
        leds: rc.scene.leds.iter().map(point).collect(),
        users: rc.scene.users.iter().map(point).collect(),
    };
    let k = scene.num_users();
    if k == 0 {
        errs.push("scene.users must list at least one user".into());
    }
    errs.extend(scene.validate());

    let o = &rc.optical;
    let optical = OpticalParams {
        pd_area: o.pd_area * 1e-4,
        filter_gain: o.filter_gain,
        refractive_index: o.refractive_index,
        semi_angle: o.semi_angle.to_radians(),
        fov: o.fov.to_radians(),
    };
    errs.extend(optical.validate());

    let power = |v: &Value, unit: &str, name: &str, errs: &mut Vec<String>| match parse_power(v, unit) {
        Ok(w) => w,
        Err(e) => {
            errs.push(format!("{name}: {e}"));
            f64::NAN
        }
    };
    let q = &rc.qos;
    let power_max = power(&q.power_max, "W", "qos.power_max", &mut errs);
    let circuit_power = power(&q.circuit_power, "W", "qos.circuit_power", &mut errs);
    let noise_raw = q.noise.expand(k, "qos.noise", &mut errs);
    let noise_power = noise_raw.iter().map(|v| power(v, "dBm", "qos.noise", &mut errs)).collect();
    let qos = QosParams {
        knowledge_rate_min: q.knowledge_rate,
        user_rate_min: q.rate_min.expand(k, "qos.rate_min", &mut errs),
        power_max,
        drive_current: (q.drive_current[0], q.drive_current[1]),
        led_voltage: q.led_voltage,
        circuit_power,
        noise_power,
    };
    errs.extend(qos.validate(k));

    let profiles: Vec<CompressionProfile> = rc
        .profile
        .expand(k, "profile", &mut errs)
        .into_iter()
        .map(|p| CompressionProfile::new(p.segments.iter().map(|s| Segment::new(s[0], s[1])).collect(), p.rho_min))
        .collect();
    for (i, p) in profiles.iter().enumerate() {
        errs.extend(validate_profile(p).into_iter().map(|v| format!("profile[user {i}]: {v}")));
    }

    if !(rc.eta >= 0.0 && rc.eta.is_finite()) {
        errs.push(format!("eta must be a finite non-negative number (got {})", rc.eta));
    }
    let scheme = match rc.scheme.parse::<Scheme>() {
        Ok(s) => s,
        Err(e) => {
            errs.push(e.to_string());
            Scheme::PscomRsma
        }
    };

    let s = &rc.solver;
    for (name, v) in [("tol", s.tol), ("sca_tol", s.sca_tol), ("barrier_tol", s.barrier_tol), ("dinkelbach_tol", s.dinkelbach_tol)] {
        if !(v > 0.0 && v < 1.0) {
            errs.push(format!("solver.{name} must lie in (0, 1) (got {v})"));
        }
    }
    for (name, v) in [("max_outer", s.max_outer), ("sca_max_iters", s.sca_max_iters), ("dinkelbach_max_iters", s.dinkelbach_max_iters), ("dca_max_iters", s.dca_max_iters), ("dc_candidates", s.dc_candidates)] {
        if v == 0 {
            errs.push(format!("solver.{name} must be at least 1"));
        }
    }
    let solver = SolverSettings {
        options: SolverOptions {
            sca: ScaOptions { tol: s.sca_tol, max_iters: s.sca_max_iters, solver_tol: s.barrier_tol },
            dinkelbach: DinkelbachOptions { tol: s.dinkelbach_tol, max_outer: s.dinkelbach_max_iters, max_dca: s.dca_max_iters },
            tol: s.tol,
            max_outer: s.max_outer,
            dc_candidates: s.dc_candidates,
        },
        workers: s.workers,
        seed: s.seed,
    };

    let scenarios = ScenarioSettings {
        led_voltage: rc.scenarios.led_voltage.clone(),
        placements: rc.scenarios.placements.iter().map(|u| u.iter().map(point).collect()).collect(),
    };
    if scenarios.led_voltage.iter().any(|u| !(*u > 0.0)) {
        errs.push("scenarios.led_voltage values must be positive".into());
    }
    for (i, pl) in scenarios.placements.iter().enumerate() {
        if pl.len() != k {
            errs.push(format!("scenarios.placements[{i}] has {} users, scene has {k}", pl.len()));
        }
        let test = Scene { users: pl.clone(), ..scene.clone() };
        errs.extend(test.validate().into_iter().map(|e| format!("scenarios.placements[{i}]: {e}")));
    }

    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    Ok(NetworkConfig {
        raw: raw.clone(),
        scene,
        optical,
        qos,
        profiles,
        eta: rc.eta,
        scheme,
        conventional_keeps_knowledge: rc.conventional_keeps_knowledge,
        solver,
        scenarios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c = parse_config("{}").unwrap();
        assert_eq!(c.scene.num_leds(), 4);
        assert_eq!(c.num_users(), 2);
        assert_eq!(c.qos.power_max, 10.0);
        assert!((c.qos.noise_power[0] - 1e-13).abs() < 1e-25);
        assert!((c.optical.pd_area - 1e-4).abs() < 1e-18);
        assert!((c.optical.semi_angle - std::f64::consts::FRAC_PI_3).abs() < 1e-15);
        assert_eq!(c.profiles.len(), 2);
        assert_eq!(c.scheme, Scheme::PscomRsma);
        assert_eq!(c.solver.options, SolverOptions::default());
    }

    #[test]
    fn semi_angle_over_ninety_rejected() {
        let e = parse_config(r#"{"optical": {"semi_angle": 95}}"#).unwrap_err();
        assert!(matches!(e, Error::Config(_)), "{e}");
    }

    #[test]
    fn noise_string_in_dbm() {
        let c = parse_config(r#"{"qos": {"noise": "-100 dBm"}}"#).unwrap();
        assert!((c.qos.noise_power[1] - 1e-13).abs() < 1e-25);
        let c = parse_config(r#"{"qos": {"noise": "−100 dBm", "power_max": "9 W"}}"#).unwrap();
        assert!((c.qos.noise_power[0] - 1e-13).abs() < 1e-25);
        assert_eq!(c.qos.power_max, 9.0);
    }

    #[test]
    fn no_users_rejected() {
        let e = parse_config(r#"{"scene": {"users": []}}"#).unwrap_err();
        assert!(matches!(e, Error::Config(_)), "{e}");
    }

    #[test]
    fn every_violation_is_listed() {
        let e = parse_config(r#"{"optical": {"semi_angle": 95, "fov": 0}, "eta": -1, "qos": {"noise": "-100 dBx"}}"#).unwrap_err();
        let Error::Config(list) = e else { panic!("{e}") };
        assert!(list.len() >= 4, "{list:?}");
    }

    #[test]
    fn unknown_fields_and_bad_json_are_parse_errors() {
        assert!(matches!(parse_config(r#"{"optics": {}}"#), Err(Error::Parse(_))));
        assert!(matches!(parse_config("{"), Err(Error::Parse(_))));
    }

    #[test]
    fn param_paths() {
        let c = parse_config("{}").unwrap();
        let d = c.with_param("optical.semi_angle", 45.0).unwrap();
        assert!((d.optical.semi_angle - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        let d = c.with_param("qos.noise", -90.0).unwrap();
        assert!((d.qos.noise_power[0] - 1e-12).abs() < 1e-24);
        let d = c.with_param("scene.users.1.0", 3.0).unwrap();
        assert_eq!(d.scene.users[1].x, 3.0);
        assert!(c.with_param("optical.nope", 1.0).is_err());
        assert!(c.with_param("optical", 1.0).is_err());
    }

    #[test]
    fn per_user_profiles() {
        let c = parse_config(r#"{"profile": [{"segments": [[-2, 2]], "rho_min": 0.3}, {"segments": [[-1, 1]], "rho_min": 0.5}]}"#).unwrap();
        assert_eq!(c.profiles[1].rho_min, 0.5);
        let e = parse_config(r#"{"profile": [{"segments": [[1, 1]], "rho_min": 0.3}]}"#).unwrap_err();
        let Error::Config(list) = e else { panic!("{e}") };
        assert!(list.len() >= 2, "{list:?}");
    }
}
