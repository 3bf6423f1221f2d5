//! Line-of-sight Lambertian channel between ceiling LEDs and upward-facing
//! photodetectors.
//!
//! LEDs point straight down and every photodetector points straight up, so the
//! irradiance and incidence angles of a link coincide and both equal
//! `acos(dz / d)`. Reflections are not modelled.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the room, in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(p: [f64; 3]) -> Self {
        Self::new(p[0], p[1], p[2])
    }
}

/// Optical front-end constants shared by all links. SI units throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalParams {
    /// Photodetector area in m².
    pub pd_area: f64,
    pub filter_gain: f64,
    pub refractive_index: f64,
    /// LED semi-angle at half power, radians in (0, π/2).
    pub semi_angle: f64,
    /// Photodetector field of view, radians in (0, π/2].
    pub fov: f64,
}

impl OpticalParams {
    /// Lists every violated invariant; empty when the parameters are usable.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.pd_area > 0.0) {
            v.push(format!("optical.pd_area must be > 0 (got {})", self.pd_area));
        }
        if !(self.filter_gain > 0.0) {
            v.push(format!("optical.filter_gain must be > 0 (got {})", self.filter_gain));
        }
        if !(self.refractive_index >= 1.0) {
            v.push(format!(
                "optical.refractive_index must be >= 1 (got {})",
                self.refractive_index
            ));
        }
        if !(self.semi_angle > 0.0 && self.semi_angle < FRAC_PI_2) {
            v.push(format!(
                "optical.semi_angle must lie strictly inside (0, 90) degrees (got {:.4} deg)",
                self.semi_angle.to_degrees()
            ));
        }
        if !(self.fov > 0.0 && self.fov <= FRAC_PI_2) {
            v.push(format!(
                "optical.fov must lie in (0, 90] degrees (got {:.4} deg)",
                self.fov.to_degrees()
            ));
        }
        v
    }
}

/// Room extents plus LED and user positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    /// Extents along x, y, z in metres; the floor is z = 0.
    pub room: [f64; 3],
    pub leds: Vec<Point3>,
    pub users: Vec<Point3>,
}

impl Scene {
    pub fn num_leds(&self) -> usize {
        self.leds.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.room.iter().any(|e| !(*e > 0.0)) {
            v.push(format!("room extents must be positive (got {:?})", self.room));
        }
        if self.leds.is_empty() {
            v.push("at least one LED is required".to_string());
        }
        if self.users.is_empty() {
            v.push("at least one user is required".to_string());
        }
        let inside = |p: &Point3| {
            (0.0..=self.room[0]).contains(&p.x)
                && (0.0..=self.room[1]).contains(&p.y)
                && (0.0..=self.room[2]).contains(&p.z)
        };
        for (i, p) in self.leds.iter().enumerate() {
            if !inside(p) {
                v.push(format!("LED {i} at {p:?} lies outside the room"));
            }
        }
        for (k, p) in self.users.iter().enumerate() {
            if !inside(p) {
                v.push(format!("user {k} at {p:?} lies outside the room"));
            }
        }
        for (i, led) in self.leds.iter().enumerate() {
            for (k, user) in self.users.iter().enumerate() {
                if !(led.z > user.z) {
                    v.push(format!("LED {i} must be strictly above user {k}"));
                }
            }
        }
        v
    }
}

/// K×N matrix of non-negative LoS gains; row `k` is the gain vector of user `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMatrix {
    gains: Vec<Vec<f64>>,
}

impl ChannelMatrix {
    /// Builds a matrix from explicit rows. All rows must have the same length
    /// and every entry must be finite and non-negative.
    pub fn from_rows(gains: Vec<Vec<f64>>) -> Result<Self> {
        let n = gains.first().map_or(0, Vec::len);
        if gains.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("channel rows have unequal lengths".into()));
        }
        if gains.iter().flatten().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::Domain("channel gains must be finite and non-negative".into()));
        }
        Ok(Self { gains })
    }

    pub fn num_users(&self) -> usize {
        self.gains.len()
    }

    pub fn num_leds(&self) -> usize {
        self.gains.first().map_or(0, Vec::len)
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.gains[k]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.gains
    }

    pub fn get(&self, k: usize, n: usize) -> f64 {
        self.gains[k][n]
    }

    pub fn row_norm(&self, k: usize) -> f64 {
        self.gains[k].iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Lambert emission order `m = -ln 2 / ln cos(semi_angle)`.
pub fn lambert_index(semi_angle: f64) -> Result<f64> {
    if !(semi_angle > 0.0 && semi_angle < FRAC_PI_2) {
        return Err(Error::Domain(format!(
            "semi-angle must lie strictly inside (0, pi/2), got {semi_angle}"
        )));
    }
    let m = -std::f64::consts::LN_2 / semi_angle.cos().ln();
    if !m.is_finite() {
        return Err(Error::Domain(format!("lambert index is not finite for semi-angle {semi_angle}")));
    }
    Ok(m)
}

/// Optical concentrator gain. The FoV boundary itself counts as inside.
pub fn concentrator_gain(incidence: f64, params: &OpticalParams) -> f64 {
    if incidence > params.fov {
        0.0
    } else {
        params.refractive_index.powi(2) / params.fov.sin().powi(2)
    }
}

/// DC gain of the LoS link from `led` to `user`.
pub fn channel_gain(led: &Point3, user: &Point3, params: &OpticalParams) -> Result<f64> {
    let d = led.distance(user);
    if !(d > 0.0) {
        return Err(Error::Domain("LED and receiver coincide".into()));
    }
    let dz = led.z - user.z;
    if !(dz > 0.0) {
        return Err(Error::Domain(format!(
            "LED at {led:?} is not strictly above receiver at {user:?}"
        )));
    }
    let m = lambert_index(params.semi_angle)?;
    let cos_angle = (dz / d).min(1.0);
    let incidence = cos_angle.acos();
    let g = concentrator_gain(incidence, params);
    if g == 0.0 {
        return Ok(0.0);
    }
    Ok((m + 1.0) * params.pd_area * cos_angle.powf(m) * cos_angle * params.filter_gain * g
        / (2.0 * PI * d * d))
}

pub fn build_channel_matrix(scene: &Scene, params: &OpticalParams) -> Result<ChannelMatrix> {
    let gains = scene
        .users
        .iter()
        .map(|u| scene.leds.iter().map(|l| channel_gain(l, u, params)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    ChannelMatrix::from_rows(gains)
}

/// Aggregate floor-level gain `sum_n h(led_n, p)` sampled on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMap {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `values[iy][ix]`, rows ordered by y.
    pub values: Vec<Vec<f64>>,
}

impl ChannelMap {
    pub fn max(&self) -> (f64, f64, f64) {
        self.extreme(|a, b| a > b)
    }

    pub fn min(&self) -> (f64, f64, f64) {
        self.extreme(|a, b| a < b)
    }

    fn extreme(&self, better: impl Fn(f64, f64) -> bool) -> (f64, f64, f64) {
        let mut best = (self.xs[0], self.ys[0], self.values[0][0]);
        for (iy, row) in self.values.iter().enumerate() {
            for (ix, v) in row.iter().enumerate() {
                if better(*v, best.2) {
                    best = (self.xs[ix], self.ys[iy], *v);
                }
            }
        }
        best
    }

    /// Ratio between the strongest and the weakest grid cell.
    pub fn dynamic_range(&self) -> f64 {
        self.max().2 / self.min().2
    }

    /// Writes `x,y,gain` rows in row-major order with 9 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "gain"])?;
        for (iy, row) in self.values.iter().enumerate() {
            for (ix, v) in row.iter().enumerate() {
                w.write_record([sig9(self.xs[ix]), sig9(self.ys[iy]), sig9(*v)])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Formats with 9 significant digits.
pub(crate) fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

fn grid_axis(extent: f64, step: f64) -> Vec<f64> {
    let count = (extent / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| (i as f64 * step).min(extent)).collect()
}

/// Samples the aggregate gain on the floor (z = 0) with grid spacing `resolution`.
pub fn floor_channel_map(scene: &Scene, params: &OpticalParams, resolution: f64) -> Result<ChannelMap> {
    if !(resolution > 0.0) {
        return Err(Error::Domain(format!("resolution must be positive, got {resolution}")));
    }
    let xs = grid_axis(scene.room[0], resolution);
    let ys = grid_axis(scene.room[1], resolution);
    let values = ys
        .iter()
        .map(|&y| {
            xs.iter()
                .map(|&x| {
                    let p = Point3::new(x, y, 0.0);
                    scene.leds.iter().map(|l| channel_gain(l, &p, params)).sum::<Result<f64>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ChannelMap { xs, ys, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_params() -> OpticalParams {
        OpticalParams {
            pd_area: 1e-4,
            filter_gain: 1.0,
            refractive_index: 1.5,
            semi_angle: 60f64.to_radians(),
            fov: 75f64.to_radians(),
        }
    }

    fn table_scene() -> Scene {
        Scene {
            room: [5.0, 5.0, 3.0],
            leds: vec![
                Point3::new(2.0, 1.5, 3.0),
                Point3::new(2.0, 3.5, 3.0),
                Point3::new(3.0, 1.5, 3.0),
                Point3::new(3.0, 3.5, 3.0),
            ],
            users: vec![Point3::new(1.5, 4.0, 0.0), Point3::new(2.5, 4.5, 0.0)],
        }
    }

    #[test]
    fn lambert_index_closed_forms() {
        assert!((lambert_index(60f64.to_radians()).unwrap() - 1.0).abs() < 1e-12);
        assert!((lambert_index(45f64.to_radians()).unwrap() - 2.0).abs() < 1e-12);
        // -ln2 / ln(cos 30deg) evaluated independently: 0.693147.../0.143841...
        assert!((lambert_index(30f64.to_radians()).unwrap() - 4.818841).abs() < 1e-5);
    }

    #[test]
    fn lambert_index_rejects_out_of_range() {
        assert!(lambert_index(0.0).is_err());
        assert!(lambert_index(FRAC_PI_2).is_err());
        assert!(lambert_index(95f64.to_radians()).is_err());
        assert!(lambert_index(-0.1).is_err());
    }

    #[test]
    fn concentrator_gain_branches() {
        let p = table_params();
        assert!((concentrator_gain(0.0, &p) - 2.411542).abs() < 1e-5);
        assert_eq!(concentrator_gain(80f64.to_radians(), &p), 0.0);
        // closed FoV: equality uses the non-zero branch
        assert!(concentrator_gain(p.fov, &p) > 0.0);
        let unit = OpticalParams { refractive_index: 1.0, fov: FRAC_PI_2, ..p };
        assert!((concentrator_gain(10f64.to_radians(), &unit) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gain_directly_below_led() {
        let p = table_params();
        let h = channel_gain(&Point3::new(1.0, 1.0, 3.0), &Point3::new(1.0, 1.0, 0.0), &p).unwrap();
        // 2 * 1e-4 * 2.41154 / (2 pi 9)
        assert!((h - 8.529e-6).abs() < 1e-9, "{h}");
    }

    #[test]
    fn gain_outside_fov_is_zero() {
        let p = OpticalParams { fov: 20f64.to_radians(), ..table_params() };
        let h = channel_gain(&Point3::new(0.0, 0.0, 1.0), &Point3::new(3.0, 0.0, 0.0), &p).unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn inverse_square_law_at_fixed_angles() {
        let p = table_params();
        let user = Point3::new(0.0, 0.0, 0.0);
        let h1 = channel_gain(&Point3::new(1.0, 1.0, 1.5), &user, &p).unwrap();
        let h2 = channel_gain(&Point3::new(2.0, 2.0, 3.0), &user, &p).unwrap();
        assert!((h1 / h2 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn gain_errors() {
        let p = table_params();
        let a = Point3::new(1.0, 1.0, 1.0);
        assert!(channel_gain(&a, &a, &p).is_err());
        assert!(channel_gain(&Point3::new(1.0, 1.0, 0.0), &Point3::new(1.0, 2.0, 0.0), &p).is_err());
    }

    #[test]
    fn gain_scales_linearly_with_area_and_filter() {
        let p = table_params();
        let led = Point3::new(2.0, 2.0, 3.0);
        let user = Point3::new(1.2, 2.7, 0.0);
        let h = channel_gain(&led, &user, &p).unwrap();
        let h_area = channel_gain(&led, &user, &OpticalParams { pd_area: 3e-4, ..p }).unwrap();
        let h_filter = channel_gain(&led, &user, &OpticalParams { filter_gain: 0.5, ..p }).unwrap();
        assert!((h_area / h - 3.0).abs() < 1e-12);
        assert!((h_filter / h - 0.5).abs() < 1e-12);
    }

    #[test]
    fn table_scene_matrix_is_positive() {
        let h = build_channel_matrix(&table_scene(), &table_params()).unwrap();
        assert_eq!((h.num_users(), h.num_leds()), (2, 4));
        assert!(h.rows().iter().flatten().all(|g| *g > 0.0));
    }

    #[test]
    fn single_link_matrix() {
        let scene = Scene {
            room: [5.0, 5.0, 3.0],
            leds: vec![Point3::new(2.5, 2.5, 3.0)],
            users: vec![Point3::new(2.5, 2.5, 0.0)],
        };
        let h = build_channel_matrix(&scene, &table_params()).unwrap();
        assert!((h.get(0, 0) - 8.529e-6).abs() < 1e-9);
    }

    #[test]
    fn permuting_users_and_leds_permutes_matrix() {
        let p = table_params();
        let scene = table_scene();
        let h = build_channel_matrix(&scene, &p).unwrap();
        let mut swapped = scene.clone();
        swapped.users.swap(0, 1);
        swapped.leds.swap(1, 3);
        let hs = build_channel_matrix(&swapped, &p).unwrap();
        for k in 0..2 {
            for n in 0..4 {
                let sn = [0, 3, 2, 1][n];
                assert_eq!(hs.get(1 - k, sn), h.get(k, n));
            }
        }
    }

    #[test]
    fn floor_map_shape_and_symmetry() {
        let map = floor_channel_map(&table_scene(), &table_params(), 0.1).unwrap();
        assert_eq!(map.xs.len(), 51);
        assert_eq!(map.ys.len(), 51);
        let n = map.xs.len();
        for iy in 0..n {
            for ix in 0..n {
                let v = map.values[iy][ix];
                assert!((v - map.values[iy][n - 1 - ix]).abs() <= 1e-12 * v);
                assert!((v - map.values[n - 1 - iy][ix]).abs() <= 1e-12 * v);
            }
        }
        let (mx, my, _) = map.max();
        assert!(((mx - 2.5).powi(2) + (my - 2.5).powi(2)).sqrt() <= 0.5);
        let (nx, ny, _) = map.min();
        assert!((nx == 0.0 || nx == 5.0) && (ny == 0.0 || ny == 5.0));
        let centre = map.values[25][25];
        for (iy, ix) in [(0, 0), (0, 50), (50, 0), (50, 50)] {
            assert!(centre >= map.values[iy][ix]);
        }
        let ratio = map.dynamic_range();
        assert!((2.5..=4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn floor_map_rejects_bad_resolution() {
        assert!(floor_channel_map(&table_scene(), &table_params(), 0.0).is_err());
    }

    #[test]
    fn channel_map_csv_layout() {
        let scene = table_scene();
        let map = floor_channel_map(&scene, &table_params(), 2.5).unwrap();
        let mut buf = Vec::new();
        map.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "x,y,gain");
        assert_eq!(lines.len(), 1 + 9);
        assert!(lines[1].starts_with("0.00000000e0,0.00000000e0,"));
        assert!(lines[2].starts_with("2.50000000e0,0.00000000e0,"));
    }

    #[test]
    fn scene_validation() {
        let mut s = table_scene();
        assert!(s.validate().is_empty());
        s.users.push(Point3::new(1.0, 1.0, 3.0));
        s.leds.push(Point3::new(9.0, 1.0, 3.0));
        let v = s.validate();
        assert!(v.iter().any(|m| m.contains("outside")));
        assert!(v.iter().any(|m| m.contains("strictly above")));
    }
}
