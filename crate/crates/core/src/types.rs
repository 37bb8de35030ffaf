//! Shared domain types, units and coordinate conventions.
//!
//! Coordinates are sensor-centric: the radar and lidar sit at the origin,
//! `x` points forward, `y` to the left and `z` up. All three synthetic
//! sensors are colocated. The ground plane lies `mount_height` below the
//! origin (`z = -0.75` m by default).
//!
//! Units are SI throughout (m, s, Hz, m/s, rad) unless a field says
//! otherwise.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Sensor mount height above ground, m.
pub const MOUNT_HEIGHT: f64 = 0.75;

/// Width of one monitoring distance bin, m.
pub const BIN_WIDTH: f64 = 2.0;

/// Number of distance bins covering `[0, 20)` m.
pub const NUM_DISTANCE_BINS: usize = 10;

/// Index of the 2 m distance bin containing `range`, if it lies in `[0, 20)`.
pub fn distance_bin(range: f64) -> Option<usize> {
    if !(range >= 0.0) {
        return None;
    }
    let idx = (range / BIN_WIDTH).floor() as usize;
    (idx < NUM_DISTANCE_BINS).then_some(idx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WeatherKind {
    Dry,
    Fog,
    LightRain,
    HeavyRain,
}

impl WeatherKind {
    pub const ALL: [WeatherKind; 4] = [
        WeatherKind::Dry,
        WeatherKind::Fog,
        WeatherKind::LightRain,
        WeatherKind::HeavyRain,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            WeatherKind::Dry => "dry",
            WeatherKind::Fog => "fog",
            WeatherKind::LightRain => "light_rain",
            WeatherKind::HeavyRain => "heavy_rain",
        }
    }

    pub fn is_rain(self) -> bool {
        matches!(self, WeatherKind::LightRain | WeatherKind::HeavyRain)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Light {
    Day,
    Night,
}

impl Light {
    pub fn tag(self) -> &'static str {
        match self {
            Light::Day => "day",
            Light::Night => "night",
        }
    }
}

/// Rain intensity of the light-rain preset, mm/h.
pub const LIGHT_RAIN_RATE: f64 = 16.0;
/// Rain intensity of the heavy-rain preset, mm/h.
pub const HEAVY_RAIN_RATE: f64 = 98.0;
/// Meteorological visibility of the fog preset, m.
pub const FOG_VISIBILITY: f64 = 8.0;

/// One cell of the weather/light test matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatherCondition {
    pub kind: WeatherKind,
    /// mm/h; zero for dry and fog.
    pub rain_rate: f64,
    /// m; present only for fog.
    pub fog_visibility: Option<f64>,
    pub light: Light,
}

impl WeatherCondition {
    pub fn dry(light: Light) -> Self {
        Self {
            kind: WeatherKind::Dry,
            rain_rate: 0.0,
            fog_visibility: None,
            light,
        }
    }

    pub fn fog(light: Light) -> Self {
        Self {
            kind: WeatherKind::Fog,
            rain_rate: 0.0,
            fog_visibility: Some(FOG_VISIBILITY),
            light,
        }
    }

    pub fn light_rain(light: Light) -> Self {
        Self {
            kind: WeatherKind::LightRain,
            rain_rate: LIGHT_RAIN_RATE,
            fog_visibility: None,
            light,
        }
    }

    pub fn heavy_rain(light: Light) -> Self {
        Self {
            kind: WeatherKind::HeavyRain,
            rain_rate: HEAVY_RAIN_RATE,
            fog_visibility: None,
            light,
        }
    }

    pub fn preset(kind: WeatherKind, light: Light) -> Self {
        match kind {
            WeatherKind::Dry => Self::dry(light),
            WeatherKind::Fog => Self::fog(light),
            WeatherKind::LightRain => Self::light_rain(light),
            WeatherKind::HeavyRain => Self::heavy_rain(light),
        }
    }

    /// Fog with a custom visibility.
    pub fn fog_with_visibility(light: Light, visibility: f64) -> Result<Self> {
        let w = Self {
            fog_visibility: Some(visibility),
            ..Self::fog(light)
        };
        w.validate()?;
        Ok(w)
    }

    /// The full 4 weather × 2 light matrix in a fixed order.
    pub fn matrix() -> Vec<WeatherCondition> {
        let mut out = Vec::with_capacity(8);
        for light in [Light::Day, Light::Night] {
            for kind in WeatherKind::ALL {
                out.push(Self::preset(kind, light));
            }
        }
        out
    }

    /// Directory-safe name such as `heavy_rain_night`.
    pub fn tag(&self) -> String {
        format!("{}_{}", self.kind.tag(), self.light.tag())
    }

    pub fn parse_tag(tag: &str) -> Result<Self> {
        Self::matrix()
            .into_iter()
            .find(|w| w.tag() == tag)
            .ok_or_else(|| Error::domain(format!("unknown condition '{tag}'")))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rain_rate >= 0.0) || !self.rain_rate.is_finite() {
            return Err(Error::domain(format!("rain_rate must be >= 0, got {}", self.rain_rate)));
        }
        match (self.kind, self.fog_visibility) {
            (WeatherKind::Fog, Some(v)) if v > 0.0 && v.is_finite() => {}
            (WeatherKind::Fog, v) => {
                return Err(Error::domain(format!("fog needs a positive visibility, got {v:?}")))
            }
            (_, Some(v)) if !(v > 0.0) => {
                return Err(Error::domain(format!("fog_visibility must be > 0, got {v}")))
            }
            _ => {}
        }
        if self.kind.is_rain() && self.rain_rate <= 0.0 {
            return Err(Error::domain("rain conditions need a positive rain_rate"));
        }
        if matches!(self.kind, WeatherKind::Dry | WeatherKind::Fog) && self.rain_rate != 0.0 {
            return Err(Error::domain("rain_rate must be 0 for dry and fog"));
        }
        Ok(())
    }
}

impl fmt::Display for WeatherCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

/// Chirp-sequence FMCW radar parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarConfig {
    /// Hz
    pub center_frequency: f64,
    /// Hz
    pub bandwidth: f64,
    /// Hz
    pub sample_rate: f64,
    /// s
    pub chirp_duration: f64,
    /// s
    pub chirp_repetition: f64,
    pub num_chirps: usize,
    pub num_channels: usize,
    /// Receive element spacing in wavelengths.
    pub element_spacing: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            center_frequency: 76.75e9,
            bandwidth: 1.5e9,
            sample_rate: 10e6,
            chirp_duration: 51.2e-6,
            chirp_repetition: 60e-6,
            num_chirps: 128,
            num_channels: 16,
            element_spacing: 0.5,
        }
    }
}

impl RadarConfig {
    /// `c0 / (2 B)`, m.
    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth)
    }

    pub fn samples_per_chirp(&self) -> usize {
        (self.sample_rate * self.chirp_duration).round() as usize
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.center_frequency
    }

    /// `lambda / (2 N T_r)`, m/s per Doppler bin.
    pub fn velocity_resolution(&self) -> f64 {
        self.wavelength() / (2.0 * self.num_chirps as f64 * self.chirp_repetition)
    }

    /// Largest range representable with positive beat frequencies, m.
    pub fn max_range(&self) -> f64 {
        (self.samples_per_chirp() / 2) as f64 * self.range_resolution()
    }

    /// Largest unambiguous radial speed, m/s.
    pub fn max_velocity(&self) -> f64 {
        self.wavelength() / (4.0 * self.chirp_repetition)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("center_frequency", self.center_frequency),
            ("bandwidth", self.bandwidth),
            ("sample_rate", self.sample_rate),
            ("chirp_duration", self.chirp_duration),
            ("chirp_repetition", self.chirp_repetition),
            ("element_spacing", self.element_spacing),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.chirp_repetition < self.chirp_duration {
            return Err(Error::domain("chirp_repetition must be >= chirp_duration"));
        }
        if self.num_chirps < 2 || self.num_channels < 2 || self.samples_per_chirp() < 4 {
            return Err(Error::domain("radar needs >= 2 chirps, >= 2 channels and >= 4 samples"));
        }
        Ok(())
    }
}

/// Ordinal performance grade. Ordering is `Poor < Moderate < Good`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grade {
    Poor,
    Moderate,
    Good,
}

impl Grade {
    pub const ALL: [Grade; 3] = [Grade::Poor, Grade::Moderate, Grade::Good];

    /// Score the fuzzy trees are trained to produce for this grade.
    pub fn target_score(self) -> f64 {
        match self {
            Grade::Poor => 0.1,
            Grade::Moderate => 0.5,
            Grade::Good => 0.9,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Grade> {
        Grade::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Grade::Poor => "poor",
            Grade::Moderate => "moderate",
            Grade::Good => "good",
        }
    }

    pub fn parse(s: &str) -> Result<Grade> {
        match s {
            "poor" => Ok(Grade::Poor),
            "moderate" => Ok(Grade::Moderate),
            "good" => Ok(Grade::Good),
            other => Err(Error::domain(format!("unknown grade '{other}'"))),
        }
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceLabel {
    pub grade: Grade,
    pub score: f64,
}

/// Lower cut point between `Poor` and `Moderate`.
pub const GRADE_CUT_LOW: f64 = 1.0 / 3.0;
/// Lower cut point between `Moderate` and `Good`.
pub const GRADE_CUT_HIGH: f64 = 2.0 / 3.0;

/// Map a score in `[0, 1]` onto the three-level grade.
pub fn grade_from_score(score: f64) -> Result<PerformanceLabel> {
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::domain(format!("score {score} outside [0, 1]")));
    }
    let grade = if score < GRADE_CUT_LOW {
        Grade::Poor
    } else if score < GRADE_CUT_HIGH {
        Grade::Moderate
    } else {
        Grade::Good
    };
    Ok(PerformanceLabel { grade, score })
}

/// Oriented 3D box. `extents` are (length along local x, width, height).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox3D {
    pub center: [f64; 3],
    pub extents: [f64; 3],
    /// Rotation about +z, radians.
    pub yaw: f64,
}

impl BoundingBox3D {
    pub fn new(center: [f64; 3], extents: [f64; 3], yaw: f64) -> Result<Self> {
        if extents.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::domain(format!("box extents must be positive, got {extents:?}")));
        }
        if center.iter().any(|c| !c.is_finite()) || !yaw.is_finite() {
            return Err(Error::domain("box center and yaw must be finite"));
        }
        Ok(Self { center, extents, yaw })
    }

    fn to_local(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        [c * dx + s * dy, -s * dx + c * dy, p[2] - self.center[2]]
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let l = self.to_local(p);
        (0..3).all(|i| l[i].abs() <= 0.5 * self.extents[i])
    }

    /// The eight corners, enumerated with local x varying fastest, then y, then z.
    pub fn corners(&self) -> [[f64; 3]; 8] {
        let (s, c) = self.yaw.sin_cos();
        let mut out = [[0.0; 3]; 8];
        for (i, corner) in out.iter_mut().enumerate() {
            let lx = if i & 1 == 0 { -0.5 } else { 0.5 } * self.extents[0];
            let ly = if i & 2 == 0 { -0.5 } else { 0.5 } * self.extents[1];
            let lz = if i & 4 == 0 { -0.5 } else { 0.5 } * self.extents[2];
            *corner = [
                self.center[0] + c * lx - s * ly,
                self.center[1] + s * lx + c * ly,
                self.center[2] + lz,
            ];
        }
        out
    }

    /// Corner closest to the sensor origin; ties resolve to the first in
    /// [`BoundingBox3D::corners`] order.
    pub fn nearest_corner(&self) -> [f64; 3] {
        let mut best = self.corners()[0];
        let mut best_d = norm(best);
        for c in self.corners().into_iter().skip(1) {
            let d = norm(c);
            if d < best_d - 1e-12 {
                best = c;
                best_d = d;
            }
        }
        best
    }

    /// Same box moved by `offset` and rotated about the origin by `angle`.
    pub fn transformed(&self, angle: f64, offset: [f64; 3]) -> BoundingBox3D {
        let p = rotate_z(self.center, angle);
        BoundingBox3D {
            center: [p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]],
            extents: self.extents,
            yaw: self.yaw + angle,
        }
    }
}

pub(crate) fn norm(p: [f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

pub(crate) fn rotate_z(p: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]
}

/// One radar point detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// m
    pub range: f64,
    /// m/s, positive when receding.
    pub radial_velocity: f64,
    /// rad, positive towards +y.
    pub azimuth: f64,
    pub position: [f64; 3],
    /// dB
    pub power: f64,
}

impl Detection {
    /// Detection in the sensor plane (`z = 0`; the radar chain estimates no elevation).
    pub fn from_polar(range: f64, radial_velocity: f64, azimuth: f64, power_db: f64) -> Self {
        let range = range.max(0.0);
        Self {
            range,
            radial_velocity,
            azimuth,
            position: [range * azimuth.cos(), range * azimuth.sin(), 0.0],
            power: power_db,
        }
    }
}

/// Rectangular region of interest on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roi {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Height of the ground plane in sensor coordinates, m.
    pub ground_z: f64,
}

impl Default for Roi {
    fn default() -> Self {
        Self {
            x_min: 0.0,
            x_max: 20.0,
            y_min: -2.0,
            y_max: 2.0,
            ground_z: -MOUNT_HEIGHT,
        }
    }
}

impl Roi {
    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// Which sensor a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sensor {
    Radar,
    Lidar,
    Camera,
}

impl Sensor {
    pub const ALL: [Sensor; 3] = [Sensor::Radar, Sensor::Lidar, Sensor::Camera];

    pub fn as_str(self) -> &'static str {
        match self {
            Sensor::Radar => "radar",
            Sensor::Lidar => "lidar",
            Sensor::Camera => "camera",
        }
    }

    pub fn parse(s: &str) -> Result<Sensor> {
        match s {
            "radar" => Ok(Sensor::Radar),
            "lidar" => Ok(Sensor::Lidar),
            "camera" => Ok(Sensor::Camera),
            other => Err(Error::domain(format!("unknown sensor '{other}'"))),
        }
    }

    /// Radar and lidar are monitored per distance bin, the camera per frame.
    pub fn is_binned(self) -> bool {
        !matches!(self, Sensor::Camera)
    }
}

impl fmt::Display for Sensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grade_boundaries() {
        assert_eq!(grade_from_score(0.0).unwrap().grade, Grade::Poor);
        assert_eq!(grade_from_score(0.5).unwrap().grade, Grade::Moderate);
        assert_eq!(grade_from_score(1.0).unwrap().grade, Grade::Good);
        assert_eq!(grade_from_score(GRADE_CUT_LOW).unwrap().grade, Grade::Moderate);
        assert_eq!(grade_from_score(GRADE_CUT_HIGH).unwrap().grade, Grade::Good);
        assert_eq!(grade_from_score(0.5).unwrap().score, 0.5);
        assert!(grade_from_score(-0.01).is_err());
        assert!(grade_from_score(1.01).is_err());
        assert!(grade_from_score(f64::NAN).is_err());
    }

    #[test]
    fn radar_defaults_match_sensor_arithmetic() {
        let cfg = RadarConfig::default();
        assert!((cfg.range_resolution() - 0.1).abs() < 1e-3);
        assert_eq!(cfg.samples_per_chirp(), 512);
        assert!((cfg.velocity_resolution() - 0.254).abs() < 1e-3);
        assert!(cfg.chirp_repetition >= cfg.chirp_duration);
        cfg.validate().unwrap();
    }

    #[test]
    fn radar_validation_rejects_overlapping_chirps() {
        let cfg = RadarConfig {
            chirp_repetition: 40e-6,
            ..RadarConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn weather_presets() {
        assert_eq!(WeatherCondition::light_rain(Light::Day).rain_rate, 16.0);
        assert_eq!(WeatherCondition::heavy_rain(Light::Night).rain_rate, 98.0);
        assert_eq!(WeatherCondition::fog(Light::Day).fog_visibility, Some(8.0));
        for w in WeatherCondition::matrix() {
            w.validate().unwrap();
            assert_eq!(WeatherCondition::parse_tag(&w.tag()).unwrap(), w);
        }
        assert!(WeatherCondition::fog_with_visibility(Light::Day, 0.0).is_err());
        assert!(WeatherCondition::fog_with_visibility(Light::Day, 20.0).is_ok());
    }

    #[test]
    fn config_defaults_roundtrip_bit_exact() {
        let cfg = RadarConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RadarConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        for w in WeatherCondition::matrix() {
            let back: WeatherCondition = serde_json::from_str(&serde_json::to_string(&w).unwrap()).unwrap();
            assert_eq!(w, back);
        }
        assert!(serde_json::from_str::<RadarConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn detection_position_matches_polar() {
        let d = Detection::from_polar(10.0, -5.0, 10f64.to_radians(), 3.0);
        let r = (d.position[0].powi(2) + d.position[1].powi(2)).sqrt();
        assert!((r - 10.0).abs() < 1e-9);
        assert!((d.position[1].atan2(d.position[0]) - 10f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn box_contains_and_corners() {
        let b = BoundingBox3D::new([10.0, 0.0, 0.0], [4.0, 2.0, 1.0], 0.0).unwrap();
        assert!(b.contains([8.5, 0.9, 0.4]));
        assert!(!b.contains([7.9, 0.0, 0.0]));
        assert_eq!(b.nearest_corner(), [8.0, -1.0, -0.5]);
        assert!(BoundingBox3D::new([0.0; 3], [1.0, 0.0, 1.0], 0.0).is_err());
        let rotated = BoundingBox3D::new([0.0, 5.0, 0.0], [4.0, 2.0, 1.0], std::f64::consts::FRAC_PI_2).unwrap();
        assert!(rotated.contains([0.9, 6.9, 0.0]));
        assert!(!rotated.contains([1.1, 5.0, 0.0]));
    }

    #[test]
    fn bins() {
        assert_eq!(distance_bin(0.0), Some(0));
        assert_eq!(distance_bin(1.999), Some(0));
        assert_eq!(distance_bin(2.0), Some(1));
        assert_eq!(distance_bin(19.99), Some(9));
        assert_eq!(distance_bin(20.0), None);
        assert_eq!(distance_bin(-0.1), None);
        assert_eq!(distance_bin(f64::NAN), None);
    }
}
