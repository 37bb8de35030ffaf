//! Calibrated model constants, versioned and stored as JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{WeatherCondition, WeatherKind};

/// Newest preset format this build understands.
pub const PRESETS_VERSION: u32 = 1;

const DEFAULT_PRESETS: &str = include_str!("../../../../config/weather_presets.json");

/// Radar rain clutter statistics of one rain preset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RainClutterModel {
    /// Largest range of rain returns, m.
    pub extent: f64,
    /// Scatterers per m³ of the clutter volume.
    pub scatterer_density: f64,
    /// Mean radial speed magnitude, m/s.
    pub velocity_mean: f64,
    pub velocity_std: f64,
    /// Mean scatterer RCS relative to 1 m², dB.
    pub reflectivity_scale: f64,
}

impl RainClutterModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.extent > 0.0) || !(self.velocity_std > 0.0) || !(self.scatterer_density >= 0.0) {
            return Err(Error::domain("rain model needs extent > 0, velocity_std > 0, density >= 0"));
        }
        Ok(())
    }

    fn lerp(a: &Self, b: &Self, t: f64) -> Self {
        let l = |x: f64, y: f64| x + (y - x) * t;
        Self {
            extent: l(a.extent, b.extent),
            scatterer_density: l(a.scatterer_density, b.scatterer_density),
            velocity_mean: l(a.velocity_mean, b.velocity_mean),
            velocity_std: l(a.velocity_std, b.velocity_std),
            reflectivity_scale: l(a.reflectivity_scale, b.reflectivity_scale),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerWeather {
    pub dry: f64,
    pub fog: f64,
    pub light_rain: f64,
    pub heavy_rain: f64,
}

impl PerWeather {
    pub fn get(&self, kind: WeatherKind) -> f64 {
        match kind {
            WeatherKind::Dry => self.dry,
            WeatherKind::Fog => self.fog,
            WeatherKind::LightRain => self.light_rain,
            WeatherKind::HeavyRain => self.heavy_rain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RainPair {
    pub light_rain: f64,
    pub heavy_rain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarPresets {
    /// Echo amplitude of a 1 m² target at 10 m.
    pub amplitude_ref: f64,
    /// Standard deviation of the complex receiver noise (`E|n|^2 = noise_std^2`).
    pub noise_std: f64,
    /// Range of the static near-range leakage reflector, m.
    pub leakage_range: f64,
    pub leakage_rcs: f64,
    pub ground_clutter_count: usize,
    /// Mean RCS of ground clutter scatterers, m².
    pub ground_clutter_rcs: f64,
    /// Mean RCS of each vehicle scatterer, m².
    pub vehicle_rcs: f64,
    /// Closest forward distance of rain scatterers, m.
    pub rain_x_min: f64,
    pub light_rain: RainClutterModel,
    pub heavy_rain: RainClutterModel,
    /// Probability that a vehicle scatterer returns nothing.
    pub vehicle_dropout: PerWeather,
    /// One-way amplitude attenuation, 1/m.
    pub rain_attenuation: RainPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarRainPreset {
    pub puddle_count: usize,
    /// m
    pub puddle_radius: f64,
    /// Probability that a ground return inside a puddle is lost.
    pub puddle_deletion: f64,
    pub droplet_count: usize,
    pub droplet_intensity: f64,
    /// Extinction, 1/m; applied two-way to intensities.
    pub attenuation: f64,
    /// Probability that a wet windshield return is lost.
    pub windshield_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarPresets {
    pub beams: usize,
    /// Full vertical field of view, symmetric about the horizon, degrees.
    pub vertical_fov_deg: f64,
    /// Azimuth steps per revolution; only the forward half is simulated.
    pub azimuth_steps: usize,
    pub max_range: f64,
    pub range_noise_std: f64,
    pub ground_reflectivity: f64,
    pub body_reflectivity: f64,
    pub windshield_reflectivity: f64,
    pub intensity_floor: f64,
    pub fog_ring_radius: f64,
    pub fog_ring_jitter: f64,
    /// Ring points at the preset fog visibility; scales with extinction.
    pub fog_ring_point_count: usize,
    pub fog_ring_intensity: f64,
    pub light_rain: LidarRainPreset,
    pub heavy_rain: LidarRainPreset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraPresets {
    pub width: usize,
    pub height: usize,
    pub focal_px: f64,
    pub wall_distance: f64,
    pub day_airlight: f64,
    pub night_airlight: f64,
    pub night_factor: f64,
    pub night_blur_sigma: f64,
    pub day_noise_std: f64,
    pub night_noise_std: f64,
    pub light_rain_streaks: usize,
    pub heavy_rain_streaks: usize,
    /// px
    pub streak_length: f64,
    pub streak_intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatherPresets {
    pub version: u32,
    pub radar: RadarPresets,
    pub lidar: LidarPresets,
    pub camera: CameraPresets,
}

impl Default for WeatherPresets {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_PRESETS).expect("bundled weather_presets.json is valid")
    }
}

impl WeatherPresets {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let probe: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
        let version = probe.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version > PRESETS_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: PRESETS_VERSION,
            });
        }
        let p: Self = serde_json::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.radar.light_rain.validate()?;
        self.radar.heavy_rain.validate()?;
        let l = &self.radar.light_rain;
        let h = &self.radar.heavy_rain;
        if h.extent < l.extent || h.velocity_mean < l.velocity_mean || h.velocity_std < l.velocity_std {
            return Err(Error::domain("heavy-rain preset must dominate light rain"));
        }
        if h.scatterer_density * (h.extent - self.radar.rain_x_min) < l.scatterer_density * (l.extent - self.radar.rain_x_min) {
            return Err(Error::domain("heavy-rain preset must not have fewer scatterers"));
        }
        if self.lidar.fog_ring_radius <= 0.0 || self.lidar.beams < 2 || self.lidar.azimuth_steps < 4 {
            return Err(Error::domain("invalid lidar preset"));
        }
        if self.camera.width < 16 || self.camera.height < 16 {
            return Err(Error::domain("camera preset too small"));
        }
        Ok(())
    }

    /// Rain clutter for an arbitrary rain rate, piecewise-linear in the
    /// rate through (0, nothing), light and heavy presets, clamped above.
    pub fn rain_model(&self, weather: &WeatherCondition) -> Option<RainClutterModel> {
        if !weather.kind.is_rain() || weather.rain_rate <= 0.0 {
            return None;
        }
        let (l, h) = (&self.radar.light_rain, &self.radar.heavy_rain);
        let (rl, rh) = (crate::types::LIGHT_RAIN_RATE, crate::types::HEAVY_RAIN_RATE);
        let r = weather.rain_rate;
        Some(if r <= rl {
            RainClutterModel {
                scatterer_density: l.scatterer_density * r / rl,
                ..*l
            }
        } else if r >= rh {
            *h
        } else {
            RainClutterModel::lerp(l, h, (r - rl) / (rh - rl))
        })
    }

    pub fn lidar_rain(&self, weather: &WeatherCondition) -> Option<LidarRainPreset> {
        match weather.kind {
            WeatherKind::LightRain => Some(self.lidar.light_rain),
            WeatherKind::HeavyRain => Some(self.lidar.heavy_rain),
            _ => None,
        }
    }

    pub fn rain_attenuation(&self, weather: &WeatherCondition) -> f64 {
        match weather.kind {
            WeatherKind::LightRain => self.radar.rain_attenuation.light_rain,
            WeatherKind::HeavyRain => self.radar.rain_attenuation.heavy_rain,
            _ => 0.0,
        }
    }
}

/// Lidar fog parameters derived from a visibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FogModel {
    /// 1/m, `3 / visibility`.
    pub extinction: f64,
    pub ring_radius: f64,
    pub ring_point_count: usize,
    pub intensity_floor: f64,
}

impl FogModel {
    /// Koschmieder factor relating visibility to extinction.
    pub const KOSCHMIEDER: f64 = 3.0;

    pub fn from_visibility(visibility: f64, presets: &LidarPresets) -> Result<Self> {
        if !(visibility > 0.0) {
            return Err(Error::domain(format!("visibility must be > 0, got {visibility}")));
        }
        Self::from_extinction(Self::KOSCHMIEDER / visibility, presets)
    }

    /// Ring size scales linearly with extinction relative to the preset
    /// visibility, so it vanishes in the clear-air limit.
    pub fn from_extinction(extinction: f64, presets: &LidarPresets) -> Result<Self> {
        if !(extinction >= 0.0) || !extinction.is_finite() {
            return Err(Error::domain(format!("extinction must be >= 0, got {extinction}")));
        }
        let reference = Self::KOSCHMIEDER / crate::types::FOG_VISIBILITY;
        Ok(Self {
            extinction,
            ring_radius: presets.fog_ring_radius,
            ring_point_count: (presets.fog_ring_point_count as f64 * extinction / reference).round() as usize,
            intensity_floor: presets.intensity_floor,
        })
    }

    pub fn for_weather(weather: &WeatherCondition, presets: &LidarPresets) -> Result<Option<Self>> {
        match (weather.kind, weather.fog_visibility) {
            (WeatherKind::Fog, Some(v)) => Self::from_visibility(v, presets).map(Some),
            _ => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Light;

    #[test]
    fn bundled_presets_are_valid() {
        let p = WeatherPresets::default();
        p.validate().unwrap();
        assert_eq!(p.version, PRESETS_VERSION);
        assert_eq!(p.radar.light_rain.extent, 5.0);
        assert_eq!(p.radar.heavy_rain.extent, 11.0);
    }

    #[test]
    fn future_version_is_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(DEFAULT_PRESETS).unwrap();
        v["version"] = serde_json::json!(PRESETS_VERSION + 1);
        let err = WeatherPresets::from_json(&v.to_string(), Path::new("p.json")).unwrap_err();
        assert!(matches!(err, Error::UnsupportedVersion { .. }));
    }

    #[test]
    fn rain_model_interpolates() {
        let p = WeatherPresets::default();
        assert_eq!(p.rain_model(&WeatherCondition::dry(Light::Day)), None);
        assert_eq!(p.rain_model(&WeatherCondition::light_rain(Light::Day)), Some(p.radar.light_rain));
        assert_eq!(p.rain_model(&WeatherCondition::heavy_rain(Light::Day)), Some(p.radar.heavy_rain));
        let mid = WeatherCondition {
            rain_rate: 57.0,
            ..WeatherCondition::heavy_rain(Light::Day)
        };
        let m = p.rain_model(&mid).unwrap();
        assert!(m.extent > 5.0 && m.extent < 11.0);
    }

    #[test]
    fn fog_model() {
        let p = WeatherPresets::default();
        let f = FogModel::from_visibility(8.0, &p.lidar).unwrap();
        assert!((f.extinction - 0.375).abs() < 1e-12);
        assert_eq!(f.ring_point_count, p.lidar.fog_ring_point_count);
        assert_eq!(FogModel::from_extinction(0.0, &p.lidar).unwrap().ring_point_count, 0);
        assert!(FogModel::from_visibility(0.0, &p.lidar).is_err());
    }
}
