use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::presets::{FogModel, LidarPresets, WeatherPresets};
use super::{rng_for, Scenario, Stream};
use crate::error::Result;
use crate::lidar::{LidarPoint, PointCloud};
use crate::types::WeatherCondition;

/// Height of the hood line above ground, m.
const HOOD_HEIGHT: f64 = 0.95;
/// Windshield: starts 0.6 m behind the front face at hood height and rises
/// to the roof 1.0 m further back.
const WINDSHIELD_SETBACK: f64 = 0.6;
const WINDSHIELD_RUN: f64 = 1.0;
const WINDSHIELD_HALF_WIDTH: f64 = 0.75;
/// Clearance below the front face, m.
const BUMPER_CLEARANCE: f64 = 0.1;
/// Output crop: forward distance and lateral half-width, m.
const CROP_X: f64 = 25.0;
const CROP_Y: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Surface {
    Ground,
    Body,
    Windshield,
}

struct Hit {
    range: f64,
    surface: Surface,
    /// |cos| of the incidence angle.
    incidence: f64,
}

/// Sensor-frame geometry of the vehicle at one frame.
struct VehicleGeom {
    near_x: f64,
    far_x: f64,
    y_center: f64,
    half_width: f64,
    ground_z: f64,
    roof_z: f64,
}

fn cast(dir: [f64; 3], v: &VehicleGeom, max_range: f64) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    let mut consider = |h: Hit| {
        if h.range > 0.0 && h.range <= max_range && best.as_ref().is_none_or(|b| h.range < b.range) {
            best = Some(h);
        }
    };
    let gz = v.ground_z;
    let hood = gz + HOOD_HEIGHT;

    if dir[0] > 1e-9 {
        let t = v.near_x / dir[0];
        let (y, z) = (t * dir[1], t * dir[2]);
        if (y - v.y_center).abs() <= v.half_width && z >= gz + BUMPER_CLEARANCE && z <= hood {
            consider(Hit {
                range: t,
                surface: Surface::Body,
                incidence: dir[0],
            });
        }
        // Windshield plane: x = near + setback + (z - hood) * run / rise.
        let rise = v.roof_z - hood;
        let k = WINDSHIELD_RUN / rise;
        let den = dir[0] - k * dir[2];
        if den.abs() > 1e-9 {
            let t = (v.near_x + WINDSHIELD_SETBACK - k * hood) / den;
            let (y, z) = (t * dir[1], t * dir[2]);
            if t > 0.0 && (y - v.y_center).abs() <= WINDSHIELD_HALF_WIDTH && z >= hood && z <= v.roof_z {
                let n = [rise, 0.0, -WINDSHIELD_RUN];
                let nn = (n[0] * n[0] + n[2] * n[2]).sqrt();
                consider(Hit {
                    range: t,
                    surface: Surface::Windshield,
                    incidence: ((n[0] * dir[0] + n[2] * dir[2]) / nn).abs(),
                });
            }
        }
    }
    if dir[2] < -1e-9 {
        let t = gz / dir[2];
        let (x, y) = (t * dir[0], t * dir[1]);
        let under_vehicle = x >= v.near_x && x <= v.far_x && (y - v.y_center).abs() <= v.half_width;
        if !under_vehicle {
            consider(Hit {
                range: t,
                surface: Surface::Ground,
                incidence: -dir[2],
            });
        }
    }
    best
}

fn beam_elevations(p: &LidarPresets) -> Vec<f64> {
    let half = 0.5 * p.vertical_fov_deg.to_radians();
    (0..p.beams)
        .map(|i| -half + 2.0 * half * i as f64 / (p.beams - 1) as f64)
        .collect()
}

/// Forward-half azimuths (|a| <= 90°) of a full revolution.
fn forward_azimuths(p: &LidarPresets) -> Vec<f64> {
    let n = p.azimuth_steps as i64;
    let step = 2.0 * std::f64::consts::PI / n as f64;
    (-(n / 4)..=n / 4).map(|j| j as f64 * step).collect()
}

/// 3D distance of the first ground return of the lowest beam, m.
pub fn first_ground_range(p: &LidarPresets, mount_height: f64) -> f64 {
    mount_height / (0.5 * p.vertical_fov_deg.to_radians()).sin()
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Lidar frame using explicit presets.
pub fn simulate_lidar_frame_with(
    scenario: &Scenario,
    weather: &WeatherCondition,
    frame_index: usize,
    presets: &WeatherPresets,
) -> Result<PointCloud> {
    scenario.validate()?;
    weather.validate()?;
    let d = scenario.check_frame(frame_index)?;
    let fog = FogModel::for_weather(weather, &presets.lidar)?;
    simulate_lidar_frame_inner(scenario, weather, fog, d, frame_index, presets)
}

/// Lidar frame under fog of an explicit extinction coefficient (1/m),
/// independent of the weather's visibility.
pub fn simulate_lidar_fog_extinction(
    scenario: &Scenario,
    extinction: f64,
    frame_index: usize,
    presets: &WeatherPresets,
) -> Result<PointCloud> {
    scenario.validate()?;
    let d = scenario.check_frame(frame_index)?;
    let fog = FogModel::from_extinction(extinction, &presets.lidar)?;
    let w = WeatherCondition::fog(crate::types::Light::Day);
    simulate_lidar_frame_inner(scenario, &w, Some(fog), d, frame_index, presets)
}

fn simulate_lidar_frame_inner(
    scenario: &Scenario,
    weather: &WeatherCondition,
    fog: Option<FogModel>,
    d: f64,
    frame_index: usize,
    presets: &WeatherPresets,
) -> Result<PointCloud> {
    let lp = &presets.lidar;
    let vb = scenario.vehicle_box_at(frame_index);
    let gz = scenario.roi.ground_z;
    let geom = VehicleGeom {
        near_x: d,
        far_x: d + vb.extents[0],
        y_center: vb.center[1],
        half_width: 0.5 * vb.extents[1],
        ground_z: gz,
        roof_z: vb.center[2] + 0.5 * vb.extents[2],
    };
    let rain = presets.lidar_rain(weather);
    let rain_extent = presets.rain_model(weather).map_or(0.0, |m| m.extent);
    let frame = frame_index as u64;
    let mut base_rng = rng_for(scenario.seed, Stream::LidarBase, frame);
    let mut fog_rng = rng_for(scenario.seed, Stream::LidarFog, frame);
    let mut rain_rng = rng_for(scenario.seed, Stream::LidarRain, frame);

    let puddles: Vec<(f64, f64)> = match &rain {
        Some(r) => (0..r.puddle_count)
            .map(|_| (uniform(&mut rain_rng, 2.0, scenario.roi.x_max), uniform(&mut rain_rng, scenario.roi.y_min, scenario.roi.y_max)))
            .collect(),
        None => Vec::new(),
    };

    let mut points = Vec::new();
    let elevations = beam_elevations(lp);
    let azimuths = forward_azimuths(lp);
    for &e in &elevations {
        let (se, ce) = e.sin_cos();
        for &a in &azimuths {
            let (sa, ca) = a.sin_cos();
            let dir = [ce * ca, ce * sa, se];
            let Some(hit) = cast(dir, &geom, lp.max_range) else {
                continue;
            };
            let noise: f64 = StandardNormal.sample(&mut base_rng);
            let r = (hit.range + lp.range_noise_std * noise).max(0.0);
            let reflectivity = match hit.surface {
                Surface::Ground => lp.ground_reflectivity,
                Surface::Body => lp.body_reflectivity,
                Surface::Windshield => lp.windshield_reflectivity,
            };
            let mut intensity = reflectivity * hit.incidence.max(0.1);
            let p = [r * dir[0], r * dir[1], r * dir[2]];

            if let Some(f) = &fog {
                let survival = (-2.0 * f.extinction * r).exp();
                if fog_rng.random::<f64>() >= survival {
                    continue;
                }
                intensity *= survival;
            }
            if let Some(rp) = &rain {
                let u_puddle: f64 = rain_rng.random();
                let u_wet: f64 = rain_rng.random();
                if hit.surface == Surface::Ground
                    && puddles
                        .iter()
                        .any(|c| (p[0] - c.0).powi(2) + (p[1] - c.1).powi(2) <= rp.puddle_radius.powi(2))
                    && u_puddle < rp.puddle_deletion
                {
                    continue;
                }
                if hit.surface == Surface::Windshield && u_wet < rp.windshield_loss {
                    continue;
                }
                intensity *= (-2.0 * rp.attenuation * r).exp();
            }
            if p[0] < 0.0 || p[0] > CROP_X || p[1].abs() > CROP_Y {
                continue;
            }
            points.push(LidarPoint {
                x: p[0],
                y: p[1],
                z: p[2],
                intensity: intensity.max(lp.intensity_floor),
            });
        }
    }

    if let Some(f) = &fog {
        for _ in 0..f.ring_point_count {
            let e = elevations[fog_rng.random_range(0..elevations.len())];
            let a = uniform(&mut fog_rng, -0.5 * std::f64::consts::PI, 0.5 * std::f64::consts::PI);
            let r = f.ring_radius + uniform(&mut fog_rng, -lp.fog_ring_jitter, lp.fog_ring_jitter);
            let i = lp.fog_ring_intensity * uniform(&mut fog_rng, 0.8, 1.2);
            points.push(LidarPoint {
                x: r * e.cos() * a.cos(),
                y: r * e.cos() * a.sin(),
                z: r * e.sin(),
                intensity: i.max(f.intensity_floor),
            });
        }
    }
    if let Some(rp) = &rain {
        for _ in 0..rp.droplet_count {
            let e = elevations[rain_rng.random_range(elevations.len() / 4..elevations.len())];
            let a = uniform(&mut rain_rng, -0.6, 0.6);
            let r = uniform(&mut rain_rng, 0.5, rain_extent.max(0.5));
            let i = rp.droplet_intensity * uniform(&mut rain_rng, 0.5, 1.5);
            points.push(LidarPoint {
                x: r * e.cos() * a.cos(),
                y: r * e.cos() * a.sin(),
                z: r * e.sin(),
                intensity: i.max(lp.intensity_floor),
            });
        }
    }

    PointCloud::new(points, frame_index, Some(scenario.label_box_at(frame_index)))
}

/// Lidar frame using the bundled presets.
pub fn simulate_lidar_frame(scenario: &Scenario, weather: &WeatherCondition, frame_index: usize) -> Result<PointCloud> {
    simulate_lidar_frame_with(scenario, weather, frame_index, &WeatherPresets::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lidar::{ground_count, min_max_distance};
    use crate::types::Light;

    #[test]
    fn dry_minimum_is_first_ground_return() {
        let p = WeatherPresets::default();
        let s = Scenario::default();
        let c = simulate_lidar_frame_with(&s, &WeatherCondition::dry(Light::Day), 0, &p).unwrap();
        let (lo, _) = min_max_distance(&c).unwrap();
        let expected = first_ground_range(&p.lidar, 0.75);
        assert!((lo - expected).abs() < 0.05, "{lo} vs {expected}");
        assert!(ground_count(&c, &s.roi) > 10_000);
    }

    #[test]
    fn zero_extinction_fog_equals_dry() {
        let p = WeatherPresets::default();
        let s = Scenario::default().with_seed(5);
        let dry = simulate_lidar_frame_with(&s, &WeatherCondition::dry(Light::Day), 7, &p).unwrap();
        let fog = simulate_lidar_fog_extinction(&s, 0.0, 7, &p).unwrap();
        assert_eq!(dry, fog);
    }
}
