use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::presets::{CameraPresets, WeatherPresets};
use super::{mix, rng_for, Scenario, Stream};
use crate::camera::{Box2D, Image};
use crate::error::Result;
use crate::sim::FogModel;
use crate::types::{Light, WeatherCondition, WeatherKind};

/// Ground truth for one camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraTruth {
    /// Pixel box of the vehicle front, snapped to the pixel grid.
    pub bbox: Box2D,
    /// Distance of the vehicle front, m.
    pub distance: f64,
}

const WINDSHIELD: (f64, f64) = (0.95, 1.4);
const WINDSHIELD_HALF_WIDTH: f64 = 0.75;

fn hash01(key: u64, a: i64, b: i64) -> f64 {
    let h = mix(key ^ mix(a as u64 ^ mix(b as u64).rotate_left(17)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Albedo of the vehicle front at lateral offset `dy` from its center and
/// height `h` above ground. Headlights are flagged as emitters.
fn face_albedo(dy: f64, h: f64) -> ([f64; 3], bool) {
    let ady = dy.abs();
    if (0.55..=0.85).contains(&ady) && (0.6..=0.75).contains(&h) {
        return ([1.0, 0.98, 0.9], true);
    }
    if h >= WINDSHIELD.0 && h <= WINDSHIELD.1 && ady <= WINDSHIELD_HALF_WIDTH {
        return ([0.1, 0.12, 0.15], false);
    }
    if ady <= 0.25 && (0.25..=0.35).contains(&h) {
        return ([0.95, 0.95, 0.9], false);
    }
    if ady <= 0.4 && (0.35..=0.6).contains(&h) {
        return ([0.15, 0.15, 0.15], false);
    }
    if h < 0.25 {
        return ([0.25, 0.25, 0.27], false);
    }
    ([0.88, 0.88, 0.92], false)
}

/// Clear-air radiance and depth per pixel.
fn render_clear(scenario: &Scenario, frame_index: usize, p: &CameraPresets, light: Light) -> (Vec<[f64; 3]>, Vec<f64>) {
    let d = scenario.vehicle_distance(frame_index);
    let vb = scenario.vehicle_box_at(frame_index);
    let gz = scenario.roi.ground_z;
    let top = vb.center[2] + 0.5 * vb.extents[2];
    let yc = vb.center[1];
    let half_w = 0.5 * vb.extents[1];
    let key = mix(scenario.seed ^ mix(Stream::CameraTexture as u64));
    let (cx, cy) = (0.5 * p.width as f64, 0.5 * p.height as f64);
    let night = light == Light::Night;

    let mut rad = Vec::with_capacity(p.width * p.height);
    let mut depth = Vec::with_capacity(p.width * p.height);
    for v in 0..p.height {
        for u in 0..p.width {
            let dy = -(u as f64 + 0.5 - cx) / p.focal_px;
            let dz = -(v as f64 + 0.5 - cy) / p.focal_px;
            let norm = (1.0 + dy * dy + dz * dz).sqrt();
            // Distance along x to each surface.
            let t_face = d;
            let (y, z) = (t_face * dy, t_face * dz);
            let (albedo, emits, t) = if d > 0.0 && (y - yc).abs() <= half_w && z >= gz && z <= top {
                let (a, e) = face_albedo(y - yc, z - gz);
                (a, e, t_face)
            } else if dz < 0.0 && gz / dz < p.wall_distance {
                let t = gz / dz;
                let (gx, gy) = (t, t * dy);
                let n = hash01(key, (gx / 0.5).floor() as i64, (gy / 0.5).floor() as i64);
                let lane = if (gy.abs() - 1.6).abs() < 0.06 { 0.35 } else { 0.0 };
                let g = 0.3 + 0.1 * n + lane;
                ([g, g, 0.95 * g], false, t)
            } else {
                let t = p.wall_distance;
                let (wy, wz) = (t * dy, t * dz);
                let row = ((wz - gz) / 0.4).floor() as i64;
                let shift = if row.rem_euclid(2) == 0 { 0.0 } else { 0.35 };
                let n = hash01(key ^ 1, ((wy + shift) / 0.7).floor() as i64, row);
                let g = 0.45 + 0.2 * n;
                ([g, 0.8 * g, 0.7 * g], false, t)
            };
            let scale = if night && !emits { p.night_factor } else { 1.0 };
            rad.push(albedo.map(|c| c * scale));
            depth.push(t * norm);
        }
    }
    (rad, depth)
}

/// Vehicle front projected to the image, snapped to whole pixels and
/// clipped to the frame.
pub fn project_face(scenario: &Scenario, frame_index: usize, p: &CameraPresets) -> Box2D {
    let d = scenario.vehicle_distance(frame_index).max(1e-3);
    let vb = scenario.vehicle_box_at(frame_index);
    let gz = scenario.roi.ground_z;
    let top = vb.center[2] + 0.5 * vb.extents[2];
    let (cx, cy) = (0.5 * p.width as f64, 0.5 * p.height as f64);
    let f = p.focal_px / d;
    let u0 = cx - (vb.center[1] + 0.5 * vb.extents[1]) * f;
    let u1 = cx - (vb.center[1] - 0.5 * vb.extents[1]) * f;
    let v0 = cy - top * f;
    let v1 = cy - gz * f;
    let clip = |x: f64, hi: usize| x.round().clamp(0.0, hi as f64);
    Box2D {
        x0: clip(u0, p.width),
        y0: clip(v0, p.height),
        x1: clip(u1, p.width),
        y1: clip(v1, p.height),
    }
}

/// Noise-free dry daylight crop of the vehicle front at the given frame's
/// scale, used as the detector template.
pub fn render_vehicle_template(scenario: &Scenario, frame_index: usize, presets: &WeatherPresets) -> Result<Image> {
    scenario.validate()?;
    scenario.check_frame(frame_index)?;
    let p = &presets.camera;
    let (rad, _) = render_clear(scenario, frame_index, p, Light::Day);
    let full = Image::new(p.width, p.height, rad, Light::Day)?;
    let b = project_face(scenario, frame_index, p);
    let (x0, y0) = (b.x0 as usize, b.y0 as usize);
    let w = (b.x1 as usize).saturating_sub(x0).max(1);
    let h = (b.y1 as usize).saturating_sub(y0).max(1);
    full.crop(x0.min(p.width - 1), y0.min(p.height - 1), w, h)
}

fn draw_streak(px: &mut [[f64; 3]], width: usize, height: usize, start: (f64, f64), dir: (f64, f64), len: f64, alpha: f64, value: f64) {
    let steps = len.ceil() as usize;
    for s in 0..=steps {
        let x = (start.0 + dir.0 * s as f64).round();
        let y = (start.1 + dir.1 * s as f64).round();
        if x < 0.0 || y < 0.0 || x >= width as f64 || y >= height as f64 {
            continue;
        }
        let c = &mut px[y as usize * width + x as usize];
        for ch in c.iter_mut() {
            *ch = *ch * (1.0 - alpha) + value * alpha;
        }
    }
}

/// Camera frame using explicit presets.
pub fn simulate_camera_frame_with(
    scenario: &Scenario,
    weather: &WeatherCondition,
    frame_index: usize,
    presets: &WeatherPresets,
) -> Result<(Image, CameraTruth)> {
    scenario.validate()?;
    weather.validate()?;
    let d = scenario.check_frame(frame_index)?;
    let p = &presets.camera;
    let light = weather.light;
    let (mut px, depth) = render_clear(scenario, frame_index, p, light);

    if let Some(f) = FogModel::for_weather(weather, &presets.lidar)? {
        let a = match light {
            Light::Day => p.day_airlight,
            Light::Night => p.night_airlight,
        };
        for (c, &z) in px.iter_mut().zip(&depth) {
            let t = (-f.extinction * z).exp();
            *c = c.map(|v| v * t + a * (1.0 - t));
        }
    }

    let frame = frame_index as u64;
    let streaks = match weather.kind {
        WeatherKind::LightRain => p.light_rain_streaks,
        WeatherKind::HeavyRain => p.heavy_rain_streaks,
        _ => 0,
    };
    if streaks > 0 {
        let mut rng = rng_for(scenario.seed, Stream::CameraRain, frame);
        let value = match light {
            Light::Day => 0.9,
            Light::Night => 0.4,
        };
        for _ in 0..streaks {
            let start = (rng.random::<f64>() * p.width as f64, rng.random::<f64>() * p.height as f64);
            let n0: f64 = StandardNormal.sample(&mut rng);
            let slant = 0.1 * n0 + 0.15;
            let len = p.streak_length * (0.5 + rng.random::<f64>());
            let alpha = p.streak_intensity * (0.5 + 0.5 * rng.random::<f64>());
            let n = (1.0 + slant * slant).sqrt();
            draw_streak(&mut px, p.width, p.height, start, (slant / n, 1.0 / n), len, alpha, value);
        }
    }

    let mut img = Image::new(p.width, p.height, px, light)?;
    if light == Light::Night && p.night_blur_sigma > 0.0 {
        let radius = (3.0 * p.night_blur_sigma).ceil() as usize;
        img = img.gaussian_blur(p.night_blur_sigma, radius);
    }
    let sigma = match light {
        Light::Day => p.day_noise_std,
        Light::Night => p.night_noise_std,
    };
    let mut rng = rng_for(scenario.seed, Stream::CameraNoise, frame);
    for c in img.pixels.iter_mut() {
        for ch in c.iter_mut() {
            let n: f64 = StandardNormal.sample(&mut rng);
            *ch = (*ch + sigma * n).clamp(0.0, 1.0);
        }
    }

    let truth = CameraTruth {
        bbox: project_face(scenario, frame_index, p),
        distance: d,
    };
    Ok((img, truth))
}

/// Camera frame using the bundled presets.
pub fn simulate_camera_frame(scenario: &Scenario, weather: &WeatherCondition, frame_index: usize) -> Result<(Image, CameraTruth)> {
    simulate_camera_frame_with(scenario, weather, frame_index, &WeatherPresets::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{proxy_detect, rms_contrast};

    #[test]
    fn face_box_grows_as_vehicle_approaches() {
        let p = WeatherPresets::default();
        let s = Scenario::default();
        let far = project_face(&s, 0, &p.camera);
        let near = project_face(&s, 40, &p.camera);
        assert!(near.area() > 4.0 * far.area());
        // 1.8 m wide at 20 m with f = 128 px.
        assert!(((far.x1 - far.x0) - 11.52).abs() <= 1.0);
    }

    #[test]
    fn dry_day_template_matches_in_place() {
        let p = WeatherPresets::default();
        let s = Scenario::default();
        let (img, truth) = simulate_camera_frame_with(&s, &WeatherCondition::dry(Light::Day), 10, &p).unwrap();
        let t = render_vehicle_template(&s, 10, &p).unwrap();
        let det = proxy_detect(&img, &t, &truth.bbox).unwrap();
        assert!(det.confidence > 0.9, "{det:?}");
        assert!(det.iou > 0.9, "{det:?}");
    }

    #[test]
    fn night_lowers_contrast() {
        let p = WeatherPresets::default();
        let s = Scenario::default();
        let (day, _) = simulate_camera_frame_with(&s, &WeatherCondition::dry(Light::Day), 5, &p).unwrap();
        let (night, _) = simulate_camera_frame_with(&s, &WeatherCondition::dry(Light::Night), 5, &p).unwrap();
        assert!(rms_contrast(&day) > rms_contrast(&night));
        assert_eq!(night.exposure, Light::Night);
    }
}
