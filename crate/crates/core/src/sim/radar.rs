use num_complex::{Complex32, Complex64};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::presets::WeatherPresets;
use super::{rng_for, Scenario, Stream};
use crate::error::Result;
use crate::radar::RadarDataCube;
use crate::types::{norm, RadarConfig, WeatherCondition, SPEED_OF_LIGHT};

/// Point scatterer seen by the radar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    /// m
    pub range: f64,
    /// Direction sine along the array axis (`y / range`).
    pub sin_azimuth: f64,
    /// m/s, positive when receding.
    pub radial_velocity: f64,
    pub amplitude: f64,
}

impl Scatterer {
    pub fn polar(range: f64, azimuth: f64, radial_velocity: f64, amplitude: f64) -> Self {
        Self {
            range,
            sin_azimuth: azimuth.sin(),
            radial_velocity,
            amplitude,
        }
    }

    /// Scatterer at a Cartesian position.
    pub fn at(position: [f64; 3], radial_velocity: f64, amplitude: f64) -> Self {
        let range = norm(position);
        Self {
            range,
            sin_azimuth: if range > 0.0 { (position[1] / range).clamp(-1.0, 1.0) } else { 0.0 },
            radial_velocity,
            amplitude,
        }
    }

    pub fn azimuth(&self) -> f64 {
        self.sin_azimuth.asin()
    }
}

/// All scatterers of one frame, grouped by origin.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RadarScene {
    pub static_world: Vec<Scatterer>,
    pub vehicle: Vec<Scatterer>,
    pub rain: Vec<Scatterer>,
    pub noise_std: f64,
}

impl RadarScene {
    pub fn all(&self) -> Vec<Scatterer> {
        let mut v = self.static_world.clone();
        v.extend_from_slice(&self.vehicle);
        v.extend_from_slice(&self.rain);
        v
    }
}

/// Echo amplitude for a target of `rcs` m² at `range`, scaled so a 1 m²
/// target at 10 m has `amplitude_ref` (power falls with the fourth power of
/// range, clamped inside 1 m).
pub fn echo_amplitude(amplitude_ref: f64, rcs: f64, range: f64) -> f64 {
    let r = range.max(1.0);
    amplitude_ref * rcs.max(0.0).sqrt() * (10.0 / r).powi(2)
}

/// Sum of scatterer echoes plus complex white noise with
/// `E|n|^2 = noise_std^2`. Each scatterer contributes
/// `A exp(j(4 pi R / lambda)) exp(j 2 pi (f_b n T_s + f_D m T_r)) exp(j 2 pi d c sin(theta))`
/// with `f_b = 2 B R / (c0 T_chirp)` and `f_D = 2 v_r f_c / c0`.
pub fn synthesize_cube(
    cfg: &RadarConfig,
    scatterers: &[Scatterer],
    noise_std: f64,
    noise_rng: Option<&mut ChaCha8Rng>,
) -> RadarDataCube {
    let mut cube = RadarDataCube::for_config(cfg);
    let (n_s, n_m, n_c) = (cube.num_samples, cube.num_chirps, cube.num_channels);
    let two_pi = 2.0 * std::f64::consts::PI;
    let ts = 1.0 / cfg.sample_rate;
    let lambda = cfg.wavelength();

    let k = scatterers.len();
    let mut pre = vec![0f32; k * n_s];
    let mut pim = vec![0f32; k * n_s];
    let mut q = vec![Complex64::new(0.0, 0.0); k * n_m];
    let mut rc = vec![Complex64::new(0.0, 0.0); k * n_c];
    for (i, s) in scatterers.iter().enumerate() {
        if s.range >= cfg.max_range() {
            log::warn!(
                "scatterer at {:.2} m is beyond the unambiguous range {:.2} m and will alias",
                s.range,
                cfg.max_range()
            );
        }
        let f_b = 2.0 * cfg.bandwidth * s.range / (SPEED_OF_LIGHT * cfg.chirp_duration);
        let f_d = 2.0 * s.radial_velocity * cfg.center_frequency / SPEED_OF_LIGHT;
        let w_n = two_pi * f_b * ts;
        let w_m = two_pi * f_d * cfg.chirp_repetition;
        let w_c = two_pi * cfg.element_spacing * s.sin_azimuth;
        let phase0 = 2.0 * two_pi * s.range / lambda;
        for n in 0..n_s {
            let (sn, cs) = (w_n * n as f64).sin_cos();
            pre[i * n_s + n] = cs as f32;
            pim[i * n_s + n] = sn as f32;
        }
        for m in 0..n_m {
            q[i * n_m + m] = Complex64::from_polar(s.amplitude, phase0 + w_m * m as f64);
        }
        for c in 0..n_c {
            rc[i * n_c + c] = Complex64::from_polar(1.0, w_c * c as f64);
        }
    }

    let noise_scale = noise_std / std::f64::consts::SQRT_2;
    let mut noise_rng = noise_rng;
    let mut acc_re = vec![0f32; n_s];
    let mut acc_im = vec![0f32; n_s];
    for c in 0..n_c {
        for m in 0..n_m {
            acc_re.iter_mut().for_each(|v| *v = 0.0);
            acc_im.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..k {
                let b = q[i * n_m + m] * rc[i * n_c + c];
                let (br, bi) = (b.re as f32, b.im as f32);
                let pr = &pre[i * n_s..(i + 1) * n_s];
                let pi = &pim[i * n_s..(i + 1) * n_s];
                for (((ar, ai), &xr), &xi) in acc_re.iter_mut().zip(acc_im.iter_mut()).zip(pr).zip(pi) {
                    *ar += br * xr - bi * xi;
                    *ai += br * xi + bi * xr;
                }
            }
            let start = cube.index(0, m, c);
            let row = &mut cube.data[start..start + n_s];
            match noise_rng.as_deref_mut() {
                Some(rng) if noise_std > 0.0 => {
                    for (n, z) in row.iter_mut().enumerate() {
                        let nr: f64 = StandardNormal.sample(rng);
                        let ni: f64 = StandardNormal.sample(rng);
                        *z = Complex32::new(
                            acc_re[n] + (nr * noise_scale) as f32,
                            acc_im[n] + (ni * noise_scale) as f32,
                        );
                    }
                }
                _ => {
                    for (n, z) in row.iter_mut().enumerate() {
                        *z = Complex32::new(acc_re[n], acc_im[n]);
                    }
                }
            }
        }
    }
    cube
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Static reflectors fixed by the scenario seed: a near-range leakage
/// reflector and scattered ground clutter.
fn static_world(scenario: &Scenario, p: &WeatherPresets) -> Vec<Scatterer> {
    let rp = &p.radar;
    let mut rng = rng_for(scenario.seed, Stream::RadarStatic, 0);
    let mut out = vec![Scatterer::polar(
        rp.leakage_range,
        0.0,
        0.0,
        echo_amplitude(rp.amplitude_ref, rp.leakage_rcs, rp.leakage_range),
    )];
    let gz = scenario.roi.ground_z;
    for _ in 0..rp.ground_clutter_count {
        let pos = [uniform(&mut rng, 1.0, scenario.roi.x_max), uniform(&mut rng, -3.0, 3.0), gz];
        let rcs = rp.ground_clutter_rcs * { let e: f64 = Exp1.sample(&mut rng); e };
        out.push(Scatterer::at(pos, 0.0, echo_amplitude(rp.amplitude_ref, rcs, norm(pos))));
    }
    out
}

/// Scatterers on the vehicle's front face: `clamp(round(5 + 50 / d), 5, 30)`
/// points, each lost with the weather's dropout probability.
fn vehicle_scatterers(scenario: &Scenario, weather: &WeatherCondition, frame: usize, p: &WeatherPresets) -> Vec<Scatterer> {
    let rp = &p.radar;
    let d = scenario.vehicle_distance(frame);
    let b = scenario.vehicle_box_at(frame);
    let speed = scenario.vehicle_speed(frame);
    let n = (5.0 + 50.0 / d.max(1e-3)).round().clamp(5.0, 30.0) as usize;
    let dropout = rp.vehicle_dropout.get(weather.kind);
    let atten = p.rain_attenuation(weather);
    let gz = scenario.roi.ground_z;
    let half_w = 0.5 * b.extents[1];
    let mut rng = rng_for(scenario.seed, Stream::RadarVehicle, frame as u64);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let y = b.center[1] + uniform(&mut rng, -half_w, half_w);
        let z = uniform(&mut rng, gz + 0.1, gz + 0.95);
        let rcs = rp.vehicle_rcs * { let e: f64 = Exp1.sample(&mut rng); e };
        let lost = rng.random::<f64>() < dropout;
        if lost {
            continue;
        }
        let pos = [d, y, z];
        let r = norm(pos);
        let v_r = -speed * d / r;
        let amp = echo_amplitude(rp.amplitude_ref, rcs, r) * (-2.0 * atten * r).exp();
        out.push(Scatterer::at(pos, v_r, amp));
    }
    out
}

/// Rain clutter out to the model extent. Scatterers are stratified in
/// range (one per slice of `(extent - rain_x_min) / count`) and placed
/// uniformly over `|y| <= 2`, `|z| <= 0.5` at that range. Each stands for
/// a resolution volume whose cross-section grows with `R^2`, so its echo
/// power falls with `R^2` rather than `R^4`.
fn rain_scatterers(scenario: &Scenario, weather: &WeatherCondition, frame: usize, p: &WeatherPresets) -> Vec<Scatterer> {
    let Some(model) = p.rain_model(weather) else {
        return Vec::new();
    };
    let rp = &p.radar;
    let x_min = rp.rain_x_min.min(model.extent);
    let volume = 4.0 * (model.extent - x_min);
    let count = (model.scatterer_density * volume).round() as usize;
    let mut rng = rng_for(scenario.seed, Stream::RadarRain, frame as u64);
    let speed = Normal::new(model.velocity_mean, model.velocity_std).expect("validated std");
    let rcs_mean = 10f64.powf(model.reflectivity_scale / 10.0);
    let cap = model.velocity_mean + 2.5 * model.velocity_std;
    let slice = (model.extent - x_min) / count.max(1) as f64;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let r = x_min + (i as f64 + rng.random::<f64>()) * slice;
        let z = uniform(&mut rng, -0.5, 0.5).clamp(-0.9 * r, 0.9 * r);
        let y_max = (r * r - z * z).sqrt().min(2.0);
        let y = uniform(&mut rng, -y_max, y_max);
        let x = (r * r - y * y - z * z).max(0.0).sqrt();
        let mut v: f64 = speed.sample(&mut rng);
        while v.abs() > cap {
            v = speed.sample(&mut rng);
        }
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let rcs = rcs_mean * { let e: f64 = Exp1.sample(&mut rng); e };
        let amp = echo_amplitude(rp.amplitude_ref, rcs, r) * r.max(1.0) / 10.0;
        out.push(Scatterer::at([x, y, z], sign * v.abs(), amp));
    }
    out
}

/// Scene description for one frame.
pub fn radar_scene(
    scenario: &Scenario,
    weather: &WeatherCondition,
    frame_index: usize,
    presets: &WeatherPresets,
) -> Result<RadarScene> {
    scenario.validate()?;
    weather.validate()?;
    scenario.check_frame(frame_index)?;
    Ok(RadarScene {
        static_world: static_world(scenario, presets),
        vehicle: vehicle_scatterers(scenario, weather, frame_index, presets),
        rain: rain_scatterers(scenario, weather, frame_index, presets),
        noise_std: presets.radar.noise_std,
    })
}

/// Radar cube with explicit presets, plus the scene that produced it.
pub fn simulate_radar_frame_with(
    cfg: &RadarConfig,
    scenario: &Scenario,
    weather: &WeatherCondition,
    frame_index: usize,
    presets: &WeatherPresets,
) -> Result<(RadarDataCube, RadarScene)> {
    cfg.validate()?;
    let scene = radar_scene(scenario, weather, frame_index, presets)?;
    let mut noise = rng_for(scenario.seed, Stream::RadarNoise, frame_index as u64);
    let cube = synthesize_cube(cfg, &scene.all(), scene.noise_std, Some(&mut noise));
    Ok((cube, scene))
}

/// Radar cube for one frame using the bundled presets.
pub fn simulate_radar_frame(
    cfg: &RadarConfig,
    scenario: &Scenario,
    weather: &WeatherCondition,
    frame_index: usize,
) -> Result<RadarDataCube> {
    simulate_radar_frame_with(cfg, scenario, weather, frame_index, &WeatherPresets::default()).map(|r| r.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Light;

    #[test]
    fn empty_scene_is_all_zero() {
        let cfg = RadarConfig::default();
        let cube = synthesize_cube(&cfg, &[], 0.0, None);
        assert!(cube.data.iter().all(|z| z.re == 0.0 && z.im == 0.0));
    }

    #[test]
    fn heavy_rain_stays_inside_extent() {
        let p = WeatherPresets::default();
        let s = Scenario::default();
        let scene = radar_scene(&s, &WeatherCondition::heavy_rain(Light::Day), 3, &p).unwrap();
        assert!(!scene.rain.is_empty());
        assert!(scene.rain.iter().all(|r| r.range <= 11.0));
        let light = radar_scene(&s, &WeatherCondition::light_rain(Light::Day), 3, &p).unwrap();
        assert!(light.rain.len() <= scene.rain.len());
        assert!(light.rain.iter().all(|r| r.range <= 5.0));
        assert!(radar_scene(&s, &WeatherCondition::dry(Light::Day), 3, &p).unwrap().rain.is_empty());
    }

    #[test]
    fn vehicle_scatter_count_and_motion() {
        let p = WeatherPresets::default();
        let s = Scenario::default();
        let scene = radar_scene(&s, &WeatherCondition::dry(Light::Day), 0, &p).unwrap();
        assert_eq!(scene.vehicle.len(), 8);
        assert!(scene.vehicle.iter().all(|v| v.radial_velocity < 0.0 && v.radial_velocity > -4.8));
    }

    #[test]
    fn frames_are_reproducible() {
        let cfg = RadarConfig {
            num_chirps: 16,
            num_channels: 4,
            ..RadarConfig::default()
        };
        let s = Scenario::default().with_seed(11);
        let w = WeatherCondition::light_rain(Light::Day);
        let a = simulate_radar_frame(&cfg, &s, &w, 5).unwrap();
        let b = simulate_radar_frame(&cfg, &s, &w, 5).unwrap();
        assert_eq!(a, b);
        let c = simulate_radar_frame(&cfg, &s, &w, 6).unwrap();
        assert_ne!(a, c);
    }
}
