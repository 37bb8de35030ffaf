//! Seeded generators for synthetic radar cubes, lidar point clouds and
//! camera images of a vehicle approaching the sensors.
//!
//! Every random draw comes from a ChaCha stream keyed by
//! `(seed, purpose, frame_index)`, so frames can be produced in any order
//! or in parallel with identical results.

pub mod camera;
pub mod dataset;
pub mod lidar;
pub mod presets;
pub mod radar;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::Box2D;
use crate::error::{Error, Result};
use crate::types::{BoundingBox3D, Roi, MOUNT_HEIGHT};

pub use camera::{render_vehicle_template, simulate_camera_frame, CameraTruth};
pub use dataset::{generate_dataset, DatasetManifest, FrameTruth, ManifestEntry};
pub use lidar::simulate_lidar_frame;
pub use presets::{FogModel, RainClutterModel, WeatherPresets};
pub use radar::{simulate_radar_frame, synthesize_cube, RadarScene, Scatterer};

/// Purpose tags that separate the random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub(crate) enum Stream {
    RadarStatic = 1,
    RadarVehicle = 2,
    RadarRain = 3,
    RadarNoise = 4,
    LidarBase = 10,
    LidarFog = 11,
    LidarRain = 12,
    CameraTexture = 20,
    CameraNoise = 21,
    CameraRain = 22,
}

/// SplitMix64 finaliser.
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn rng_for(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ mix(stream as u64)));
    rng.set_stream(index);
    rng
}

/// Vehicle approach along the sensor boresight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    /// Vehicle box at frame 0 (center, extents, yaw). Its near face defines
    /// the vehicle distance.
    pub vehicle_box: BoundingBox3D,
    /// Speed towards the sensor, m/s.
    pub vehicle_velocity: f64,
    /// Distance of the near face at frame 0, m.
    pub start_distance: f64,
    pub roi: Roi,
    /// Hz
    pub frame_rate: f64,
    pub seed: u64,
    /// Deceleration, m/s²; 0 for constant speed.
    pub deceleration: f64,
    /// Speed floor while decelerating, m/s.
    pub min_velocity: f64,
}

/// Vehicle length, width and height, m.
pub const VEHICLE_EXTENTS: [f64; 3] = [4.2, 1.8, 1.5];

impl Default for Scenario {
    fn default() -> Self {
        Self::new(20.0, 4.8, 12.5, 0)
    }
}

impl Scenario {
    pub fn new(start_distance: f64, vehicle_velocity: f64, frame_rate: f64, seed: u64) -> Self {
        let [l, _, h] = VEHICLE_EXTENTS;
        Self {
            vehicle_box: BoundingBox3D {
                center: [start_distance + 0.5 * l, 0.0, -MOUNT_HEIGHT + 0.5 * h],
                extents: VEHICLE_EXTENTS,
                yaw: 0.0,
            },
            vehicle_velocity,
            start_distance,
            roi: Roi::default(),
            frame_rate,
            seed,
            deceleration: 0.0,
            min_velocity: 0.0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start_distance > 0.0) || self.start_distance > self.roi.x_max {
            return Err(Error::domain(format!(
                "start_distance {} must lie in (0, {}]",
                self.start_distance, self.roi.x_max
            )));
        }
        let half_w = 0.5 * self.vehicle_box.extents[1];
        let y = self.vehicle_box.center[1];
        if y - half_w < self.roi.y_min || y + half_w > self.roi.y_max {
            return Err(Error::domain("vehicle path leaves the ROI laterally"));
        }
        if !(self.frame_rate > 0.0) || !(self.vehicle_velocity >= 0.0) || !(self.deceleration >= 0.0) {
            return Err(Error::domain("frame_rate must be > 0, velocity and deceleration >= 0"));
        }
        BoundingBox3D::new(self.vehicle_box.center, self.vehicle_box.extents, self.vehicle_box.yaw)?;
        Ok(())
    }

    fn time(&self, frame_index: usize) -> f64 {
        frame_index as f64 / self.frame_rate
    }

    /// Speed towards the sensor at a frame, m/s.
    pub fn vehicle_speed(&self, frame_index: usize) -> f64 {
        let v = self.vehicle_velocity - self.deceleration * self.time(frame_index);
        v.max(self.min_velocity.min(self.vehicle_velocity))
    }

    /// Distance travelled since frame 0, m.
    fn travelled(&self, t: f64) -> f64 {
        let v0 = self.vehicle_velocity;
        let floor = self.min_velocity.min(v0);
        if self.deceleration <= 0.0 {
            return v0 * t;
        }
        let t_floor = (v0 - floor) / self.deceleration;
        if t <= t_floor {
            v0 * t - 0.5 * self.deceleration * t * t
        } else {
            v0 * t_floor - 0.5 * self.deceleration * t_floor * t_floor + floor * (t - t_floor)
        }
    }

    /// Forward distance of the vehicle's near face, m.
    pub fn vehicle_distance(&self, frame_index: usize) -> f64 {
        self.start_distance - self.travelled(self.time(frame_index))
    }

    /// True vehicle box at a frame.
    pub fn vehicle_box_at(&self, frame_index: usize) -> BoundingBox3D {
        let mut b = self.vehicle_box;
        b.center[0] = self.vehicle_distance(frame_index) + 0.5 * b.extents[0];
        b
    }

    /// Labeling box: the vehicle padded by 0.1 m in length and width, with
    /// its floor lifted 5 cm above the ground so ground returns stay out.
    pub fn label_box_at(&self, frame_index: usize) -> BoundingBox3D {
        let b = self.vehicle_box_at(frame_index);
        let bottom = self.roi.ground_z + 0.05;
        let top = b.center[2] + 0.5 * b.extents[2];
        BoundingBox3D {
            center: [b.center[0], b.center[1], 0.5 * (bottom + top)],
            extents: [b.extents[0] + 0.2, b.extents[1] + 0.2, top - bottom],
            yaw: b.yaw,
        }
    }

    pub(crate) fn check_frame(&self, frame_index: usize) -> Result<f64> {
        let d = self.vehicle_distance(frame_index);
        if !(d >= 0.0) {
            return Err(Error::domain(format!(
                "vehicle distance at frame {frame_index} is {d:.3} m (< 0)"
            )));
        }
        Ok(d)
    }

    /// Number of frames before the near face comes closer than `min_distance`.
    pub fn frames_until(&self, min_distance: f64) -> usize {
        let mut k = 0;
        while k < 100_000 && self.vehicle_distance(k) >= min_distance {
            k += 1;
        }
        k
    }
}

/// Ground-truth 2D box of the vehicle face in the camera image.
pub fn camera_truth_box(scenario: &Scenario, frame_index: usize, presets: &presets::CameraPresets) -> Box2D {
    camera::project_face(scenario, frame_index, presets)
}
