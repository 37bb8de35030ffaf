//! Per-frame features, vehicle measurements and report metrics, computed
//! once and shared by extraction, monitoring and reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{camera_features, proxy_detect, Image};
use crate::error::{Error, Result};
use crate::labeling::vehicle_detection_count;
use crate::lidar::{dispersion, ground_count, lidar_features, mean_intensity, min_max_distance, occluded_bins, PointCloud};
use crate::radar::{process_cube, ChainConfig, RadarDataCube, RadarFrameResult};
use crate::sim::camera::render_vehicle_template;
use crate::sim::dataset::{DatasetManifest, FrameTruth, ManifestEntry};
use crate::sim::{Scenario, WeatherPresets};
use crate::types::{distance_bin, Roi, Sensor, NUM_DISTANCE_BINS};

/// Footprint margin for radar vehicle detections, m.
pub const VEHICLE_MARGIN: f64 = 1.0;
/// Radial velocity tolerance for radar vehicle detections, m/s.
pub const VEHICLE_VELOCITY_TOL: f64 = 1.5;

/// Everything later stages need from one sensor frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnalysis {
    pub sensor: Sensor,
    pub condition: String,
    pub frame: usize,
    /// Near-face distance of the vehicle, m.
    pub vehicle_distance: f64,
    /// Raw tree inputs per distance bin (one entry for the camera).
    pub bins: Vec<Vec<Option<f64>>>,
    /// Whether a bin can be graded: radar bins need detections, lidar bins
    /// must not be occluded.
    pub valid: Vec<bool>,
    /// Vehicle measurement behind the label: radar vehicle detections,
    /// lidar box dispersion (`None` for an empty box), camera confidence x IOU.
    pub measurement: Option<f64>,
    /// Frame-level quantities for reports; undefined values are left out.
    pub metrics: BTreeMap<String, f64>,
}

impl FrameAnalysis {
    /// Bin the vehicle's near face falls in; the camera has a single bin.
    pub fn vehicle_bin(&self) -> Option<usize> {
        match self.sensor {
            Sensor::Camera => Some(0),
            _ => distance_bin(self.vehicle_distance),
        }
    }
}

fn put(metrics: &mut BTreeMap<String, f64>, name: &str, v: Option<f64>) {
    if let Some(v) = v.filter(|v| v.is_finite()) {
        metrics.insert(name.to_string(), v);
    }
}

pub fn analyze_radar(result: &RadarFrameResult, condition: &str, truth: &FrameTruth) -> FrameAnalysis {
    let count = vehicle_detection_count(
        &result.detections,
        &truth.vehicle_box,
        -truth.vehicle_speed,
        VEHICLE_MARGIN,
        VEHICLE_VELOCITY_TOL,
    );
    let mut metrics = BTreeMap::new();
    put(&mut metrics, "radar_vehicle_detections", Some(count as f64));
    put(&mut metrics, "radar_detections", Some(result.detections.len() as f64));
    put(&mut metrics, "radar_rain_extent", result.features.first().map(|f| f.rain_extent_estimate));
    FrameAnalysis {
        sensor: Sensor::Radar,
        condition: condition.to_string(),
        frame: truth.frame_index,
        vehicle_distance: truth.vehicle_distance,
        bins: result.features.iter().map(|f| f.values()).collect(),
        valid: result.features.iter().map(|f| f.valid).collect(),
        measurement: Some(count as f64),
        metrics,
    }
}

pub fn analyze_lidar(
    cloud: &PointCloud,
    prev: Option<&PointCloud>,
    roi: &Roi,
    condition: &str,
    truth: &FrameTruth,
) -> FrameAnalysis {
    let features = lidar_features(cloud, prev, roi);
    let disp = dispersion(cloud, &truth.label_box).value();
    let mut metrics = BTreeMap::new();
    put(&mut metrics, "lidar_dispersion", Some(disp.unwrap_or(0.0)));
    put(&mut metrics, "lidar_ground_count", Some(ground_count(cloud, roi) as f64));
    put(&mut metrics, "lidar_mean_intensity", mean_intensity(cloud, roi));
    put(&mut metrics, "lidar_point_count", Some(cloud.len() as f64));
    let extremes = min_max_distance(cloud);
    put(&mut metrics, "lidar_min_distance", extremes.map(|e| e.0));
    put(&mut metrics, "lidar_max_distance", extremes.map(|e| e.1));
    FrameAnalysis {
        sensor: Sensor::Lidar,
        condition: condition.to_string(),
        frame: truth.frame_index,
        vehicle_distance: truth.vehicle_distance,
        bins: features.iter().map(|f| f.values()).collect(),
        valid: occluded_bins(cloud, roi).iter().map(|o| !o).collect(),
        measurement: disp,
        metrics,
    }
}

pub fn analyze_camera(img: &Image, template: &Image, condition: &str, truth: &FrameTruth) -> Result<FrameAnalysis> {
    let f = camera_features(img)?;
    let det = proxy_detect(img, template, &truth.camera_box)?;
    let mut metrics = BTreeMap::new();
    put(&mut metrics, "camera_sharpness", Some(f.sharpness));
    put(&mut metrics, "camera_brightness", Some(f.brightness));
    put(&mut metrics, "camera_contrast", Some(f.contrast));
    put(&mut metrics, "camera_confidence", Some(det.confidence));
    put(&mut metrics, "camera_iou", Some(det.iou));
    Ok(FrameAnalysis {
        sensor: Sensor::Camera,
        condition: condition.to_string(),
        frame: truth.frame_index,
        vehicle_distance: truth.vehicle_distance,
        bins: vec![f.values()],
        valid: vec![true],
        measurement: Some(det.confidence * det.iou),
        metrics,
    })
}

/// Analyses of every readable frame of a dataset, in manifest order.
#[derive(Debug, Clone, Default)]
pub struct DatasetAnalysis {
    pub frames: Vec<FrameAnalysis>,
    /// Frame or truth files listed in the manifest but absent on disk.
    pub missing: Vec<PathBuf>,
    /// Radar chain output kept for grid maps, keyed like `frames`.
    pub radar: Vec<Option<RadarFrameResult>>,
}

enum Loaded {
    Frame(Box<(FrameAnalysis, Option<RadarFrameResult>)>),
    Missing(PathBuf),
}

fn missing_or(path: &Path, e: Error) -> Result<Option<PathBuf>> {
    match e {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => Ok(Some(path.to_path_buf())),
        other => Err(other),
    }
}

/// Loads and analyzes the frames of `sensors` listed in the manifest under
/// `root`, in parallel. Missing files are collected instead of failing;
/// unreadable or malformed files are errors naming the file. Radar chain
/// results are kept only when `keep_radar` is set.
pub fn analyze_dataset(
    root: &Path,
    manifest: &DatasetManifest,
    sensors: &[Sensor],
    presets: &WeatherPresets,
    chain: &ChainConfig,
    keep_radar: bool,
) -> Result<DatasetAnalysis> {
    let entries: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| sensors.contains(&e.sensor)).collect();
    let loaded: Vec<Loaded> = entries
        .par_iter()
        .map(|e| load_entry(root, manifest, e, presets, chain, keep_radar))
        .collect::<Result<_>>()?;
    let mut out = DatasetAnalysis::default();
    for l in loaded {
        match l {
            Loaded::Frame(b) => {
                let (a, r) = *b;
                out.frames.push(a);
                out.radar.push(r);
            }
            Loaded::Missing(p) => out.missing.push(p),
        }
    }
    out.missing.sort();
    out.missing.dedup();
    Ok(out)
}

fn load_entry(
    root: &Path,
    manifest: &DatasetManifest,
    e: &ManifestEntry,
    presets: &WeatherPresets,
    chain: &ChainConfig,
    keep_radar: bool,
) -> Result<Loaded> {
    let truth_path = root.join(&e.truth);
    let truth = match FrameTruth::load(&truth_path) {
        Ok(t) => t,
        Err(err) => return missing_or(&truth_path, err).map(|p| Loaded::Missing(p.unwrap_or_default())),
    };
    let path = root.join(&e.file);
    let scenario = manifest
        .cell(&e.condition)
        .map(|c| c.scenario.clone())
        .ok_or_else(|| Error::format(root.join(crate::sim::dataset::MANIFEST_FILE), format!("no cell for condition {}", e.condition)))?;
    let res = match e.sensor {
        Sensor::Radar => RadarDataCube::load(&path).and_then(|cube| {
            let r = process_cube(&cube, &manifest.radar_config, chain)?;
            let a = analyze_radar(&r, &e.condition, &truth);
            Ok((a, keep_radar.then_some(r)))
        }),
        Sensor::Lidar => PointCloud::load_csv(&path, e.frame_index).and_then(|cloud| {
            let prev = previous_cloud(root, manifest, e)?;
            Ok((analyze_lidar(&cloud, prev.as_ref(), &scenario.roi, &e.condition, &truth), None))
        }),
        Sensor::Camera => Image::load(&path).and_then(|img| {
            let template = render_vehicle_template(&scenario, e.frame_index, presets)?;
            Ok((analyze_camera(&img, &template, &e.condition, &truth)?, None))
        }),
    };
    match res {
        Ok(v) => Ok(Loaded::Frame(Box::new(v))),
        Err(err) => missing_or(&path, err).map(|p| Loaded::Missing(p.unwrap_or_default())),
    }
}

/// The previous lidar frame of the same condition, if the manifest lists
/// one and it is on disk.
fn previous_cloud(root: &Path, manifest: &DatasetManifest, e: &ManifestEntry) -> Result<Option<PointCloud>> {
    let Some(prev_index) = e.frame_index.checked_sub(1) else {
        return Ok(None);
    };
    let Some(prev) = manifest
        .entries_for(Sensor::Lidar)
        .find(|p| p.condition == e.condition && p.frame_index == prev_index)
    else {
        return Ok(None);
    };
    let path = root.join(&prev.file);
    match PointCloud::load_csv(&path, prev_index) {
        Ok(c) => Ok(Some(c)),
        Err(err) => missing_or(&path, err).map(|_| None),
    }
}

/// In-memory analysis of freshly simulated frames, for callers that skip
/// the dataset on disk.
pub fn simulate_and_analyze(
    sensor: Sensor,
    scenario: &Scenario,
    weather: &crate::types::WeatherCondition,
    frames: std::ops::Range<usize>,
    cfg: &crate::types::RadarConfig,
    presets: &WeatherPresets,
    chain: &ChainConfig,
) -> Result<Vec<(FrameAnalysis, Option<RadarFrameResult>)>> {
    use crate::sim::{camera::simulate_camera_frame_with, lidar::simulate_lidar_frame_with, radar::simulate_radar_frame_with};
    let condition = weather.tag();
    let idx: Vec<usize> = frames.collect();
    idx.par_iter()
        .map(|&f| {
            let truth = FrameTruth::new(scenario, weather, f, presets);
            match sensor {
                Sensor::Radar => {
                    let (cube, _) = simulate_radar_frame_with(cfg, scenario, weather, f, presets)?;
                    let r = process_cube(&cube, cfg, chain)?;
                    Ok((analyze_radar(&r, &condition, &truth), Some(r)))
                }
                Sensor::Lidar => {
                    let cloud = simulate_lidar_frame_with(scenario, weather, f, presets)?;
                    let prev = match f.checked_sub(1) {
                        Some(p) => Some(simulate_lidar_frame_with(scenario, weather, p, presets)?),
                        None => None,
                    };
                    Ok((analyze_lidar(&cloud, prev.as_ref(), &scenario.roi, &condition, &truth), None))
                }
                Sensor::Camera => {
                    let (img, _) = simulate_camera_frame_with(scenario, weather, f, presets)?;
                    let template = render_vehicle_template(scenario, f, presets)?;
                    Ok((analyze_camera(&img, &template, &condition, &truth)?, None))
                }
            }
        })
        .collect()
}

/// Number of per-bin entries a sensor's analysis carries.
pub fn bins_for(sensor: Sensor) -> usize {
    if sensor.is_binned() {
        NUM_DISTANCE_BINS
    } else {
        1
    }
}
