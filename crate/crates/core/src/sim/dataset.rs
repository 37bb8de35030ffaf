use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::{project_face, simulate_camera_frame_with};
use super::lidar::simulate_lidar_frame_with;
use super::presets::WeatherPresets;
use super::radar::simulate_radar_frame_with;
use super::Scenario;
use crate::camera::Box2D;
use crate::error::{Error, Result};
use crate::types::{BoundingBox3D, RadarConfig, Sensor, WeatherCondition};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Ground truth written next to every frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub frame_index: usize,
    pub condition: String,
    pub weather: WeatherCondition,
    pub vehicle_box: BoundingBox3D,
    pub label_box: BoundingBox3D,
    pub vehicle_distance: f64,
    pub vehicle_speed: f64,
    /// Extent of rain clutter, m; `None` without rain.
    pub rain_extent: Option<f64>,
    pub camera_box: Box2D,
}

impl FrameTruth {
    pub fn new(scenario: &Scenario, weather: &WeatherCondition, frame_index: usize, presets: &WeatherPresets) -> Self {
        Self {
            frame_index,
            condition: weather.tag(),
            weather: *weather,
            vehicle_box: scenario.vehicle_box_at(frame_index),
            label_box: scenario.label_box_at(frame_index),
            vehicle_distance: scenario.vehicle_distance(frame_index),
            vehicle_speed: scenario.vehicle_speed(frame_index),
            rain_extent: presets.rain_model(weather).map(|m| m.extent),
            camera_box: project_face(scenario, frame_index, &presets.camera),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// One condition of the matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCell {
    pub condition: String,
    pub weather: WeatherCondition,
    pub scenario: Scenario,
    pub frames: usize,
}

/// One written sensor frame. Paths are relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub condition: String,
    pub sensor: Sensor,
    pub frame_index: usize,
    pub file: PathBuf,
    pub truth: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub radar_config: RadarConfig,
    pub sensors: Vec<Sensor>,
    pub cells: Vec<ManifestCell>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn entries_for(&self, sensor: Sensor) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.sensor == sensor)
    }

    pub fn cell(&self, condition: &str) -> Option<&ManifestCell> {
        self.cells.iter().find(|c| c.condition == condition)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let path = root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        if m.version > MANIFEST_VERSION {
            return Err(Error::UnsupportedVersion {
                found: m.version,
                supported: MANIFEST_VERSION,
            });
        }
        Ok(m)
    }
}

fn extension(sensor: Sensor) -> &'static str {
    match sensor {
        Sensor::Radar => "bin",
        Sensor::Lidar => "csv",
        Sensor::Camera => "ppm",
    }
}

pub fn frame_path(condition: &str, sensor: Sensor, frame_index: usize) -> PathBuf {
    PathBuf::from(condition)
        .join(sensor.as_str())
        .join(format!("frame_{frame_index}.{}", extension(sensor)))
}

pub fn truth_path(condition: &str, frame_index: usize) -> PathBuf {
    PathBuf::from(condition).join("truth").join(format!("frame_{frame_index}.json"))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Simulates `frames_per_cell` frames of each condition for the chosen
/// sensors and writes them under `root`, frames in parallel.
pub fn generate_dataset(
    root: &Path,
    matrix: &[(WeatherCondition, Scenario)],
    frames_per_cell: usize,
    sensors: &[Sensor],
    cfg: &RadarConfig,
    presets: &WeatherPresets,
) -> Result<DatasetManifest> {
    if frames_per_cell == 0 {
        return Err(Error::domain("frames_per_cell must be >= 1"));
    }
    cfg.validate()?;
    presets.validate()?;
    let mut cells = Vec::with_capacity(matrix.len());
    for (w, s) in matrix {
        w.validate()?;
        s.validate()?;
        let condition = w.tag();
        if cells.iter().any(|c: &ManifestCell| c.condition == condition) {
            return Err(Error::domain(format!("condition {condition} appears twice")));
        }
        if s.vehicle_distance(frames_per_cell - 1) < 0.0 {
            return Err(Error::domain(format!(
                "{condition}: vehicle passes the sensor before frame {}",
                frames_per_cell - 1
            )));
        }
        cells.push(ManifestCell {
            condition,
            weather: *w,
            scenario: s.clone(),
            frames: frames_per_cell,
        });
    }
    create_dir(root)?;
    let mut sensors: Vec<Sensor> = sensors.to_vec();
    sensors.sort();
    sensors.dedup();
    for c in &cells {
        create_dir(&root.join(&c.condition).join("truth"))?;
        for s in &sensors {
            create_dir(&root.join(&c.condition).join(s.as_str()))?;
        }
    }

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..frames_per_cell).map(move |f| (c, f)))
        .collect();
    let written: Vec<Vec<ManifestEntry>> = jobs
        .par_iter()
        .map(|&(ci, frame)| write_frame(root, &cells[ci], frame, &sensors, cfg, presets))
        .collect::<Result<_>>()?;

    let mut entries: Vec<ManifestEntry> = written.into_iter().flatten().collect();
    entries.sort_by(|a, b| {
        (a.sensor, &a.condition, a.frame_index).cmp(&(b.sensor, &b.condition, b.frame_index))
    });
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        radar_config: *cfg,
        sensors,
        cells,
        entries,
    };
    manifest.save(root)?;
    Ok(manifest)
}

fn write_frame(
    root: &Path,
    cell: &ManifestCell,
    frame: usize,
    sensors: &[Sensor],
    cfg: &RadarConfig,
    presets: &WeatherPresets,
) -> Result<Vec<ManifestEntry>> {
    let (s, w) = (&cell.scenario, &cell.weather);
    let truth_rel = truth_path(&cell.condition, frame);
    let truth = FrameTruth::new(s, w, frame, presets);
    let path = root.join(&truth_rel);
    std::fs::write(&path, serde_json::to_string_pretty(&truth)?).map_err(|e| Error::io(&path, e))?;

    let mut out = Vec::with_capacity(sensors.len());
    for &sensor in sensors {
        let rel = frame_path(&cell.condition, sensor, frame);
        let path = root.join(&rel);
        match sensor {
            Sensor::Radar => simulate_radar_frame_with(cfg, s, w, frame, presets)?.0.save(&path)?,
            Sensor::Lidar => simulate_lidar_frame_with(s, w, frame, presets)?.save_csv(&path)?,
            Sensor::Camera => simulate_camera_frame_with(s, w, frame, presets)?.0.save_ppm(&path)?,
        }
        out.push(ManifestEntry {
            condition: cell.condition.clone(),
            sensor,
            frame_index: frame,
            file: rel,
            truth: truth_rel.clone(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Light;

    #[test]
    fn empty_matrix_gives_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(dir.path(), &[], 3, &Sensor::ALL, &RadarConfig::default(), &WeatherPresets::default()).unwrap();
        assert!(m.entries.is_empty());
        assert_eq!(DatasetManifest::load(dir.path()).unwrap(), m);
    }

    #[test]
    fn writes_lidar_and_camera_frames() {
        let dir = tempfile::tempdir().unwrap();
        let matrix = vec![
            (WeatherCondition::dry(Light::Day), Scenario::default()),
            (WeatherCondition::fog(Light::Night), Scenario::default()),
        ];
        let sensors = [Sensor::Camera, Sensor::Lidar];
        let m = generate_dataset(dir.path(), &matrix, 2, &sensors, &RadarConfig::default(), &WeatherPresets::default()).unwrap();
        assert_eq!(m.entries.len(), 8);
        assert_eq!(m.entries_for(Sensor::Lidar).count(), 4);
        for e in &m.entries {
            assert!(dir.path().join(&e.file).is_file());
            let t = FrameTruth::load(&dir.path().join(&e.truth)).unwrap();
            assert_eq!(t.frame_index, e.frame_index);
        }
    }
}
