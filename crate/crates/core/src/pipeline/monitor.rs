//! Per-frame performance grades from a trained model, with radar grid maps.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::analysis::{analyze_dataset, FrameAnalysis};
use crate::error::{Error, Result};
use crate::fuzzy::MonitorModel;
use crate::gridmap::{cluster_shape_flag, frame_grid_maps, DisturbanceGridMap};
use crate::radar::{ChainConfig, RadarFrameResult};
use crate::sim::dataset::DatasetManifest;
use crate::sim::WeatherPresets;
use crate::types::{Grade, Roi, Sensor};

/// Grade of one bin. `grade` and `score` are absent when the bin holds no
/// data: a radar bin without detections or an occluded lidar bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinVerdict {
    pub bin: Option<usize>,
    pub grade: Option<Grade>,
    pub score: Option<f64>,
    /// Some input lay outside the training range.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMapSummary {
    pub all_clear: bool,
    pub disturbed_cells: usize,
    pub disturbed_bins: Vec<usize>,
    /// m; 0 for an all-clear map.
    pub disturbed_extent: f64,
    /// The vehicle entered the rain's velocity and range span.
    pub shape_flag: bool,
    /// Stem of the written map files, relative to the output directory.
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub sensor: Sensor,
    pub condition: String,
    pub frame: usize,
    pub bins: Vec<BinVerdict>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub grid_map: Option<GridMapSummary>,
}

/// Evaluates every bin tree of the frame's sensor on that bin's features.
pub fn monitor_frame(model: &MonitorModel, a: &FrameAnalysis) -> Result<MonitorRecord> {
    let mut bins = Vec::with_capacity(a.bins.len());
    for (i, raw) in a.bins.iter().enumerate() {
        let bin = a.sensor.is_binned().then_some(i);
        if !a.valid[i] {
            bins.push(BinVerdict {
                bin,
                grade: None,
                score: None,
                clamped: false,
            });
            continue;
        }
        let tree = model
            .tree(a.sensor, bin)
            .ok_or_else(|| Error::domain(format!("model has no {} tree for bin {bin:?}", a.sensor)))?;
        let (out, norm) = tree.evaluate(raw)?;
        bins.push(BinVerdict {
            bin,
            grade: Some(out.label.grade),
            score: Some(out.label.score),
            clamped: norm.any_clamped(),
        });
    }
    Ok(MonitorRecord {
        sensor: a.sensor,
        condition: a.condition.clone(),
        frame: a.frame,
        bins,
        grid_map: None,
    })
}

/// Grid maps of a radar frame, using the ground-truth vehicle as the
/// tracked object for the shape flag.
pub fn radar_grid_map(r: &RadarFrameResult, a: &FrameAnalysis, speed: f64, roi: &Roi) -> (DisturbanceGridMap, GridMapSummary) {
    let map = frame_grid_maps(r, roi, a.frame);
    let flag = cluster_shape_flag(r.nearest_cluster(), &r.flagged, &r.map, -speed, a.vehicle_distance);
    let summary = GridMapSummary {
        all_clear: map.is_all_clear(),
        disturbed_cells: map.disturbed_cells().len(),
        disturbed_bins: map.disturbed_bins(),
        disturbed_extent: map.disturbed_extent(),
        shape_flag: flag,
        file: None,
    };
    (map, summary)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub records: usize,
    pub grid_maps: usize,
    pub missing: Vec<PathBuf>,
}

pub const RECORDS_FILE: &str = "monitor.jsonl";

/// Monitors the chosen conditions and sensors of a dataset. Writes one JSON
/// line per (sensor, frame) to `out/monitor.jsonl` and radar grid maps to
/// `out/gridmaps/<condition>/frame_<n>*`.
pub fn monitor_dataset(
    root: &Path,
    model: &MonitorModel,
    presets: &WeatherPresets,
    chain: &ChainConfig,
    conditions: Option<&[String]>,
    sensors: &[Sensor],
    out: &Path,
) -> Result<MonitorSummary> {
    let mut manifest = DatasetManifest::load(root)?;
    if let Some(keep) = conditions {
        for c in keep {
            if manifest.cell(c).is_none() {
                return Err(Error::domain(format!("condition {c} is not in the dataset")));
            }
        }
        manifest.entries.retain(|e| keep.contains(&e.condition));
    }
    let analysis = analyze_dataset(root, &manifest, sensors, presets, chain, true)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join(RECORDS_FILE);
    let mut lines = Vec::new();
    let mut grid_maps = 0;
    for (a, r) in analysis.frames.iter().zip(&analysis.radar) {
        let mut rec = monitor_frame(model, a)?;
        if let Some(r) = r {
            let cell = manifest.cell(&a.condition).expect("analyzed conditions are in the manifest");
            let speed = cell.scenario.vehicle_speed(a.frame);
            let (map, mut summary) = radar_grid_map(r, a, speed, &cell.scenario.roi);
            let rel = PathBuf::from("gridmaps").join(&a.condition);
            let dir = out.join(&rel);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let stem = format!("frame_{}", a.frame);
            map.save(&dir, &stem)?;
            summary.file = Some(rel.join(stem));
            rec.grid_map = Some(summary);
            grid_maps += 1;
        }
        serde_json::to_writer(&mut lines, &rec)?;
        lines.push(b'\n');
    }
    let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(&lines).map_err(|e| Error::io(&path, e))?;
    Ok(MonitorSummary {
        records: analysis.frames.len(),
        grid_maps,
        missing: analysis.missing,
    })
}
