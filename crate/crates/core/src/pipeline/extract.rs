//! Feature rows and performance labels for the vehicle's bin of every frame.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::analysis::{analyze_dataset, FrameAnalysis};
use super::DRY_PREFIX;
use crate::error::{Error, Result};
use crate::labeling::{label_camera, label_lidar, label_radar, write_samples, CameraThresholds, LabelThresholds, LabeledSample};
use crate::lidar::Dispersion;
use crate::radar::ChainConfig;
use crate::sim::dataset::DatasetManifest;
use crate::sim::WeatherPresets;
use crate::stats::percentile;
use crate::types::{PerformanceLabel, Sensor, BIN_WIDTH, NUM_DISTANCE_BINS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractConfig {
    /// Percentile (0..=100) of dry measurements used as `good_min`.
    pub percentile: f64,
    /// `moderate_min = moderate_ratio * good_min`.
    pub moderate_ratio: f64,
    pub camera: CameraThresholds,
    pub chain: ChainConfig,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            percentile: 10.0,
            moderate_ratio: 0.5,
            camera: CameraThresholds::default(),
            chain: ChainConfig::default(),
        }
    }
}

/// Label thresholds of all sensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSet {
    pub radar: LabelThresholds,
    pub lidar: LabelThresholds,
    pub camera: CameraThresholds,
}

impl ThresholdSet {
    /// Fits the radar and lidar curves on the dry frames' vehicle
    /// measurements. An empty lidar box counts as dispersion 0.
    pub fn fit(frames: &[FrameAnalysis], cfg: &ExtractConfig) -> Result<Self> {
        let dry = |s: Sensor| -> Vec<(usize, f64)> {
            frames
                .iter()
                .filter(|f| f.sensor == s && f.condition.starts_with(DRY_PREFIX))
                .filter_map(|f| Some((f.vehicle_bin()?, f.measurement.unwrap_or(0.0))))
                .collect()
        };
        let curve = |s: Sensor, floor: f64| -> Result<LabelThresholds> {
            let samples = dry(s);
            if samples.is_empty() {
                if frames.iter().any(|f| f.sensor == s) {
                    return Err(Error::domain(format!("no dry {s} frames to fit label thresholds on")));
                }
                // Nothing to label; any valid curve will do.
                return LabelThresholds::new(vec![floor; 10], vec![0.0; 10]);
            }
            LabelThresholds::fit(&samples, cfg.percentile, cfg.moderate_ratio, floor)
        };
        Ok(Self {
            radar: curve(Sensor::Radar, 1.0)?,
            lidar: curve(Sensor::Lidar, 0.0)?,
            camera: cfg.camera,
        })
    }
}

/// Label of every bin of one sequence, from the vehicle's own measurement
/// while it was inside that bin (median over those frames).
fn sequence_labels(seq: &[&FrameAnalysis], t: &ThresholdSet) -> Result<Vec<Option<(PerformanceLabel, f64)>>> {
    let sensor = seq[0].sensor;
    (0..NUM_DISTANCE_BINS)
        .map(|bin| {
            let values: Vec<f64> = seq
                .iter()
                .filter(|f| f.vehicle_bin() == Some(bin))
                .map(|f| f.measurement.unwrap_or(0.0))
                .collect();
            let Some(m) = percentile(&values, 50.0) else {
                return Ok(None);
            };
            let label = match sensor {
                Sensor::Radar => label_radar(m.round() as i64, (bin as f64 + 0.5) * BIN_WIDTH, &t.radar)?,
                _ => label_lidar(Dispersion::Value(m), bin, &t.lidar)?,
            };
            Ok(Some((label, m)))
        })
        .collect()
}

/// Turns analyzed frames into labeled rows.
///
/// Camera frames give one row each, labeled by their own detection. Radar
/// and lidar frames give one row per bin: the bin's label comes from the
/// vehicle's pass through that bin in the same (sensor, condition)
/// sequence, so `frames` must hold at most one run per condition. Bins the
/// vehicle never entered and bins without data (radar bins without
/// detections, occluded lidar bins) give no row.
pub fn label_frames(frames: &[FrameAnalysis], t: &ThresholdSet) -> Result<Vec<LabeledSample>> {
    let mut seqs: BTreeMap<(Sensor, &str), Vec<&FrameAnalysis>> = BTreeMap::new();
    for f in frames {
        seqs.entry((f.sensor, f.condition.as_str())).or_default().push(f);
    }
    let mut bin_labels = BTreeMap::new();
    for (key, seq) in &seqs {
        if key.0.is_binned() {
            bin_labels.insert(*key, sequence_labels(seq, t)?);
        }
    }
    let mut out = Vec::new();
    for f in frames {
        if f.sensor == Sensor::Camera {
            let m = |k: &str| f.metrics.get(k).copied().unwrap_or(0.0);
            let label = label_camera(m("camera_confidence"), m("camera_iou"), &t.camera)?;
            out.push(LabeledSample {
                sensor: f.sensor,
                condition: f.condition.clone(),
                frame: f.frame,
                distance_bin: None,
                features: f.bins[0].clone(),
                label,
                measurement: f.measurement,
            });
            continue;
        }
        let labels = &bin_labels[&(f.sensor, f.condition.as_str())];
        for (bin, l) in labels.iter().enumerate() {
            let Some((label, m)) = l else { continue };
            if !f.valid[bin] {
                continue;
            }
            out.push(LabeledSample {
                sensor: f.sensor,
                condition: f.condition.clone(),
                frame: f.frame,
                distance_bin: Some(bin),
                features: f.bins[bin].clone(),
                label: *label,
                measurement: Some(*m),
            });
        }
    }
    for s in &out {
        s.validate()?;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ExtractOutput {
    pub samples: Vec<LabeledSample>,
    /// `None` when there was nothing to fit on.
    pub thresholds: Option<ThresholdSet>,
    pub missing: Vec<PathBuf>,
}

/// Analyzes a dataset, fits thresholds on its dry frames and labels every
/// frame.
pub fn extract(root: &Path, presets: &WeatherPresets, cfg: &ExtractConfig) -> Result<ExtractOutput> {
    let manifest = DatasetManifest::load(root)?;
    let analysis = analyze_dataset(root, &manifest, &Sensor::ALL, presets, &cfg.chain, false)?;
    if analysis.frames.is_empty() {
        return Ok(ExtractOutput {
            samples: Vec::new(),
            thresholds: None,
            missing: analysis.missing,
        });
    }
    let thresholds = ThresholdSet::fit(&analysis.frames, cfg)?;
    let samples = label_frames(&analysis.frames, &thresholds)?;
    Ok(ExtractOutput {
        samples,
        thresholds: Some(thresholds),
        missing: analysis.missing,
    })
}

pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const THRESHOLDS_FILE: &str = "thresholds.json";

/// Writes `features.csv`, `labels.csv` and, when fitted, `thresholds.json`.
pub fn write_extract(dir: &Path, out: &ExtractOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let open = |name: &str| -> Result<BufWriter<File>> {
        let p = dir.join(name);
        File::create(&p).map(BufWriter::new).map_err(|e| Error::io(p, e))
    };
    write_samples(&out.samples, open(FEATURES_FILE)?, open(LABELS_FILE)?)?;
    if let Some(t) = &out.thresholds {
        let p = dir.join(THRESHOLDS_FILE);
        std::fs::write(&p, serde_json::to_string_pretty(t)?).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}
