//! Good / moderate / poor training targets from ground-truth-aware
//! measurements.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::CameraFeatureVector;
use crate::error::{Error, Result};
use crate::lidar::{Dispersion, LidarFeatureVector};
use crate::radar::RadarFeatureVector;
use crate::stats::percentile;
use crate::types::{
    distance_bin, BoundingBox3D, Detection, Grade, PerformanceLabel, Sensor, GRADE_CUT_HIGH, GRADE_CUT_LOW,
    NUM_DISTANCE_BINS,
};

/// Per-bin minimum measurements for `Good` and `Moderate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelThresholds {
    pub good_min: Vec<f64>,
    pub moderate_min: Vec<f64>,
}

impl LabelThresholds {
    pub fn new(good_min: Vec<f64>, moderate_min: Vec<f64>) -> Result<Self> {
        let t = Self { good_min, moderate_min };
        t.validate()?;
        Ok(t)
    }

    /// Both curves must cover every distance bin, be non-increasing with
    /// distance, and satisfy `0 <= moderate_min <= good_min`.
    pub fn validate(&self) -> Result<()> {
        for c in [&self.good_min, &self.moderate_min] {
            if c.len() != NUM_DISTANCE_BINS {
                return Err(Error::Dimension {
                    expected: NUM_DISTANCE_BINS,
                    actual: c.len(),
                });
            }
            if c.windows(2).any(|w| w[1] > w[0]) {
                return Err(Error::domain("threshold curves must not increase with distance"));
            }
        }
        for (g, m) in self.good_min.iter().zip(&self.moderate_min) {
            if !(*m >= 0.0 && m <= g && g.is_finite()) {
                return Err(Error::domain(format!("need 0 <= moderate_min ({m}) <= good_min ({g})")));
            }
        }
        Ok(())
    }

    /// Fits `good_min` as the `q`-th percentile (0..=100) of reference measurements
    /// per bin and `moderate_min = ratio * good_min`.
    ///
    /// Bins without samples copy the nearest populated bin. The curve is
    /// then made non-increasing by a running minimum from near to far, and
    /// `good_min` is raised to `floor` where it falls below it.
    pub fn fit(samples: &[(usize, f64)], q: f64, ratio: f64, floor: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::domain("moderate ratio must lie in [0, 1]"));
        }
        let mut per_bin: Vec<Vec<f64>> = vec![Vec::new(); NUM_DISTANCE_BINS];
        for &(b, v) in samples {
            if b >= NUM_DISTANCE_BINS {
                return Err(Error::domain(format!("distance bin {b} out of range")));
            }
            if !v.is_finite() {
                return Err(Error::domain("threshold samples must be finite"));
            }
            per_bin[b].push(v);
        }
        let fitted: Vec<Option<f64>> = per_bin.iter().map(|v| percentile(v, q)).collect();
        if fitted.iter().all(Option::is_none) {
            return Err(Error::domain("no samples to fit thresholds"));
        }
        let mut good = Vec::with_capacity(NUM_DISTANCE_BINS);
        for b in 0..NUM_DISTANCE_BINS {
            let v = (0..NUM_DISTANCE_BINS)
                .flat_map(|d| [b.checked_sub(d), Some(b + d)])
                .flatten()
                .find_map(|i| fitted.get(i).copied().flatten())
                .unwrap();
            good.push(v);
        }
        for b in 1..NUM_DISTANCE_BINS {
            good[b] = good[b].min(good[b - 1]);
        }
        for g in &mut good {
            *g = g.max(floor);
        }
        let moderate = good.iter().map(|g| ratio * g).collect();
        Self::new(good, moderate)
    }

    fn at(&self, bin: usize) -> (f64, f64) {
        let b = bin.min(NUM_DISTANCE_BINS - 1);
        (self.good_min[b], self.moderate_min[b])
    }
}

/// Camera thresholds on `confidence * iou`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraThresholds {
    pub good_min: f64,
    pub moderate_min: f64,
}

impl Default for CameraThresholds {
    fn default() -> Self {
        Self {
            good_min: 0.6,
            moderate_min: 0.3,
        }
    }
}

/// Label of a measurement where larger is better.
///
/// The grade comes from the thresholds; the score maps `[0, moderate)`,
/// `[moderate, good)` and `[good, 2 good]` piecewise-linearly onto the three
/// grade intervals of `[0, 1]`, so `grade_from_score(score)` agrees with the
/// grade.
fn threshold_label(value: f64, good: f64, moderate: f64) -> PerformanceLabel {
    let lerp = |v: f64, lo: f64, hi: f64, s0: f64, s1: f64| {
        if hi > lo {
            s0 + (s1 - s0) * ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            s0
        }
    };
    let (grade, score) = if value >= good {
        (Grade::Good, lerp(value, good, 2.0 * good, GRADE_CUT_HIGH, 1.0))
    } else if value >= moderate {
        let s = lerp(value, moderate, good, GRADE_CUT_LOW, GRADE_CUT_HIGH);
        (Grade::Moderate, s.min(prev_float(GRADE_CUT_HIGH)))
    } else {
        let s = lerp(value, 0.0, moderate, 0.0, GRADE_CUT_LOW);
        (Grade::Poor, s.min(prev_float(GRADE_CUT_LOW)))
    };
    PerformanceLabel { grade, score }
}

fn prev_float(x: f64) -> f64 {
    f64::from_bits(x.to_bits() - 1)
}

/// Label from the number of radar detections attributed to the vehicle at
/// `distance` m. Distances past the last bin use the last bin.
pub fn label_radar(count: i64, distance: f64, thresholds: &LabelThresholds) -> Result<PerformanceLabel> {
    if count < 0 {
        return Err(Error::domain(format!("negative detection count {count}")));
    }
    if !(distance >= 0.0) {
        return Err(Error::domain(format!("invalid distance {distance}")));
    }
    let bin = distance_bin(distance).unwrap_or(NUM_DISTANCE_BINS - 1);
    let (g, m) = thresholds.at(bin);
    Ok(threshold_label(count as f64, g, m))
}

/// Label from the dispersion inside the vehicle box. An empty box is `Poor`.
pub fn label_lidar(dispersion: Dispersion, bin: usize, thresholds: &LabelThresholds) -> Result<PerformanceLabel> {
    if bin >= NUM_DISTANCE_BINS {
        return Err(Error::domain(format!("distance bin {bin} out of range")));
    }
    match dispersion {
        Dispersion::EmptyBox => Ok(PerformanceLabel {
            grade: Grade::Poor,
            score: 0.0,
        }),
        Dispersion::Value(v) if v >= 0.0 && v.is_finite() => {
            let (g, m) = thresholds.at(bin);
            Ok(threshold_label(v, g, m))
        }
        Dispersion::Value(v) => Err(Error::domain(format!("invalid dispersion {v}"))),
    }
}

/// Label from detector confidence and IOU via their product.
pub fn label_camera(confidence: f64, iou: f64, thresholds: &CameraThresholds) -> Result<PerformanceLabel> {
    for (name, v) in [("confidence", confidence), ("iou", iou)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(format!("{name} {v} outside [0, 1]")));
        }
    }
    Ok(threshold_label(confidence * iou, thresholds.good_min, thresholds.moderate_min))
}

/// Radar detections attributed to a vehicle: inside its footprint grown by
/// `margin` m on every side and within `velocity_tol` m/s of its radial
/// velocity.
pub fn vehicle_detection_count(
    detections: &[Detection],
    vehicle: &BoundingBox3D,
    radial_velocity: f64,
    margin: f64,
    velocity_tol: f64,
) -> usize {
    let grown = BoundingBox3D {
        center: vehicle.center,
        extents: [
            vehicle.extents[0] + 2.0 * margin,
            vehicle.extents[1] + 2.0 * margin,
            f64::INFINITY,
        ],
        yaw: vehicle.yaw,
    };
    detections
        .iter()
        .filter(|d| grown.contains(d.position) && (d.radial_velocity - radial_velocity).abs() <= velocity_tol)
        .count()
}

/// Tree input names of a sensor, sorted.
pub fn feature_names(sensor: Sensor) -> &'static [&'static str] {
    match sensor {
        Sensor::Radar => &RadarFeatureVector::NAMES,
        Sensor::Lidar => &LidarFeatureVector::NAMES,
        Sensor::Camera => &CameraFeatureVector::NAMES,
    }
}

/// One training or evaluation sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub sensor: Sensor,
    pub condition: String,
    pub frame: usize,
    /// `None` for the camera.
    pub distance_bin: Option<usize>,
    /// Raw features in [`feature_names`] order; `None` where undefined.
    pub features: Vec<Option<f64>>,
    pub label: PerformanceLabel,
    /// Raw measurement the label was derived from; `None` for an empty box.
    pub measurement: Option<f64>,
}

impl LabeledSample {
    pub fn validate(&self) -> Result<()> {
        let n = feature_names(self.sensor).len();
        if self.features.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: self.features.len(),
            });
        }
        if self.features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::domain("features must be finite"));
        }
        if (self.sensor == Sensor::Camera) != self.distance_bin.is_none() {
            return Err(Error::domain("distance bin is required for radar and lidar only"));
        }
        Ok(())
    }
}

/// Column order of `features.csv`: the union of all tree inputs, each name
/// once.
pub fn feature_columns() -> Vec<&'static str> {
    let mut cols: Vec<&'static str> = Vec::new();
    for s in Sensor::ALL {
        for n in feature_names(s) {
            if !cols.contains(n) {
                cols.push(n);
            }
        }
    }
    cols
}

const KEY: [&str; 4] = ["sensor", "condition", "frame", "bin"];
const LABEL_COLS: [&str; 3] = ["label", "score", "measurement"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn key_fields(s: &LabeledSample) -> [String; 4] {
    [
        s.sensor.as_str().to_string(),
        s.condition.clone(),
        s.frame.to_string(),
        s.distance_bin.map(|b| b.to_string()).unwrap_or_default(),
    ]
}

/// Writes `features.csv` and `labels.csv` content. Empty cells mark
/// undefined values; floats use shortest round-trip formatting.
pub fn write_samples(samples: &[LabeledSample], features: impl Write, labels: impl Write) -> Result<()> {
    let cols = feature_columns();
    let mut fw = csv::Writer::from_writer(features);
    let mut lw = csv::Writer::from_writer(labels);
    fw.write_record(KEY.iter().chain(cols.iter())).map_err(csv_err)?;
    lw.write_record(KEY.iter().chain(LABEL_COLS.iter())).map_err(csv_err)?;
    for s in samples {
        s.validate()?;
        let names = feature_names(s.sensor);
        let mut row: Vec<String> = key_fields(s).to_vec();
        row.extend(cols.iter().map(|c| match names.iter().position(|n| n == c) {
            Some(i) => opt(s.features[i]),
            None => String::new(),
        }));
        fw.write_record(&row).map_err(csv_err)?;
        let mut row: Vec<String> = key_fields(s).to_vec();
        row.extend([s.label.grade.as_str().to_string(), s.label.score.to_string(), opt(s.measurement)]);
        lw.write_record(&row).map_err(csv_err)?;
    }
    fw.flush().map_err(|e| Error::domain(e.to_string()))?;
    lw.flush().map_err(|e| Error::domain(e.to_string()))?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::domain(format!("csv: {e}"))
}

fn parse_opt(s: &str, origin: &Path) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::format(origin, format!("not a number: '{s}'")))
}

fn parse_usize(s: &str, origin: &Path) -> Result<usize> {
    s.parse().map_err(|_| Error::format(origin, format!("not a count: '{s}'")))
}

/// Reads back what [`write_samples`] wrote. Rows are matched by position
/// and must agree on their key columns.
pub fn read_samples(features: impl Read, labels: impl Read, origin: &Path) -> Result<Vec<LabeledSample>> {
    let bad = |e: csv::Error| Error::format(origin, e.to_string());
    let mut fr = csv::Reader::from_reader(features);
    let mut lr = csv::Reader::from_reader(labels);
    let fh = fr.headers().map_err(bad)?.clone();
    let cols = feature_columns();
    let expected: Vec<&str> = KEY.iter().chain(cols.iter()).copied().collect();
    if fh.iter().collect::<Vec<_>>() != expected {
        return Err(Error::format(origin, "unexpected features.csv header"));
    }
    let lh = lr.headers().map_err(bad)?.clone();
    let expected: Vec<&str> = KEY.iter().chain(LABEL_COLS.iter()).copied().collect();
    if lh.iter().collect::<Vec<_>>() != expected {
        return Err(Error::format(origin, "unexpected labels.csv header"));
    }

    let mut out = Vec::new();
    let mut labels = lr.records();
    for frow in fr.records() {
        let frow = frow.map_err(bad)?;
        let lrow = labels
            .next()
            .ok_or_else(|| Error::format(origin, "labels.csv has fewer rows than features.csv"))?
            .map_err(bad)?;
        if (0..KEY.len()).any(|i| frow.get(i) != lrow.get(i)) {
            return Err(Error::format(origin, "features.csv and labels.csv rows disagree"));
        }
        let sensor = Sensor::parse(&frow[0])?;
        let bin = if frow[3].is_empty() {
            None
        } else {
            Some(parse_usize(&frow[3], origin)?)
        };
        let mut features = Vec::new();
        for n in feature_names(sensor) {
            let i = KEY.len() + cols.iter().position(|c| c == n).unwrap();
            features.push(parse_opt(&frow[i], origin)?);
        }
        let score = parse_opt(&lrow[5], origin)?.ok_or_else(|| Error::format(origin, "missing score"))?;
        let s = LabeledSample {
            sensor,
            condition: frow[1].to_string(),
            frame: parse_usize(&frow[2], origin)?,
            distance_bin: bin,
            features,
            label: PerformanceLabel {
                grade: Grade::parse(&lrow[4])?,
                score,
            },
            measurement: parse_opt(&lrow[6], origin)?,
        };
        s.validate().map_err(|e| Error::format(origin, e.to_string()))?;
        out.push(s);
    }
    if labels.next().is_some() {
        return Err(Error::format(origin, "labels.csv has more rows than features.csv"));
    }
    Ok(out)
}
