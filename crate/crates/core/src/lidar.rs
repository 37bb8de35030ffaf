//! Lidar point-cloud degradation metrics and per-bin lidar features.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mean_std, neighbor_counts, population_variance};
use crate::types::{distance_bin, norm, BoundingBox3D, Roi, NUM_DISTANCE_BINS};

/// Half-height of the band around the ground plane counted as ground, m.
pub const GROUND_BAND: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl LidarPoint {
    pub fn xyz(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn range(&self) -> f64 {
        norm(self.xyz())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<LidarPoint>,
    pub frame_index: usize,
    pub vehicle_box: Option<BoundingBox3D>,
}

impl PointCloud {
    pub fn new(points: Vec<LidarPoint>, frame_index: usize, vehicle_box: Option<BoundingBox3D>) -> Result<Self> {
        for p in &points {
            if ![p.x, p.y, p.z, p.intensity].iter().all(|v| v.is_finite()) || p.intensity < 0.0 {
                return Err(Error::domain(format!("invalid lidar point {p:?}")));
            }
        }
        Ok(Self {
            points,
            frame_index,
            vehicle_box,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// CSV with header `x,y,z,intensity`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "x,y,z,intensity")?;
        for p in &self.points {
            writeln!(w, "{},{},{},{}", p.x, p.y, p.z, p.intensity)?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl BufRead, origin: &Path, frame_index: usize) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(origin, e))?
            .ok_or_else(|| Error::format(origin, "empty file"))?;
        if header.trim() != "x,y,z,intensity" {
            return Err(Error::format(origin, format!("unexpected header '{header}'")));
        }
        let mut points = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format(origin, format!("line {}: {e}", i + 2)))?;
            if vals.len() != 4 {
                return Err(Error::format(origin, format!("line {}: expected 4 fields", i + 2)));
            }
            points.push(LidarPoint {
                x: vals[0],
                y: vals[1],
                z: vals[2],
                intensity: vals[3],
            });
        }
        Self::new(points, frame_index, None).map_err(|e| Error::format(origin, e.to_string()))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path, frame_index: usize) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f), path, frame_index)
    }
}

/// Dispersion of the points inside a box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Dispersion {
    /// No point fell inside the box.
    EmptyBox,
    /// m²
    Value(f64),
}

impl Dispersion {
    pub fn value(self) -> Option<f64> {
        match self {
            Dispersion::EmptyBox => None,
            Dispersion::Value(v) => Some(v),
        }
    }
}

/// Population variance of the distances from the box corner nearest the
/// sensor to every point inside the box.
pub fn dispersion(cloud: &PointCloud, bbox: &BoundingBox3D) -> Dispersion {
    let o = bbox.nearest_corner();
    let d: Vec<f64> = cloud
        .points
        .iter()
        .filter(|p| bbox.contains(p.xyz()))
        .map(|p| norm([p.x - o[0], p.y - o[1], p.z - o[2]]))
        .collect();
    population_variance(&d).map_or(Dispersion::EmptyBox, Dispersion::Value)
}

/// Number of points inside the box.
pub fn box_point_count(cloud: &PointCloud, bbox: &BoundingBox3D) -> usize {
    cloud.points.iter().filter(|p| bbox.contains(p.xyz())).count()
}

/// Smallest and largest distance from the sensor; `None` for an empty cloud.
pub fn min_max_distance(cloud: &PointCloud) -> Option<(f64, f64)> {
    min_max(cloud.points.iter().map(|p| p.range()))
}

fn min_max(it: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    it.fold(None, |acc, d| match acc {
        None => Some((d, d)),
        Some((lo, hi)) => Some((lo.min(d), hi.max(d))),
    })
}

pub fn is_ground(p: &LidarPoint, roi: &Roi) -> bool {
    (p.z - roi.ground_z).abs() <= GROUND_BAND
}

/// Points inside the ROI footprint lying within the ground band.
pub fn ground_count(cloud: &PointCloud, roi: &Roi) -> usize {
    cloud
        .points
        .iter()
        .filter(|p| roi.contains_xy(p.x, p.y) && is_ground(p, roi))
        .count()
}

/// Mean intensity of the points inside the ROI footprint.
pub fn mean_intensity(cloud: &PointCloud, roi: &Roi) -> Option<f64> {
    let v: Vec<f64> = cloud
        .points
        .iter()
        .filter(|p| roi.contains_xy(p.x, p.y))
        .map(|p| p.intensity)
        .collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Lidar degradation features of one 2 m range annulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarFeatureVector {
    pub distance_bin: usize,
    pub point_count: usize,
    /// Dispersion inside the vehicle box, m²; the same for every bin of a
    /// frame. `None` without a box or when the box is empty.
    pub dispersion: Option<f64>,
    pub density_mean: f64,
    pub density_std: f64,
    pub intensity_mean: f64,
    pub intensity_std: f64,
    /// m; `None` for an empty bin.
    pub min_distance: Option<f64>,
    pub max_distance: Option<f64>,
    /// Change against the previous frame, m; 0 when either is missing.
    pub delta_min_distance: f64,
    pub delta_max_distance: f64,
    pub ground_count: usize,
}

impl LidarFeatureVector {
    /// Inputs of the lidar fuzzy trees, sorted by name. Dispersion is a
    /// labeling quantity that needs the ground-truth box, so it is not one.
    pub const NAMES: [&'static str; 9] = [
        "delta_max_distance",
        "delta_min_distance",
        "density_mean",
        "density_std",
        "ground_count",
        "intensity_mean",
        "intensity_std",
        "max_distance",
        "min_distance",
    ];

    pub fn values(&self) -> Vec<Option<f64>> {
        vec![
            Some(self.delta_max_distance),
            Some(self.delta_min_distance),
            Some(self.density_mean),
            Some(self.density_std),
            Some(self.ground_count as f64),
            Some(self.intensity_mean),
            Some(self.intensity_std),
            self.max_distance,
            self.min_distance,
        ]
    }

    pub fn valid(&self) -> bool {
        self.point_count > 0
    }
}

struct BinStats {
    members: Vec<Vec<usize>>,
    ranges: Vec<f64>,
}

fn bin_members(cloud: &PointCloud, roi: &Roi) -> BinStats {
    let mut members = vec![Vec::new(); NUM_DISTANCE_BINS];
    let ranges: Vec<f64> = cloud.points.iter().map(|p| p.range()).collect();
    for (i, p) in cloud.points.iter().enumerate() {
        if !roi.contains_xy(p.x, p.y) {
            continue;
        }
        if let Some(b) = distance_bin(ranges[i]) {
            members[b].push(i);
        }
    }
    BinStats { members, ranges }
}

fn bin_extremes(cloud: &PointCloud, roi: &Roi) -> Vec<Option<(f64, f64)>> {
    let s = bin_members(cloud, roi);
    s.members
        .iter()
        .map(|m| min_max(m.iter().map(|&i| s.ranges[i])))
        .collect()
}

/// Per-bin features over the ROI points whose distance falls in each 2 m
/// annulus. Densities count neighbours within 1 m among all ROI points.
pub fn lidar_features(cloud: &PointCloud, prev: Option<&PointCloud>, roi: &Roi) -> Vec<LidarFeatureVector> {
    let stats = bin_members(cloud, roi);
    let roi_idx: Vec<usize> = (0..cloud.len())
        .filter(|&i| roi.contains_xy(cloud.points[i].x, cloud.points[i].y))
        .collect();
    let roi_pts: Vec<[f64; 3]> = roi_idx.iter().map(|&i| cloud.points[i].xyz()).collect();
    let counts = neighbor_counts(&roi_pts, 1.0);
    let mut density = vec![0usize; cloud.len()];
    for (k, &i) in roi_idx.iter().enumerate() {
        density[i] = counts[k];
    }
    let disp = cloud.vehicle_box.and_then(|b| dispersion(cloud, &b).value());
    let prev_ext = prev.map(|p| bin_extremes(p, roi));

    stats
        .members
        .iter()
        .enumerate()
        .map(|(bin, m)| {
            let (density_mean, density_std) = mean_std(m.iter().map(|&i| density[i] as f64));
            let (intensity_mean, intensity_std) = mean_std(m.iter().map(|&i| cloud.points[i].intensity));
            let ext = min_max(m.iter().map(|&i| stats.ranges[i]));
            let (dmin, dmax) = match (ext, prev_ext.as_ref().and_then(|p| p[bin])) {
                (Some(a), Some(b)) => (a.0 - b.0, a.1 - b.1),
                _ => (0.0, 0.0),
            };
            LidarFeatureVector {
                distance_bin: bin,
                point_count: m.len(),
                dispersion: disp,
                density_mean,
                density_std,
                intensity_mean,
                intensity_std,
                min_distance: ext.map(|e| e.0),
                max_distance: ext.map(|e| e.1),
                delta_min_distance: dmin,
                delta_max_distance: dmax,
                ground_count: m.iter().filter(|&&i| is_ground(&cloud.points[i], roi)).count(),
            }
        })
        .collect()
}

/// Angular cell of the occlusion grid, radians.
const OCCLUSION_CELL: f64 = 0.5 * std::f64::consts::PI / 180.0;
/// Step of the ground samples that define a bin's line-of-sight window, m.
const OCCLUSION_STEP: f64 = 0.1;

fn angular_cell(x: f64, y: f64, z: f64) -> (i64, i64) {
    let el = z.atan2(x.hypot(y));
    let az = y.atan2(x);
    ((el / OCCLUSION_CELL).floor() as i64, (az / OCCLUSION_CELL).floor() as i64)
}

/// Bins without returns whose view is blocked: at least half of the angular
/// cells looking at the bin's ground patch inside `roi` already hold a
/// return nearer than the bin. Bins with returns are never occluded.
pub fn occluded_bins(cloud: &PointCloud, roi: &Roi) -> Vec<bool> {
    let stats = bin_members(cloud, roi);
    let mut nearest: std::collections::HashMap<(i64, i64), f64> = std::collections::HashMap::new();
    for (p, &r) in cloud.points.iter().zip(&stats.ranges) {
        let e = nearest.entry(angular_cell(p.x, p.y, p.z)).or_insert(r);
        *e = e.min(r);
    }
    let z = roi.ground_z;
    (0..NUM_DISTANCE_BINS)
        .map(|b| {
            if !stats.members[b].is_empty() {
                return false;
            }
            let (lo, hi) = (b as f64 * crate::types::BIN_WIDTH, (b + 1) as f64 * crate::types::BIN_WIDTH);
            let mut cells = std::collections::HashSet::new();
            let nx = ((roi.x_max - roi.x_min) / OCCLUSION_STEP).ceil() as usize;
            let ny = ((roi.y_max - roi.y_min) / OCCLUSION_STEP).ceil() as usize;
            for i in 0..=nx {
                let x = (roi.x_min + i as f64 * OCCLUSION_STEP).min(roi.x_max);
                for j in 0..=ny {
                    let y = (roi.y_min + j as f64 * OCCLUSION_STEP).min(roi.y_max);
                    let r = norm([x, y, z]);
                    if r >= lo && r < hi && x > 0.0 {
                        cells.insert(angular_cell(x, y, z));
                    }
                }
            }
            let blocked = cells.iter().filter(|c| nearest.get(c).is_some_and(|&r| r < lo)).count();
            !cells.is_empty() && 2 * blocked >= cells.len()
        })
        .collect()
}
