//! Radar disturbance maps: which velocity bins and which ROI cells are
//! occupied by rain, derived from the nearest range-Doppler cluster.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::write_file;
use crate::error::{Error, Result};
use crate::radar::{disturbed_velocity_bins, rain_extent, RDCluster, RadarFrameResult, RangeDopplerMap};
use crate::types::{Detection, Roi};

/// Spatial cell edge, m.
pub const CELL_SIZE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceGridMap {
    pub roi: Roi,
    pub cell_size: f64,
    /// Cells along x.
    pub nx: usize,
    /// Cells along y.
    pub ny: usize,
    /// `nx * ny` flags, index `ix * ny + iy`.
    pub spatial: Vec<bool>,
    /// m/s, one entry per Doppler bin.
    pub velocity_axis: Vec<f64>,
    pub velocity: Vec<bool>,
    pub source_frame: usize,
}

impl DisturbanceGridMap {
    pub fn clear(roi: &Roi, velocity_axis: Vec<f64>, source_frame: usize) -> Self {
        let nx = ((roi.x_max - roi.x_min) / CELL_SIZE).round() as usize;
        let ny = ((roi.y_max - roi.y_min) / CELL_SIZE).round() as usize;
        Self {
            roi: *roi,
            cell_size: CELL_SIZE,
            nx,
            ny,
            spatial: vec![false; nx * ny],
            velocity: vec![false; velocity_axis.len()],
            velocity_axis,
            source_frame,
        }
    }

    /// Cell holding a point, `None` outside the ROI.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !self.roi.contains_xy(x, y) {
            return None;
        }
        let ix = (((x - self.roi.x_min) / self.cell_size) as usize).min(self.nx - 1);
        let iy = (((y - self.roi.y_min) / self.cell_size) as usize).min(self.ny - 1);
        Some((ix, iy))
    }

    pub fn is_disturbed(&self, ix: usize, iy: usize) -> bool {
        self.spatial[ix * self.ny + iy]
    }

    pub fn is_all_clear(&self) -> bool {
        !self.spatial.iter().any(|&c| c) && !self.velocity.iter().any(|&c| c)
    }

    pub fn disturbed_cells(&self) -> Vec<(usize, usize)> {
        (0..self.nx)
            .flat_map(|ix| (0..self.ny).map(move |iy| (ix, iy)))
            .filter(|&(ix, iy)| self.is_disturbed(ix, iy))
            .collect()
    }

    pub fn disturbed_bins(&self) -> Vec<usize> {
        self.velocity.iter().enumerate().filter(|(_, &d)| d).map(|(i, _)| i).collect()
    }

    /// Far x edge of the farthest disturbed cell, m; 0 when clear.
    pub fn disturbed_extent(&self) -> f64 {
        self.disturbed_cells()
            .iter()
            .map(|&(ix, _)| self.roi.x_min + (ix + 1) as f64 * self.cell_size)
            .fold(0.0, f64::max)
    }

    /// Spread between the fastest approaching and receding disturbed bins, m/s.
    pub fn velocity_span(&self) -> f64 {
        let bins = self.disturbed_bins();
        match (bins.first(), bins.last()) {
            (Some(&lo), Some(&hi)) => self.velocity_axis[hi] - self.velocity_axis[lo],
            _ => 0.0,
        }
    }

    /// Spatial map as PGM: one column per x cell (near to far), one row per
    /// y cell (+y at the top); 0 clear, 255 disturbed.
    pub fn spatial_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.nx, self.ny).into_bytes();
        for iy in (0..self.ny).rev() {
            for ix in 0..self.nx {
                out.push(if self.is_disturbed(ix, iy) { 255 } else { 0 });
            }
        }
        out
    }

    /// Velocity map as a one-row PGM over the Doppler axis.
    pub fn velocity_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} 1\n255\n", self.velocity.len()).into_bytes();
        out.extend(self.velocity.iter().map(|&d| if d { 255u8 } else { 0 }));
        out
    }

    /// Writes `<stem>_spatial.pgm`, `<stem>_velocity.pgm` and `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        write_file(&dir.join(format!("{stem}_spatial.pgm")), &self.spatial_pgm())?;
        write_file(&dir.join(format!("{stem}_velocity.pgm")), &self.velocity_pgm())?;
        let meta = GridMapFile {
            disturbed_bins: self.disturbed_bins(),
            map: self.clone(),
        };
        write_file(&dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&meta)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let f: GridMapFile = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        let m = f.map;
        if m.spatial.len() != m.nx * m.ny || m.velocity.len() != m.velocity_axis.len() {
            return Err(Error::format(path, "grid dimensions disagree with data"));
        }
        Ok(m)
    }
}

#[derive(Serialize, Deserialize)]
struct GridMapFile {
    disturbed_bins: Vec<usize>,
    #[serde(flatten)]
    map: DisturbanceGridMap,
}

/// Builds both maps. Velocity bins of the nearest cluster faster than
/// `2 v_res` are disturbed; every detection in one of those bins marks its
/// ROI cell. Vehicle returns fall in other bins and stay clear. A bin whose
/// detections all lie outside the ROI is cleared again so the two maps
/// agree on whether anything is disturbed.
///
/// `flagged[i]` must be the range-Doppler cell of `detections[i]`.
pub fn build_grid_maps(
    nearest: Option<&RDCluster>,
    flagged: &[(usize, usize)],
    detections: &[Detection],
    map: &RangeDopplerMap,
    roi: &Roi,
    source_frame: usize,
) -> Result<DisturbanceGridMap> {
    if flagged.len() != detections.len() {
        return Err(Error::Dimension {
            expected: flagged.len(),
            actual: detections.len(),
        });
    }
    let mut g = DisturbanceGridMap::clear(roi, map.velocity_axis.clone(), source_frame);
    let bins = disturbed_velocity_bins(nearest, map);
    for (cell, det) in flagged.iter().zip(detections) {
        if bins.binary_search(&cell.1).is_err() {
            continue;
        }
        if let Some((ix, iy)) = g.cell_of(det.position[0], det.position[1]) {
            g.spatial[ix * g.ny + iy] = true;
            g.velocity[cell.1] = true;
        }
    }
    Ok(g)
}

/// Grid maps of a processed radar frame.
pub fn frame_grid_maps(result: &RadarFrameResult, roi: &Roi, source_frame: usize) -> DisturbanceGridMap {
    build_grid_maps(
        result.nearest_cluster(),
        &result.flagged,
        &result.detections,
        &result.map,
        roi,
        source_frame,
    )
    .expect("one detection per flagged cell")
}

/// True when a tracked object can no longer be told apart from the rain by
/// velocity: its Doppler bin lies within the span of the nearest cluster's
/// disturbed bins and its range between the cluster's near edge and the
/// rain extent (both inclusive, at bin resolution).
pub fn cluster_shape_flag(
    nearest: Option<&RDCluster>,
    flagged: &[(usize, usize)],
    map: &RangeDopplerMap,
    tracked_velocity: f64,
    tracked_range: f64,
) -> bool {
    let Some(c) = nearest else {
        return false;
    };
    let bins = disturbed_velocity_bins(Some(c), map);
    let (Some(&lo), Some(&hi)) = (bins.first(), bins.last()) else {
        return false;
    };
    let v_res = map.velocity_resolution();
    let r_res = map.range_resolution();
    let b = (tracked_velocity / v_res).round() + map.zero_velocity_bin() as f64;
    let rb = (tracked_range / r_res).round() * r_res;
    let far = c.max_range.max(rain_extent(Some(c), flagged, map));
    b >= lo as f64 && b <= hi as f64 && rb >= c.min_range - 1e-9 && rb <= far + 1e-9
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radar::cluster_range_doppler;

    fn map() -> RangeDopplerMap {
        RangeDopplerMap::from_cells(256, 128, vec![0.0; 256 * 128], 0.1, 0.25).unwrap()
    }

    fn det(range: f64, v: f64) -> Detection {
        Detection::from_polar(range, v, 0.0, 10.0)
    }

    #[test]
    fn static_cluster_gives_clear_maps() {
        let m = map();
        let flagged = vec![(2, 64), (3, 64), (4, 65)];
        let dets: Vec<Detection> = flagged.iter().map(|c| det(m.range_axis[c.0], m.velocity_axis[c.1])).collect();
        let clusters = cluster_range_doppler(&flagged, &m);
        let g = build_grid_maps(clusters.first(), &flagged, &dets, &m, &Roi::default(), 0).unwrap();
        assert!(g.is_all_clear());
        assert_eq!((g.nx, g.ny), (40, 8));
        assert_eq!(g.disturbed_extent(), 0.0);
    }

    #[test]
    fn rain_bins_mark_space_and_vehicle_stays_clear() {
        let m = map();
        // Near-range rain attached to the static column, a detached rain
        // island at 4.6 m in a disturbed bin, a vehicle at 10 m and -5 m/s.
        let flagged = vec![(1, 64), (2, 66), (3, 67), (46, 67), (100, 44)];
        let dets: Vec<Detection> = flagged.iter().map(|c| det(m.range_axis[c.0], m.velocity_axis[c.1])).collect();
        let clusters = cluster_range_doppler(&flagged, &m);
        let g = build_grid_maps(clusters.first(), &flagged, &dets, &m, &Roi::default(), 3).unwrap();
        assert_eq!(g.disturbed_bins(), vec![67]);
        assert_eq!(g.disturbed_extent(), 5.0);
        let (vx, vy) = g.cell_of(10.0, 0.0).unwrap();
        assert!(!g.is_disturbed(vx, vy));
        assert_eq!(g.source_frame, 3);
    }

    #[test]
    fn out_of_roi_detections_clear_their_bin() {
        let m = map();
        let flagged = vec![(1, 64), (3, 67)];
        let dets = vec![det(0.1, 0.0), Detection::from_polar(0.3, 0.75, 1.5, 10.0)];
        let clusters = cluster_range_doppler(&flagged, &m);
        let g = build_grid_maps(clusters.first(), &flagged, &dets, &m, &Roi::default(), 0).unwrap();
        assert!(g.is_all_clear());
    }

    #[test]
    fn shape_flag_needs_velocity_and_range_overlap() {
        let m = map();
        let flagged = vec![(5, 64), (6, 62), (7, 60), (6, 66), (7, 68)];
        let clusters = cluster_range_doppler(&flagged, &m);
        let c = clusters.first();
        assert!(!cluster_shape_flag(c, &flagged, &m, -5.0, 0.7));
        assert!(cluster_shape_flag(c, &flagged, &m, -0.5, 0.7));
        assert!(!cluster_shape_flag(c, &flagged, &m, -0.5, 3.0));
        assert!(!cluster_shape_flag(None, &flagged, &m, 0.0, 0.5));
        // A rain island in a disturbed bin stretches the range span.
        let mut more = flagged.clone();
        more.push((30, 68));
        assert!(cluster_shape_flag(c, &more, &m, -0.5, 3.0));
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let m = map();
        let flagged = vec![(1, 64), (2, 66), (3, 67)];
        let dets: Vec<Detection> = flagged.iter().map(|c| det(m.range_axis[c.0], m.velocity_axis[c.1])).collect();
        let clusters = cluster_range_doppler(&flagged, &m);
        let g = build_grid_maps(clusters.first(), &flagged, &dets, &m, &Roi::default(), 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        g.save(dir.path(), "f9").unwrap();
        assert_eq!(DisturbanceGridMap::load(&dir.path().join("f9.json")).unwrap(), g);
        let pgm = std::fs::read(dir.path().join("f9_spatial.pgm")).unwrap();
        assert!(pgm.starts_with(b"P5\n40 8\n255\n"));
    }
}
