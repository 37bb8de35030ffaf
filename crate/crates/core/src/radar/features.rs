use serde::{Deserialize, Serialize};

use super::{RDCluster, RangeDopplerMap};
use crate::stats::{mean_std, neighbor_counts};
use crate::types::{distance_bin, Detection, NUM_DISTANCE_BINS};

/// Radar degradation features of one 2 m distance bin.
///
/// `total_cluster_cells`, `nearest_cluster_size` and `rain_extent_estimate`
/// describe the whole frame and are repeated in every bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarFeatureVector {
    pub distance_bin: usize,
    /// False when the bin holds no detection; all statistics are then 0.
    pub valid: bool,
    /// m/s
    pub velocity_std: f64,
    /// Neighbours within a 1 m sphere.
    pub density_mean: f64,
    pub density_std: f64,
    /// dB
    pub intensity_mean: f64,
    pub intensity_std: f64,
    pub total_cluster_cells: usize,
    pub nearest_cluster_size: usize,
    /// m
    pub rain_extent_estimate: f64,
    pub detection_count: usize,
}

impl RadarFeatureVector {
    pub const NAMES: [&'static str; 9] = [
        "density_mean",
        "density_std",
        "detection_count",
        "intensity_mean",
        "intensity_std",
        "nearest_cluster_size",
        "rain_extent_estimate",
        "total_cluster_cells",
        "velocity_std",
    ];

    /// Values in [`RadarFeatureVector::NAMES`] order.
    pub fn values(&self) -> Vec<Option<f64>> {
        vec![
            Some(self.density_mean),
            Some(self.density_std),
            Some(self.detection_count as f64),
            Some(self.intensity_mean),
            Some(self.intensity_std),
            Some(self.nearest_cluster_size as f64),
            Some(self.rain_extent_estimate),
            Some(self.total_cluster_cells as f64),
            Some(self.velocity_std),
        ]
    }

    fn empty(bin: usize) -> Self {
        Self {
            distance_bin: bin,
            valid: false,
            velocity_std: 0.0,
            density_mean: 0.0,
            density_std: 0.0,
            intensity_mean: 0.0,
            intensity_std: 0.0,
            total_cluster_cells: 0,
            nearest_cluster_size: 0,
            rain_extent_estimate: 0.0,
            detection_count: 0,
        }
    }
}

/// Velocity bins of the nearest cluster moving faster than twice the
/// Doppler resolution, ascending.
pub fn disturbed_velocity_bins(nearest: Option<&RDCluster>, map: &RangeDopplerMap) -> Vec<usize> {
    let v_cut = 2.0 * map.velocity_resolution();
    let mut bins: Vec<usize> = nearest
        .map(|c| {
            c.cell_indices
                .iter()
                .map(|cell| cell.1)
                .filter(|&v| map.velocity_axis[v].abs() > v_cut)
                .collect()
        })
        .unwrap_or_default();
    bins.sort_unstable();
    bins.dedup();
    bins
}

/// Largest range among flagged cells whose velocity bin is one of the
/// nearest cluster's disturbed bins; 0 when there is none.
///
/// OS-CFAR thins dense rain into islands, so the cluster itself rarely
/// reaches the far edge of the rain; its velocity bins do.
pub fn rain_extent(nearest: Option<&RDCluster>, flagged: &[(usize, usize)], map: &RangeDopplerMap) -> f64 {
    let bins = disturbed_velocity_bins(nearest, map);
    flagged
        .iter()
        .filter(|cell| bins.binary_search(&cell.1).is_ok())
        .map(|cell| map.range_axis[cell.0])
        .fold(0.0, f64::max)
}

/// One feature vector per 2 m bin over `[0, 20)` m.
/// `flagged` holds the CFAR cells; `detections` may be any point list.
pub fn radar_features(
    detections: &[Detection],
    flagged: &[(usize, usize)],
    map: &RangeDopplerMap,
    clusters: &[RDCluster],
) -> Vec<RadarFeatureVector> {
    let total_cells: usize = clusters.iter().map(|c| c.size).sum();
    let nearest_size = clusters.first().map_or(0, |c| c.size);
    let extent = rain_extent(clusters.first(), flagged, map);
    let positions: Vec<[f64; 3]> = detections.iter().map(|d| d.position).collect();
    let density = neighbor_counts(&positions, 1.0);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); NUM_DISTANCE_BINS];
    for (i, d) in detections.iter().enumerate() {
        if let Some(b) = distance_bin(d.range) {
            members[b].push(i);
        }
    }

    members
        .iter()
        .enumerate()
        .map(|(bin, idx)| {
            if idx.is_empty() {
                return RadarFeatureVector::empty(bin);
            }
            let (_, velocity_std) = mean_std(idx.iter().map(|&i| detections[i].radial_velocity));
            let (density_mean, density_std) = mean_std(idx.iter().map(|&i| density[i] as f64));
            let (intensity_mean, intensity_std) = mean_std(idx.iter().map(|&i| detections[i].power));
            RadarFeatureVector {
                distance_bin: bin,
                valid: true,
                velocity_std,
                density_mean,
                density_std,
                intensity_mean,
                intensity_std,
                total_cluster_cells: total_cells,
                nearest_cluster_size: nearest_size,
                rain_extent_estimate: extent,
                detection_count: idx.len(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radar::cluster_range_doppler;

    #[test]
    fn single_detection_bin() {
        let map = RangeDopplerMap::from_cells(256, 128, vec![0.0; 256 * 128], 0.1, 0.25).unwrap();
        let d = [Detection::from_polar(5.0, 1.0, 0.0, 20.0)];
        let f = radar_features(&d, &[], &map, &[]);
        assert_eq!(f.len(), NUM_DISTANCE_BINS);
        assert!(f[2].valid);
        assert_eq!(f[2].velocity_std, 0.0);
        assert_eq!(f[2].density_mean, 0.0);
        assert_eq!(f[2].detection_count, 1);
        assert!(!f[0].valid);
        assert_eq!(f[0].detection_count, 0);
    }

    #[test]
    fn rain_extent_follows_disturbed_velocity_bins() {
        let map = RangeDopplerMap::from_cells(64, 32, vec![0.0; 64 * 32], 0.1, 0.25).unwrap();
        // Zero velocity is bin 16; bins 19 and 20 move faster than 0.5 m/s.
        let mut cells = vec![(2, 16), (3, 16), (4, 17), (5, 19), (6, 20)];
        let clusters = cluster_range_doppler(&cells, &map);
        assert_eq!(clusters.len(), 1);
        assert_eq!(disturbed_velocity_bins(clusters.first(), &map), vec![19, 20]);
        assert!((rain_extent(clusters.first(), &cells, &map) - 0.6).abs() < 1e-12);
        // A detached island in a disturbed bin extends the estimate, one in
        // a clear bin does not.
        cells.extend([(40, 20), (50, 25)]);
        let clusters = cluster_range_doppler(&cells, &map);
        assert!((rain_extent(clusters.first(), &cells, &map) - 4.0).abs() < 1e-12);
        let d = [Detection::from_polar(0.5, 1.0, 0.0, 20.0)];
        let f = radar_features(&d, &cells, &map, &clusters);
        assert!((f[0].rain_extent_estimate - 4.0).abs() < 1e-12);
        assert_eq!(f[0].nearest_cluster_size, 5);
        assert_eq!(rain_extent(None, &cells, &map), 0.0);
    }
}
