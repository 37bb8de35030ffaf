use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::burg::azimuth_grid;
use super::rd::range_doppler;
use super::{
    burg_coefficients, cluster_range_doppler, os_cfar, radar_features, CfarConfig, RDCluster, RadarDataCube,
    RadarFeatureVector, RangeDopplerMap, Window,
};
use crate::error::{Error, Result};
use crate::types::{Detection, RadarConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    pub window: Window,
    pub cfar: CfarConfig,
    pub burg_order: usize,
    /// Azimuth grid step, degrees.
    pub azimuth_step_deg: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            window: Window::Hann,
            cfar: CfarConfig::default(),
            burg_order: 6,
            azimuth_step_deg: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RadarFrameResult {
    pub map: RangeDopplerMap,
    /// CFAR cells, row-major order; `detections[i]` belongs to `flagged[i]`.
    pub flagged: Vec<(usize, usize)>,
    pub detections: Vec<Detection>,
    /// Sorted by minimum range; the first is the nearest cluster.
    pub clusters: Vec<RDCluster>,
    pub features: Vec<RadarFeatureVector>,
}

impl RadarFrameResult {
    pub fn nearest_cluster(&self) -> Option<&RDCluster> {
        self.clusters.first()
    }
}

/// Precomputed `exp(-j 2 pi d i sin(theta))` for `i = 1..=order`.
struct SteeringTable {
    angles: Vec<f64>,
    order: usize,
    phasors: Vec<Complex64>,
}

impl SteeringTable {
    fn new(step_deg: f64, order: usize, spacing: f64) -> Self {
        let angles = azimuth_grid(step_deg);
        let mut phasors = Vec::with_capacity(angles.len() * order);
        for t in &angles {
            let w = 2.0 * std::f64::consts::PI * spacing * t.sin();
            for i in 1..=order {
                phasors.push(Complex64::from_polar(1.0, -w * i as f64));
            }
        }
        Self { angles, order, phasors }
    }

    /// Azimuth of the AR spectrum maximum (smallest denominator; first on ties).
    fn peak(&self, ar: &[Complex64]) -> f64 {
        let mut best = (0, f64::INFINITY);
        for (g, row) in self.phasors.chunks_exact(self.order).enumerate() {
            let mut den = Complex64::new(1.0, 0.0);
            for (a, p) in ar.iter().zip(row) {
                den += a * p;
            }
            let d = den.norm_sqr();
            if d < best.1 {
                best = (g, d);
            }
        }
        self.angles[best.0]
    }
}

/// Full radar chain for one frame: 2D FFT, OS-CFAR, one Burg azimuth per
/// flagged cell, range-Doppler clustering and per-bin features.
pub fn process_cube(cube: &RadarDataCube, cfg: &RadarConfig, chain: &ChainConfig) -> Result<RadarFrameResult> {
    if chain.burg_order < 1 || chain.burg_order >= cube.num_channels {
        return Err(Error::domain(format!(
            "burg_order must be in 1..{}, got {}",
            cube.num_channels, chain.burg_order
        )));
    }
    if !(chain.azimuth_step_deg > 0.0 && chain.azimuth_step_deg <= 90.0) {
        return Err(Error::domain("azimuth_step_deg must be in (0, 90]"));
    }
    let rd = range_doppler(cube, cfg, chain.window)?;
    let flagged = os_cfar(&rd.map, &chain.cfar)?;
    let table = SteeringTable::new(chain.azimuth_step_deg, chain.burg_order, cfg.element_spacing);

    let mut detections = Vec::with_capacity(flagged.len());
    for &(r, v) in &flagged {
        let model = burg_coefficients(rd.spectra.snapshot(r, v), chain.burg_order)?;
        let azimuth = table.peak(&model.ar);
        let power_db = 10.0 * rd.map.get(r, v).max(f64::MIN_POSITIVE).log10();
        detections.push(Detection::from_polar(
            rd.map.range_axis[r],
            rd.map.velocity_axis[v],
            azimuth,
            power_db,
        ));
    }
    let clusters = cluster_range_doppler(&flagged, &rd.map);
    let features = radar_features(&detections, &flagged, &rd.map, &clusters);
    Ok(RadarFrameResult {
        map: rd.map,
        flagged,
        detections,
        clusters,
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_order_is_rejected() {
        let cfg = RadarConfig::default();
        let cube = RadarDataCube::zeros(8, 4, 2);
        let chain = ChainConfig {
            burg_order: 16,
            ..ChainConfig::default()
        };
        assert!(process_cube(&cube, &cfg, &chain).is_err());
    }

    #[test]
    fn steering_peak_matches_spectrum_argmax() {
        let table = SteeringTable::new(0.5, 2, 0.5);
        let w = std::f64::consts::PI * 30f64.to_radians().sin();
        let ar = [Complex64::from_polar(-0.95, w), Complex64::new(0.0, 0.0)];
        assert!((table.peak(&ar).to_degrees() - 30.0).abs() <= 0.5);
    }
}
