//! Radar processing chain: range-Doppler map, OS-CFAR, Burg azimuth
//! estimation, range-Doppler clustering and per-bin radar features.

pub mod burg;
pub mod cfar;
pub mod chain;
pub mod cluster;
pub mod features;
pub mod rd;

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Detection, RadarConfig};

pub use burg::{azimuth_grid, burg_coefficients, burg_spectrum, burg_spectrum_with_spacing, BurgModel};
pub use cfar::{os_cfar, os_cfar_alpha, os_cfar_pfa, CfarConfig};
pub use chain::{process_cube, ChainConfig, RadarFrameResult};
pub use cluster::{cluster_range_doppler, RDCluster};
pub use features::{disturbed_velocity_bins, radar_features, rain_extent, RadarFeatureVector};
pub use rd::{range_doppler, range_doppler_map, ChannelSpectra, RangeDopplerMap, RangeDopplerProcessing, Window};

/// Complex baseband samples of one frame.
///
/// Logical dimensions are `[fast_time × chirps × channels]`; storage is
/// channel-major, then chirp, with fast-time samples contiguous:
/// `index = (channel * num_chirps + chirp) * num_samples + sample`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarDataCube {
    pub num_samples: usize,
    pub num_chirps: usize,
    pub num_channels: usize,
    pub data: Vec<Complex32>,
}

const CUBE_MAGIC: &[u8; 8] = b"WSRDCUBE";
const CUBE_VERSION: u32 = 1;
const DTYPE_COMPLEX64: u32 = 1;
/// Size of the binary cube header in bytes.
pub const CUBE_HEADER_LEN: usize = 32;

impl RadarDataCube {
    pub fn zeros(num_samples: usize, num_chirps: usize, num_channels: usize) -> Self {
        Self {
            num_samples,
            num_chirps,
            num_channels,
            data: vec![Complex32::new(0.0, 0.0); num_samples * num_chirps * num_channels],
        }
    }

    pub fn for_config(cfg: &RadarConfig) -> Self {
        Self::zeros(cfg.samples_per_chirp(), cfg.num_chirps, cfg.num_channels)
    }

    #[inline]
    pub fn index(&self, sample: usize, chirp: usize, channel: usize) -> usize {
        (channel * self.num_chirps + chirp) * self.num_samples + sample
    }

    pub fn get(&self, sample: usize, chirp: usize, channel: usize) -> Complex32 {
        self.data[self.index(sample, chirp, channel)]
    }

    /// Fast-time samples of one chirp on one channel.
    pub fn chirp(&self, chirp: usize, channel: usize) -> &[Complex32] {
        let start = self.index(0, chirp, channel);
        &self.data[start..start + self.num_samples]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr() as f64).sum()
    }

    pub fn check_config(&self, cfg: &RadarConfig) -> Result<()> {
        let expected = (cfg.samples_per_chirp(), cfg.num_chirps, cfg.num_channels);
        let actual = (self.num_samples, self.num_chirps, self.num_channels);
        if expected != actual {
            return Err(Error::domain(format!(
                "cube dims {actual:?} do not match radar config {expected:?}"
            )));
        }
        Ok(())
    }

    /// Little-endian binary: 32-byte header (magic, version, dtype, three
    /// dims, reserved) followed by interleaved `f32` real/imag pairs.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let mut header = [0u8; CUBE_HEADER_LEN];
        header[..8].copy_from_slice(CUBE_MAGIC);
        let fields = [
            CUBE_VERSION,
            DTYPE_COMPLEX64,
            self.num_samples as u32,
            self.num_chirps as u32,
            self.num_channels as u32,
            0,
        ];
        for (i, f) in fields.iter().enumerate() {
            header[8 + 4 * i..12 + 4 * i].copy_from_slice(&f.to_le_bytes());
        }
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for z in &self.data {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_from(mut r: impl Read, origin: &Path) -> Result<Self> {
        let mut header = [0u8; CUBE_HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|e| Error::format(origin, format!("truncated header: {e}")))?;
        if &header[..8] != CUBE_MAGIC {
            return Err(Error::format(origin, "bad magic"));
        }
        let field = |i: usize| u32::from_le_bytes(header[8 + 4 * i..12 + 4 * i].try_into().unwrap());
        if field(0) != CUBE_VERSION {
            return Err(Error::format(origin, format!("unsupported cube version {}", field(0))));
        }
        if field(1) != DTYPE_COMPLEX64 {
            return Err(Error::format(origin, format!("unsupported dtype {}", field(1))));
        }
        let (ns, nc, nch) = (field(2) as usize, field(3) as usize, field(4) as usize);
        let n = ns
            .checked_mul(nc)
            .and_then(|v| v.checked_mul(nch))
            .ok_or_else(|| Error::format(origin, "dims overflow"))?;
        let mut bytes = Vec::with_capacity(n * 8);
        r.read_to_end(&mut bytes).map_err(|e| Error::io(origin, e))?;
        if bytes.len() != n * 8 {
            return Err(Error::format(
                origin,
                format!("expected {} payload bytes, found {}", n * 8, bytes.len()),
            ));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| {
                Complex32::new(
                    f32::from_le_bytes(c[..4].try_into().unwrap()),
                    f32::from_le_bytes(c[4..].try_into().unwrap()),
                )
            })
            .collect();
        Ok(Self {
            num_samples: ns,
            num_chirps: nc,
            num_channels: nch,
            data,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f), path)
    }
}

/// Detections as CSV with header `range,velocity,azimuth,x,y,z,power_db`.
pub fn write_detections_csv(detections: &[Detection], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "range,velocity,azimuth,x,y,z,power_db")?;
    for d in detections {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            d.range, d.radial_velocity, d.azimuth, d.position[0], d.position[1], d.position[2], d.power
        )?;
    }
    Ok(())
}

/// Serializable summary of a processed frame, stored next to grid maps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionList {
    pub detections: Vec<Detection>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_binary_roundtrip() {
        let mut cube = RadarDataCube::zeros(8, 4, 2);
        for (i, z) in cube.data.iter_mut().enumerate() {
            *z = Complex32::new(i as f32 * 0.5, -(i as f32));
        }
        let mut bytes = Vec::new();
        cube.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), CUBE_HEADER_LEN + 8 * 4 * 2 * 8);
        assert_eq!(&bytes[..8], b"WSRDCUBE");
        let back = RadarDataCube::read_from(bytes.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, cube);
    }

    #[test]
    fn truncated_cube_is_rejected() {
        let cube = RadarDataCube::zeros(8, 4, 2);
        let mut bytes = Vec::new();
        cube.write_to(&mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        let err = RadarDataCube::read_from(bytes.as_slice(), Path::new("frame_0.bin")).unwrap_err();
        assert!(err.to_string().contains("frame_0.bin"));
        assert!(RadarDataCube::read_from(&b"NOTACUBE"[..], Path::new("x")).is_err());
    }

    #[test]
    fn detections_csv_header() {
        let mut out = Vec::new();
        write_detections_csv(&[Detection::from_polar(1.0, 0.0, 0.0, 10.0)], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("range,velocity,azimuth,x,y,z,power_db\n1,0,0,1,0,0,10"));
    }
}
