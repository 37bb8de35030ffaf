use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::RadarDataCube;
use crate::error::{Error, Result};
use crate::types::{RadarConfig, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Window {
    Rect,
    #[default]
    Hann,
}

impl Window {
    /// Periodic window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

/// Power over `[range bin × velocity bin]`, row-major by range.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerMap {
    pub num_range_bins: usize,
    pub num_velocity_bins: usize,
    pub cells: Vec<f64>,
    /// m, one entry per range bin.
    pub range_axis: Vec<f64>,
    /// m/s, one entry per velocity bin; bin `num_velocity_bins / 2` is 0 m/s.
    pub velocity_axis: Vec<f64>,
}

impl RangeDopplerMap {
    pub fn from_cells(
        num_range_bins: usize,
        num_velocity_bins: usize,
        cells: Vec<f64>,
        range_resolution: f64,
        velocity_resolution: f64,
    ) -> Result<Self> {
        if cells.len() != num_range_bins * num_velocity_bins {
            return Err(Error::Dimension {
                expected: num_range_bins * num_velocity_bins,
                actual: cells.len(),
            });
        }
        if cells.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::domain("range-Doppler powers must be finite and >= 0"));
        }
        let half = (num_velocity_bins / 2) as f64;
        Ok(Self {
            num_range_bins,
            num_velocity_bins,
            cells,
            range_axis: (0..num_range_bins).map(|i| i as f64 * range_resolution).collect(),
            velocity_axis: (0..num_velocity_bins)
                .map(|i| (i as f64 - half) * velocity_resolution)
                .collect(),
        })
    }

    #[inline]
    pub fn get(&self, range_bin: usize, velocity_bin: usize) -> f64 {
        self.cells[range_bin * self.num_velocity_bins + velocity_bin]
    }

    pub fn range_resolution(&self) -> f64 {
        if self.num_range_bins > 1 {
            self.range_axis[1] - self.range_axis[0]
        } else {
            0.0
        }
    }

    pub fn velocity_resolution(&self) -> f64 {
        if self.num_velocity_bins > 1 {
            self.velocity_axis[1] - self.velocity_axis[0]
        } else {
            0.0
        }
    }

    /// Index of the 0 m/s column.
    pub fn zero_velocity_bin(&self) -> usize {
        self.num_velocity_bins / 2
    }

    pub fn total_power(&self) -> f64 {
        self.cells.iter().sum()
    }

    /// `(range_bin, velocity_bin)` of the strongest cell.
    pub fn argmax(&self) -> (usize, usize) {
        let (i, _) = self
            .cells
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
        (i / self.num_velocity_bins, i % self.num_velocity_bins)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            cells: self.cells.iter().map(|c| c * factor).collect(),
            ..self.clone()
        }
    }

    /// Log-power image for debugging: 8-bit grey, range increasing downwards,
    /// velocity left to right. Pixel = 255 · (dB − floor) / dynamic_range,
    /// clamped, where floor = peak_dB − dynamic_range.
    pub fn to_pgm(&self, dynamic_range_db: f64) -> Vec<u8> {
        let peak = self.cells.iter().cloned().fold(0.0_f64, f64::max);
        let peak_db = 10.0 * peak.max(1e-30).log10();
        let floor = peak_db - dynamic_range_db;
        let mut out = format!("P5\n{} {}\n255\n", self.num_velocity_bins, self.num_range_bins).into_bytes();
        out.extend(self.cells.iter().map(|&p| {
            let db = 10.0 * p.max(1e-30).log10();
            (255.0 * ((db - floor) / dynamic_range_db).clamp(0.0, 1.0)).round() as u8
        }));
        out
    }
}

/// Complex per-channel spectra after the 2D FFT, positive beat frequencies
/// only, Doppler FFT-shifted. Layout `[range][velocity][channel]` so each
/// cell's array snapshot is contiguous.
#[derive(Debug, Clone)]
pub struct ChannelSpectra {
    pub num_range_bins: usize,
    pub num_velocity_bins: usize,
    pub num_channels: usize,
    pub data: Vec<Complex64>,
}

impl ChannelSpectra {
    pub fn snapshot(&self, range_bin: usize, velocity_bin: usize) -> &[Complex64] {
        let start = (range_bin * self.num_velocity_bins + velocity_bin) * self.num_channels;
        &self.data[start..start + self.num_channels]
    }
}

/// Output of the 2D FFT stage.
#[derive(Debug, Clone)]
pub struct RangeDopplerProcessing {
    pub map: RangeDopplerMap,
    pub spectra: ChannelSpectra,
    /// FFT lengths actually used after zero-padding.
    pub padded_samples: usize,
    pub padded_chirps: usize,
}

/// Windowed 2D FFT per channel with noncoherent power integration.
///
/// Powers are normalised by the FFT lengths so that, for signals confined to
/// positive beat frequencies and a rectangular window, the total map power
/// equals the cube energy. Non-power-of-two dimensions are zero-padded to
/// the next power of two and the axes are scaled accordingly.
pub fn range_doppler(cube: &RadarDataCube, cfg: &RadarConfig, window: Window) -> Result<RangeDopplerProcessing> {
    cube.check_config(cfg)?;
    let n = cube.num_samples;
    let m = cube.num_chirps;
    let nch = cube.num_channels;
    let n_pad = n.next_power_of_two();
    let m_pad = m.next_power_of_two();
    let n_range = n_pad / 2;

    let w_fast = window.coefficients(n);
    let w_slow = window.coefficients(m);

    let mut planner = FftPlanner::<f64>::new();
    let fft_fast = planner.plan_fft_forward(n_pad);
    let fft_slow = planner.plan_fft_forward(m_pad);

    let mut spectra = vec![Complex64::new(0.0, 0.0); n_range * m_pad * nch];
    let mut power = vec![0.0; n_range * m_pad];
    let norm = 1.0 / (n_pad as f64 * m_pad as f64);

    let mut rows = vec![Complex64::new(0.0, 0.0); m * n_pad];
    let mut column = vec![Complex64::new(0.0, 0.0); m_pad];
    let half = m_pad / 2;
    for ch in 0..nch {
        for chirp in 0..m {
            let src = cube.chirp(chirp, ch);
            let row = &mut rows[chirp * n_pad..(chirp + 1) * n_pad];
            for (i, z) in row.iter_mut().enumerate() {
                *z = if i < n {
                    let s = src[i];
                    Complex64::new(s.re as f64, s.im as f64) * w_fast[i]
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
            fft_fast.process(row);
        }
        for r in 0..n_range {
            for (chirp, slot) in column.iter_mut().enumerate() {
                *slot = if chirp < m {
                    rows[chirp * n_pad + r] * w_slow[chirp]
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
            fft_slow.process(&mut column);
            for (k, z) in column.iter().enumerate() {
                let v = (k + half) % m_pad;
                let cell = r * m_pad + v;
                spectra[cell * nch + ch] = *z;
                power[cell] += z.norm_sqr() * norm;
            }
        }
    }

    let range_res = SPEED_OF_LIGHT / (2.0 * cfg.bandwidth) * (n as f64 / n_pad as f64);
    let vel_res = cfg.wavelength() / (2.0 * m_pad as f64 * cfg.chirp_repetition);
    let map = RangeDopplerMap::from_cells(n_range, m_pad, power, range_res, vel_res)?;
    Ok(RangeDopplerProcessing {
        map,
        spectra: ChannelSpectra {
            num_range_bins: n_range,
            num_velocity_bins: m_pad,
            num_channels: nch,
            data: spectra,
        },
        padded_samples: n_pad,
        padded_chirps: m_pad,
    })
}

/// Power map only; see [`range_doppler`].
pub fn range_doppler_map(cube: &RadarDataCube, cfg: &RadarConfig, window: Window) -> Result<RangeDopplerMap> {
    range_doppler(cube, cfg, window).map(|p| p.map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex32;

    fn small_cfg(samples: usize, chirps: usize, channels: usize) -> RadarConfig {
        RadarConfig {
            sample_rate: samples as f64 / 51.2e-6,
            num_chirps: chirps,
            num_channels: channels,
            ..RadarConfig::default()
        }
    }

    #[test]
    fn zero_cube_gives_zero_map() {
        let cfg = small_cfg(32, 8, 2);
        let cube = RadarDataCube::for_config(&cfg);
        let map = range_doppler_map(&cube, &cfg, Window::Hann).unwrap();
        assert!(map.cells.iter().all(|&p| p == 0.0));
        assert_eq!(map.num_range_bins, 16);
        assert_eq!(map.num_velocity_bins, 8);
        assert_eq!(map.velocity_axis[map.zero_velocity_bin()], 0.0);
    }

    #[test]
    fn on_bin_tone_lands_in_its_cell() {
        let cfg = small_cfg(32, 8, 2);
        let mut cube = RadarDataCube::for_config(&cfg);
        let (kr, kd) = (5.0, -2.0);
        for ch in 0..2 {
            for m in 0..8 {
                for n in 0..32 {
                    let ph = 2.0 * std::f64::consts::PI * (kr * n as f64 / 32.0 + kd * m as f64 / 8.0);
                    let i = cube.index(n, m, ch);
                    cube.data[i] = Complex32::new(ph.cos() as f32, ph.sin() as f32);
                }
            }
        }
        let map = range_doppler_map(&cube, &cfg, Window::Rect).unwrap();
        assert_eq!(map.argmax(), (5, 4 - 2));
        let rel = (map.total_power() - cube.energy()).abs() / cube.energy();
        assert!(rel < 1e-6, "parseval mismatch {rel}");
    }

    #[test]
    fn non_power_of_two_is_padded() {
        let cfg = small_cfg(24, 6, 2);
        let cube = RadarDataCube::for_config(&cfg);
        let p = range_doppler(&cube, &cfg, Window::Hann).unwrap();
        assert_eq!(p.padded_samples, 32);
        assert_eq!(p.padded_chirps, 8);
        assert_eq!(p.map.num_range_bins, 16);
        let expected = cfg.range_resolution() * 24.0 / 32.0;
        assert!((p.map.range_resolution() - expected).abs() < 1e-12);
    }

    #[test]
    fn mismatched_cube_is_rejected() {
        let cfg = small_cfg(32, 8, 2);
        let cube = RadarDataCube::zeros(16, 8, 2);
        assert!(range_doppler_map(&cube, &cfg, Window::Hann).is_err());
    }

    #[test]
    fn pgm_header() {
        let map = RangeDopplerMap::from_cells(2, 4, vec![1.0; 8], 0.1, 0.25).unwrap();
        let pgm = map.to_pgm(40.0);
        assert!(pgm.starts_with(b"P5\n4 2\n255\n"));
        assert_eq!(pgm.len(), "P5\n4 2\n255\n".len() + 8);
    }
}
