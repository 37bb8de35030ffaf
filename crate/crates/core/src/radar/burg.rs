use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Autoregressive model fitted by the Burg recursion.
///
/// Prediction convention: `x[n] + sum_i a_i x[n-i] = e[n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurgModel {
    /// `k_1..k_p`.
    pub reflection: Vec<Complex64>,
    /// `a_1..a_p`.
    pub ar: Vec<Complex64>,
    /// Prediction error power after the last stage.
    pub noise_power: f64,
    /// Error power before stage 1 and after each stage.
    pub stage_noise: Vec<f64>,
}

impl BurgModel {
    pub fn order(&self) -> usize {
        self.ar.len()
    }

    /// AR spectrum at spatial frequency `omega` (rad/element).
    pub fn power_at(&self, omega: f64) -> f64 {
        let mut den = Complex64::new(1.0, 0.0);
        for (i, a) in self.ar.iter().enumerate() {
            den += a * Complex64::from_polar(1.0, -omega * (i + 1) as f64);
        }
        self.noise_power.max(f64::MIN_POSITIVE) / den.norm_sqr().max(f64::MIN_POSITIVE)
    }
}

/// Burg estimate of order `order` from one array snapshot.
pub fn burg_coefficients(snapshot: &[Complex64], order: usize) -> Result<BurgModel> {
    let n = snapshot.len();
    if order < 1 || order >= n {
        return Err(Error::domain(format!("Burg order must be in 1..{n}, got {order}")));
    }
    let mut f = snapshot.to_vec();
    let mut b = snapshot.to_vec();
    let mut a: Vec<Complex64> = Vec::with_capacity(order);
    let mut reflection = Vec::with_capacity(order);
    let mut e = snapshot.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
    let mut stage_noise = vec![e];

    for m in 1..=order {
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = 0.0;
        for i in m..n {
            num += f[i] * b[i - 1].conj();
            den += f[i].norm_sqr() + b[i - 1].norm_sqr();
        }
        let mut k = if den > 0.0 { -2.0 * num / den } else { Complex64::new(0.0, 0.0) };
        if k.norm() > 1.0 {
            k /= k.norm();
        }

        let prev = a.clone();
        a.push(k);
        for i in 0..m - 1 {
            a[i] = prev[i] + k * prev[m - 2 - i].conj();
        }

        for i in (m..n).rev() {
            let fi = f[i];
            f[i] = fi + k * b[i - 1];
            b[i] = b[i - 1] + k.conj() * fi;
        }

        e *= (1.0 - k.norm_sqr()).max(0.0);
        reflection.push(k);
        stage_noise.push(e);
    }

    Ok(BurgModel {
        reflection,
        ar: a,
        noise_power: e,
        stage_noise,
    })
}

/// AR spectrum `sigma^2 / |1 + sum a_i exp(-j 2 pi d i sin(theta))|^2` over
/// azimuths `angles` (rad), for element spacing `spacing` in wavelengths.
pub fn burg_spectrum_with_spacing(model: &BurgModel, angles: &[f64], spacing: f64) -> Vec<f64> {
    angles
        .iter()
        .map(|t| model.power_at(2.0 * std::f64::consts::PI * spacing * t.sin()))
        .collect()
}

/// [`burg_spectrum_with_spacing`] for half-wavelength spacing.
pub fn burg_spectrum(model: &BurgModel, angles: &[f64]) -> Vec<f64> {
    burg_spectrum_with_spacing(model, angles, 0.5)
}

/// Uniform azimuth grid from -90° to +90° inclusive, in radians.
pub fn azimuth_grid(step_deg: f64) -> Vec<f64> {
    let n = (180.0 / step_deg).round() as usize;
    (0..=n).map(|i| (-90.0 + i as f64 * step_deg).to_radians()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane_wave(theta_deg: f64, n: usize) -> Vec<Complex64> {
        let w = std::f64::consts::PI * theta_deg.to_radians().sin();
        (0..n).map(|i| Complex64::from_polar(1.0, w * i as f64)).collect()
    }

    #[test]
    fn constant_snapshot_is_perfectly_predicted() {
        let m = burg_coefficients(&vec![Complex64::new(1.0, 0.0); 16], 1).unwrap();
        assert!((m.reflection[0] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
        assert!(m.noise_power.abs() < 1e-12);
        let grid = azimuth_grid(0.1);
        let p = burg_spectrum(&m, &grid);
        let best = p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(grid[best].abs() <= 0.1f64.to_radians() + 1e-12);
    }

    #[test]
    fn zero_snapshot_is_defined() {
        let m = burg_coefficients(&vec![Complex64::new(0.0, 0.0); 16], 6).unwrap();
        assert!(m.ar.iter().all(|a| a.norm() == 0.0));
        assert_eq!(m.noise_power, 0.0);
        assert!(burg_spectrum(&m, &azimuth_grid(1.0)).iter().all(|&p| p > 0.0));
    }

    #[test]
    fn zero_order_spectrum_is_flat() {
        let m = BurgModel {
            reflection: vec![],
            ar: vec![],
            noise_power: 2.0,
            stage_noise: vec![2.0],
        };
        assert!(burg_spectrum(&m, &azimuth_grid(1.0)).iter().all(|&p| p == 2.0));
    }

    #[test]
    fn single_plane_wave_direction() {
        let m = burg_coefficients(&plane_wave(25.0, 16), 6).unwrap();
        let grid = azimuth_grid(0.1);
        let p = burg_spectrum(&m, &grid);
        let best = p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((grid[best].to_degrees() - 25.0).abs() <= 0.1 + 1e-9);
    }

    #[test]
    fn rejects_bad_order() {
        let s = plane_wave(0.0, 4);
        assert!(burg_coefficients(&s, 0).is_err());
        assert!(burg_coefficients(&s, 4).is_err());
    }

    #[test]
    fn reflection_and_noise_contracts() {
        let s: Vec<Complex64> = (0..16)
            .map(|i| Complex64::new(((i * 7) % 5) as f64 - 2.0, ((i * 3) % 4) as f64 - 1.5))
            .collect();
        let m = burg_coefficients(&s, 6).unwrap();
        assert!(m.reflection.iter().all(|k| k.norm() <= 1.0));
        assert!(m.stage_noise.windows(2).all(|w| w[1] <= w[0]));
        assert!(m.noise_power >= 0.0);
    }
}
