use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::RangeDopplerMap;
use crate::error::{Error, Result};

/// Cross-shaped OS-CFAR window.
///
/// `train` is the number of training cells on each side of the cell under
/// test (leading and lagging), split evenly between the range and Doppler
/// arms, so the full training set holds `2 * train` cells. `guard` cells are
/// skipped on every arm. The threshold is `alpha` times the `rank_k`-th
/// smallest training power (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CfarConfig {
    pub guard: usize,
    pub train: usize,
    pub rank_k: usize,
    pub alpha: f64,
}

impl Default for CfarConfig {
    fn default() -> Self {
        Self::for_pfa(2, 16, 24, 1e-3).expect("default CFAR parameters are valid")
    }
}

impl CfarConfig {
    /// Parameters whose `alpha` yields the requested false-alarm rate on
    /// exponential noise.
    pub fn for_pfa(guard: usize, train: usize, rank_k: usize, pfa: f64) -> Result<Self> {
        let alpha = os_cfar_alpha(2 * train, rank_k, pfa)?;
        let cfg = Self {
            guard,
            train,
            rank_k,
            alpha,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn training_cells(&self) -> usize {
        2 * self.train
    }

    /// Design false-alarm rate of the full window.
    pub fn pfa(&self) -> f64 {
        os_cfar_pfa(self.training_cells(), self.rank_k, self.alpha)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train == 0 {
            return Err(Error::domain("CFAR needs at least one training cell per side"));
        }
        if self.rank_k < 1 || self.rank_k > self.training_cells() {
            return Err(Error::domain(format!(
                "rank_k must be in 1..={}, got {}",
                self.training_cells(),
                self.rank_k
            )));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::domain(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// False-alarm probability of OS-CFAR on i.i.d. exponential cells:
/// `prod_{i=0}^{k-1} (n - i) / (n - i + alpha)`.
pub fn os_cfar_pfa(n: usize, k: usize, alpha: f64) -> f64 {
    (0..k).map(|i| (n - i) as f64 / ((n - i) as f64 + alpha)).product()
}

/// Scale factor achieving `pfa`, by bisection on [`os_cfar_pfa`].
pub fn os_cfar_alpha(n: usize, k: usize, pfa: f64) -> Result<f64> {
    if k < 1 || k > n {
        return Err(Error::domain(format!("rank {k} outside 1..={n}")));
    }
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(Error::domain(format!("pfa must be in (0, 1), got {pfa}")));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while os_cfar_pfa(n, k, hi) > pfa {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::domain("pfa unreachable"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if os_cfar_pfa(n, k, mid) > pfa {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Cells whose power exceeds the OS-CFAR threshold, as `(range_bin,
/// velocity_bin)` pairs in row-major order.
///
/// At map borders the arms that do not fit are shortened: the rank scales
/// with the number of available cells and `alpha` is re-solved so the
/// design false-alarm rate is kept. A cell whose window is truncated along
/// both axes is never flagged.
pub fn os_cfar(map: &RangeDopplerMap, cfg: &CfarConfig) -> Result<Vec<(usize, usize)>> {
    cfg.validate()?;
    let nr = map.num_range_bins;
    let nv = map.num_velocity_bins;
    let n_full = cfg.training_cells();
    let design_pfa = cfg.pfa();
    let arm_r = cfg.train.div_ceil(2);
    let arm_v = cfg.train / 2;
    let reach_r = cfg.guard + arm_r;
    let reach_v = cfg.guard + arm_v;

    let mut alpha_cache: HashMap<(usize, usize), f64> = HashMap::new();
    alpha_cache.insert((n_full, cfg.rank_k), cfg.alpha);
    let mut buf = Vec::with_capacity(n_full);
    let mut out = Vec::new();

    for r in 0..nr {
        let r_cut = r < reach_r || r + reach_r >= nr;
        for v in 0..nv {
            let v_cut = v < reach_v || v + reach_v >= nv;
            if r_cut && v_cut {
                continue;
            }
            buf.clear();
            let g = cfg.guard;
            for d in g + 1..=g + arm_r {
                if r >= d {
                    buf.push(map.get(r - d, v));
                }
                if r + d < nr {
                    buf.push(map.get(r + d, v));
                }
            }
            for d in g + 1..=g + arm_v {
                if v >= d {
                    buf.push(map.get(r, v - d));
                }
                if v + d < nv {
                    buf.push(map.get(r, v + d));
                }
            }
            let n = buf.len();
            if n == 0 {
                continue;
            }
            let (k, alpha) = if n == n_full {
                (cfg.rank_k, cfg.alpha)
            } else {
                let k = ((cfg.rank_k * n) as f64 / n_full as f64).round().clamp(1.0, n as f64) as usize;
                let a = *alpha_cache
                    .entry((n, k))
                    .or_insert_with(|| os_cfar_alpha(n, k, design_pfa).unwrap_or(cfg.alpha));
                (k, a)
            };
            let (_, kth, _) = buf.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
            if map.get(r, v) > alpha * *kth {
                out.push((r, v));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map_of(nr: usize, nv: usize, cells: Vec<f64>) -> RangeDopplerMap {
        RangeDopplerMap::from_cells(nr, nv, cells, 0.1, 0.25).unwrap()
    }

    fn cfg_alpha(alpha: f64) -> CfarConfig {
        CfarConfig {
            guard: 2,
            train: 16,
            rank_k: 24,
            alpha,
        }
    }

    #[test]
    fn uniform_map_has_no_detections() {
        let map = map_of(64, 64, vec![1.0; 64 * 64]);
        assert!(os_cfar(&map, &cfg_alpha(2.0)).unwrap().is_empty());
    }

    #[test]
    fn single_spike_is_the_only_detection() {
        let mut cells = vec![1.0; 64 * 64];
        cells[30 * 64 + 20] = 100.0;
        let map = map_of(64, 64, cells);
        assert_eq!(os_cfar(&map, &cfg_alpha(2.0)).unwrap(), vec![(30, 20)]);
    }

    #[test]
    fn corner_cells_are_never_flagged() {
        let mut cells = vec![1.0; 64 * 64];
        cells[0] = 1e6;
        cells[63 * 64 + 63] = 1e6;
        cells[64 + 30] = 1e6;
        let map = map_of(64, 64, cells);
        assert_eq!(os_cfar(&map, &cfg_alpha(2.0)).unwrap(), vec![(1, 30)]);
    }

    #[test]
    fn pfa_formula_and_bisection_agree() {
        let a = os_cfar_alpha(32, 24, 1e-3).unwrap();
        assert!((os_cfar_pfa(32, 24, a) / 1e-3 - 1.0).abs() < 1e-9);
        assert_eq!(os_cfar_pfa(32, 24, 0.0), 1.0);
        assert!(os_cfar_alpha(32, 33, 1e-3).is_err());
        assert!(os_cfar_alpha(32, 24, 0.0).is_err());
        assert!((CfarConfig::default().pfa() - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_rank() {
        let mut cfg = cfg_alpha(2.0);
        cfg.rank_k = 33;
        assert!(os_cfar(&map_of(8, 8, vec![1.0; 64]), &cfg).is_err());
        cfg.rank_k = 0;
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn scale_invariance(cells in proptest::collection::vec(0.0f64..10.0, 32 * 32), c in 0.01f64..100.0) {
            let map = map_of(32, 32, cells);
            let cfg = CfarConfig::default();
            let a = os_cfar(&map, &cfg).unwrap();
            let b = os_cfar(&map.scaled(c), &cfg).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
