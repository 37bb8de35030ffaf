//! Small statistics helpers shared by the feature extractors.

/// Population mean and standard deviation; `(0, 0)` for an empty input.
pub fn mean_std(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let mut n = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for x in values {
        n += 1;
        let d = x - mean;
        mean += d / n as f64;
        m2 += d * (x - mean);
    }
    if n == 0 {
        (0.0, 0.0)
    } else {
        (mean, (m2 / n as f64).max(0.0).sqrt())
    }
}

/// Population variance; `None` for an empty input.
pub fn population_variance(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Some(values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n)
}

/// Linear-interpolated percentile (`q` in `[0, 100]`) of unsorted data.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// For each point, how many other points lie within `radius` (inclusive).
/// Uses a uniform hash grid with cell size `radius`.
pub fn neighbor_counts(points: &[[f64; 3]], radius: f64) -> Vec<usize> {
    use std::collections::HashMap;
    let key = |p: &[f64; 3]| {
        [
            (p[0] / radius).floor() as i64,
            (p[1] / radius).floor() as i64,
            (p[2] / radius).floor() as i64,
        ]
    };
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    let r2 = radius * radius;
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let k = key(p);
            let mut count = 0;
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(cell) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                            count += cell
                                .iter()
                                .filter(|&&j| {
                                    j != i && {
                                        let q = points[j];
                                        let d = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
                                        d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= r2
                                    }
                                })
                                .count();
                        }
                    }
                }
            }
            count
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_basics() {
        assert_eq!(mean_std([]), (0.0, 0.0));
        assert_eq!(mean_std([3.0]), (3.0, 0.0));
        let (m, s) = mean_std([1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn variance_and_percentile() {
        assert_eq!(population_variance(&[1.0, 3.0]), Some(1.0));
        assert_eq!(population_variance(&[]), None);
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0], 0.0), Some(1.0));
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0], 100.0), Some(4.0));
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0], 25.0), Some(2.0));
    }

    #[test]
    fn neighbors_match_brute_force() {
        let pts: Vec<[f64; 3]> = (0..200)
            .map(|i| {
                let t = i as f64;
                [(t * 0.37).sin() * 3.0, (t * 0.91).cos() * 3.0, (t * 0.13).sin()]
            })
            .collect();
        let fast = neighbor_counts(&pts, 1.0);
        for (i, p) in pts.iter().enumerate() {
            let brute = pts
                .iter()
                .enumerate()
                .filter(|(j, q)| {
                    *j != i && (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2) <= 1.0
                })
                .count();
            assert_eq!(fast[i], brute);
        }
    }
}
