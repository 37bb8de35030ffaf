use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::RangeDopplerMap;

/// Connected group of flagged range-Doppler cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RDCluster {
    /// `(range_bin, velocity_bin)`, sorted.
    pub cell_indices: Vec<(usize, usize)>,
    pub size: usize,
    /// m
    pub min_range: f64,
    pub max_range: f64,
    /// m/s
    pub min_velocity: f64,
    pub max_velocity: f64,
    /// `max_range - min_range`, m.
    pub range_span: f64,
    /// `max_velocity - min_velocity`, m/s.
    pub velocity_span: f64,
    pub contains_zero_velocity: bool,
}

impl RDCluster {
    fn from_cells(mut cells: Vec<(usize, usize)>, map: &RangeDopplerMap) -> Self {
        cells.sort_unstable();
        let rs = cells.iter().map(|c| map.range_axis[c.0]);
        let vs = cells.iter().map(|c| map.velocity_axis[c.1]);
        let min_range = rs.clone().fold(f64::INFINITY, f64::min);
        let max_range = rs.fold(f64::NEG_INFINITY, f64::max);
        let min_velocity = vs.clone().fold(f64::INFINITY, f64::min);
        let max_velocity = vs.fold(f64::NEG_INFINITY, f64::max);
        let zero = map.zero_velocity_bin();
        Self {
            size: cells.len(),
            contains_zero_velocity: cells.iter().any(|c| c.1 == zero),
            cell_indices: cells,
            min_range,
            max_range,
            min_velocity,
            max_velocity,
            range_span: max_range - min_range,
            velocity_span: max_velocity - min_velocity,
        }
    }

    pub fn contains(&self, cell: (usize, usize)) -> bool {
        self.cell_indices.binary_search(&cell).is_ok()
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Groups flagged cells whose Chebyshev distance is at most 2, i.e.
/// 8-connectivity that also bridges a single empty cell. Clusters are sorted
/// by their minimum range bin (then minimum velocity bin), so the first one
/// is the nearest cluster.
pub fn cluster_range_doppler(flagged: &[(usize, usize)], map: &RangeDopplerMap) -> Vec<RDCluster> {
    const REACH: isize = 2;
    let index: HashMap<(usize, usize), usize> = flagged.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let mut parent: Vec<usize> = (0..flagged.len()).collect();
    for (i, &(r, v)) in flagged.iter().enumerate() {
        for dr in -REACH..=REACH {
            for dv in -REACH..=REACH {
                if dr == 0 && dv == 0 {
                    continue;
                }
                let (nr, nv) = (r as isize + dr, v as isize + dv);
                if nr < 0 || nv < 0 {
                    continue;
                }
                if let Some(&j) = index.get(&(nr as usize, nv as usize)) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    for (i, &c) in flagged.iter().enumerate() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(c);
    }
    let mut clusters: Vec<RDCluster> = groups.into_values().map(|g| RDCluster::from_cells(g, map)).collect();
    clusters.sort_by_key(|c| {
        let min_r = c.cell_indices[0].0;
        let min_v = c.cell_indices.iter().filter(|x| x.0 == min_r).map(|x| x.1).min().unwrap();
        (min_r, min_v)
    });
    clusters
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map() -> RangeDopplerMap {
        RangeDopplerMap::from_cells(32, 16, vec![0.0; 32 * 16], 0.1, 0.25).unwrap()
    }

    #[test]
    fn empty_input() {
        assert!(cluster_range_doppler(&[], &map()).is_empty());
    }

    #[test]
    fn gap_of_two_splits_gap_of_one_merges() {
        let m = map();
        assert_eq!(cluster_range_doppler(&[(5, 8), (8, 8)], &m).len(), 2);
        let merged = cluster_range_doppler(&[(5, 8), (7, 8)], &m);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].size, 2);
        assert!(merged[0].contains_zero_velocity);
        assert!((merged[0].range_span - 0.2).abs() < 1e-12);
        assert_eq!(merged[0].velocity_span, 0.0);
    }

    #[test]
    fn nearest_cluster_first() {
        let m = map();
        let cs = cluster_range_doppler(&[(20, 3), (21, 3), (2, 12), (3, 13)], &m);
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0].cell_indices, vec![(2, 12), (3, 13)]);
        assert!((cs[0].min_velocity - 1.0).abs() < 1e-12);
        assert!((cs[0].velocity_span - 0.25).abs() < 1e-12);
        assert!(!cs[0].contains_zero_velocity);
    }

    #[test]
    fn chain_merges_transitively() {
        let m = map();
        let cells: Vec<_> = (0..10).map(|i| (i * 2, 8)).collect();
        let cs = cluster_range_doppler(&cells, &m);
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].size, 10);
    }
}
