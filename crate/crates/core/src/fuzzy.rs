//! Mamdani fuzzy inference and the fuzzy trees that turn normalized
//! feature vectors into a performance score.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{grade_from_score, Grade, PerformanceLabel, Sensor, NUM_DISTANCE_BINS};

/// Points of the discretized output domain `[0, 1]`.
pub const OUTPUT_POINTS: usize = 201;

/// Output membership functions for `Poor`, `Moderate`, `Good`.
pub const OUTPUT_MFS: [Triangle; 3] = [
    Triangle { a: 0.0, b: 0.1, c: 0.2 },
    Triangle { a: 0.4, b: 0.5, c: 0.6 },
    Triangle { a: 0.8, b: 0.9, c: 1.0 },
];

/// Triangular membership function with support `[a, c]` and peak `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Triangle {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a <= b && b <= c) {
            return Err(Error::domain(format!("triangle needs a <= b <= c, got ({a}, {b}, {c})")));
        }
        Ok(Self { a, b, c })
    }

    pub fn membership(&self, x: f64) -> f64 {
        if x < self.a || x > self.c {
            0.0
        } else if x == self.b {
            1.0
        } else if x < self.b {
            (x - self.a) / (self.b - self.a)
        } else {
            (self.c - x) / (self.c - self.b)
        }
    }
}

/// Low / Med / High bank of one input, parameterized by its three peaks.
///
/// Each side of a triangle reaches the neighbouring peak, so the bank
/// covers `[0, 1]` without gaps; the outer flanks extend to -1 and 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputBank {
    pub peaks: [f64; 3],
}

impl Default for InputBank {
    fn default() -> Self {
        Self { peaks: [0.0, 0.5, 1.0] }
    }
}

impl InputBank {
    pub fn new(peaks: [f64; 3]) -> Result<Self> {
        let b = Self { peaks };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let [l, m, h] = self.peaks;
        if !(0.0 <= l && l <= m && m <= h && h <= 1.0) {
            return Err(Error::domain(format!("input peaks must be ordered in [0, 1], got {:?}", self.peaks)));
        }
        Ok(())
    }

    pub fn triangles(&self) -> [Triangle; 3] {
        let [l, m, h] = self.peaks;
        [
            Triangle { a: -1.0, b: l, c: m },
            Triangle { a: l, b: m, c: h },
            Triangle { a: m, b: h, c: 2.0 },
        ]
    }
}

/// Memberships of `x` in the Low, Med and High sets.
pub fn fuzzify(x: f64, bank: &InputBank) -> [f64; 3] {
    bank.triangles().map(|t| t.membership(x))
}

/// Two-input, one-output Mamdani system with a complete 3x3 rule table.
/// `rules[3 * i + j]` is the consequent for input 1 in set `i` and input 2
/// in set `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisNode {
    pub inputs: [InputBank; 2],
    pub rules: [Grade; 9],
}

impl Default for FisNode {
    fn default() -> Self {
        Self {
            inputs: [InputBank::default(); 2],
            rules: canonical_rules(),
        }
    }
}

/// Monotone table: the consequent is the lower of the two antecedent ranks.
pub fn canonical_rules() -> [Grade; 9] {
    std::array::from_fn(|k| Grade::from_index((k / 3).min(k % 3)).unwrap())
}

/// Sampled output sets on the points where any of them is non-zero.
struct OutputGrid {
    y: Vec<f64>,
    mu: Vec<[f64; 3]>,
}

fn output_grid() -> &'static OutputGrid {
    static GRID: std::sync::OnceLock<OutputGrid> = std::sync::OnceLock::new();
    GRID.get_or_init(|| {
        let mut g = OutputGrid { y: Vec::new(), mu: Vec::new() };
        for i in 0..OUTPUT_POINTS {
            let y = i as f64 / (OUTPUT_POINTS - 1) as f64;
            let mu = OUTPUT_MFS.map(|t| t.membership(y));
            if mu.iter().any(|&m| m > 0.0) {
                g.y.push(y);
                g.mu.push(mu);
            }
        }
        g
    })
}

impl FisNode {
    pub fn validate(&self) -> Result<()> {
        self.inputs[0].validate()?;
        self.inputs[1].validate()
    }

    /// Firing strength per output set: the max over its rules of the min of
    /// the two antecedent memberships.
    pub fn strengths(&self, x1: f64, x2: f64) -> [f64; 3] {
        let m1 = fuzzify(x1, &self.inputs[0]);
        let m2 = fuzzify(x2, &self.inputs[1]);
        let mut h = [0.0f64; 3];
        for (k, g) in self.rules.iter().enumerate() {
            let w = m1[k / 3].min(m2[k % 3]);
            let slot = &mut h[g.index()];
            *slot = slot.max(w);
        }
        h
    }

    /// Centroid of the max-aggregated, min-clipped output sets on the
    /// discretized domain. Falls back to 0.5 when nothing fires.
    pub fn infer(&self, x1: f64, x2: f64) -> f64 {
        let h = self.strengths(x1, x2);
        let g = output_grid();
        let (mut num, mut den) = (0.0, 0.0);
        for (y, mu) in g.y.iter().zip(&g.mu) {
            let agg = mu[0].min(h[0]).max(mu[1].min(h[1])).max(mu[2].min(h[2]));
            num += y * agg;
            den += agg;
        }
        if den > 0.0 {
            (num / den).clamp(0.0, 1.0)
        } else {
            log::warn!("no rule fired for inputs ({x1}, {x2}); using 0.5");
            0.5
        }
    }
}

/// Binary tree of FIS nodes over a fixed list of leaves.
///
/// Leaves are reduced pairwise, level by level; an odd value at the end of
/// a level moves up unchanged. `nodes` are stored in evaluation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyTree {
    pub leaves: Vec<String>,
    pub nodes: Vec<FisNode>,
}

/// Result of a tree evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeOutput {
    pub label: PerformanceLabel,
    /// Output of every node in evaluation order.
    pub node_scores: Vec<f64>,
}

impl FuzzyTree {
    /// Number of FIS nodes needed for `leaves` inputs.
    pub fn node_count(leaves: usize) -> usize {
        leaves.saturating_sub(1)
    }

    /// Tree with default banks and the canonical rule table in every node.
    pub fn canonical(leaves: &[&str]) -> Result<Self> {
        Self::new(
            leaves.iter().map(|s| s.to_string()).collect(),
            vec![FisNode::default(); Self::node_count(leaves.len())],
        )
    }

    pub fn new(leaves: Vec<String>, nodes: Vec<FisNode>) -> Result<Self> {
        let t = Self { leaves, nodes };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.leaves.is_empty() {
            return Err(Error::domain("a fuzzy tree needs at least one leaf"));
        }
        let mut seen = self.leaves.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.leaves.len() {
            return Err(Error::domain("every feature must feed exactly one leaf"));
        }
        if self.nodes.len() != Self::node_count(self.leaves.len()) {
            return Err(Error::Dimension {
                expected: Self::node_count(self.leaves.len()),
                actual: self.nodes.len(),
            });
        }
        self.nodes.iter().try_for_each(FisNode::validate)
    }

    /// Bottom-up evaluation of inputs already scaled to `[0, 1]`; values
    /// outside are clamped.
    pub fn evaluate(&self, features: &[f64]) -> Result<TreeOutput> {
        if features.len() != self.leaves.len() {
            return Err(Error::Dimension {
                expected: self.leaves.len(),
                actual: features.len(),
            });
        }
        if features.iter().any(|v| v.is_nan()) {
            return Err(Error::domain("NaN feature"));
        }
        let mut level: Vec<f64> = features.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let mut node_scores = Vec::with_capacity(self.nodes.len());
        let mut nodes = self.nodes.iter();
        while level.len() > 1 {
            let mut next = Vec::with_capacity(level.len().div_ceil(2));
            for pair in level.chunks(2) {
                match pair {
                    [a, b] => {
                        let s = nodes.next().expect("node count checked").infer(*a, *b);
                        node_scores.push(s);
                        next.push(s);
                    }
                    [a] => next.push(*a),
                    _ => unreachable!(),
                }
            }
            level = next;
        }
        Ok(TreeOutput {
            label: grade_from_score(level[0])?,
            node_scores,
        })
    }

    /// Score only, for training loops.
    pub fn score(&self, features: &[f64]) -> f64 {
        reduce(&self.nodes, features)
    }
}

/// Evaluates the node sequence of a tree over `features` without building
/// the per-node trace.
pub(crate) fn reduce(nodes: &[FisNode], features: &[f64]) -> f64 {
    let mut level: Vec<f64> = features.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let mut k = 0;
    while level.len() > 1 {
        let n = level.len();
        let mut w = 0;
        let mut i = 0;
        while i < n {
            level[w] = if i + 1 < n {
                k += 1;
                nodes[k - 1].infer(level[i], level[i + 1])
            } else {
                level[i]
            };
            w += 1;
            i += 2;
        }
        level.truncate(w);
    }
    level[0]
}

/// Per-feature `(min, max)` used for min-max scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorms {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Normalized features and which of them had to be clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: Vec<f64>,
    pub clamped: Vec<bool>,
}

impl Normalized {
    pub fn any_clamped(&self) -> bool {
        self.clamped.iter().any(|&c| c)
    }
}

impl FeatureNorms {
    /// Column-wise range of the training rows. Undefined values are
    /// skipped; a constant or empty column gets the range `[v, v + 1]`.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [Option<f64>]>, width: usize) -> Self {
        let mut min = vec![f64::INFINITY; width];
        let mut max = vec![f64::NEG_INFINITY; width];
        for row in rows {
            for (i, v) in row.iter().enumerate().take(width) {
                if let Some(v) = v {
                    min[i] = min[i].min(*v);
                    max[i] = max[i].max(*v);
                }
            }
        }
        for i in 0..width {
            if !min[i].is_finite() {
                min[i] = 0.0;
                max[i] = 1.0;
            } else if max[i] <= min[i] {
                max[i] = min[i] + 1.0;
            }
        }
        Self { min, max }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min.is_empty() {
            return Err(Error::domain("feature norms are not fitted"));
        }
        if self.min.len() != self.max.len() {
            return Err(Error::Dimension {
                expected: self.min.len(),
                actual: self.max.len(),
            });
        }
        if self.min.iter().zip(&self.max).any(|(a, b)| !(a < b && a.is_finite() && b.is_finite())) {
            return Err(Error::domain("feature norms need finite min < max"));
        }
        Ok(())
    }

    /// Clamped min-max scaling. Undefined values map to 0.
    pub fn normalize(&self, raw: &[Option<f64>]) -> Result<Normalized> {
        self.validate()?;
        if raw.len() != self.min.len() {
            return Err(Error::Dimension {
                expected: self.min.len(),
                actual: raw.len(),
            });
        }
        let mut values = Vec::with_capacity(raw.len());
        let mut clamped = Vec::with_capacity(raw.len());
        for (i, v) in raw.iter().enumerate() {
            let Some(v) = v else {
                values.push(0.0);
                clamped.push(false);
                continue;
            };
            let x = (v - self.min[i]) / (self.max[i] - self.min[i]);
            clamped.push(!(0.0..=1.0).contains(&x));
            values.push(x.clamp(0.0, 1.0));
        }
        Ok(Normalized { values, clamped })
    }
}

/// Shorthand for [`FeatureNorms::normalize`].
pub fn normalize_features(raw: &[Option<f64>], norms: &FeatureNorms) -> Result<Normalized> {
    norms.normalize(raw)
}

/// A trained tree with the norms of its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub sensor: Sensor,
    /// `None` for the whole-frame camera tree.
    pub distance_bin: Option<usize>,
    pub tree: FuzzyTree,
    pub norms: FeatureNorms,
}

impl TreeModel {
    pub fn evaluate(&self, raw: &[Option<f64>]) -> Result<(TreeOutput, Normalized)> {
        let n = self.norms.normalize(raw)?;
        Ok((self.tree.evaluate(&n.values)?, n))
    }
}

pub const MODEL_VERSION: u32 = 1;

/// All trees of a monitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorModel {
    pub version: u32,
    pub trees: Vec<TreeModel>,
}

impl MonitorModel {
    pub fn new(trees: Vec<TreeModel>) -> Self {
        Self {
            version: MODEL_VERSION,
            trees,
        }
    }

    pub fn tree(&self, sensor: Sensor, bin: Option<usize>) -> Option<&TreeModel> {
        self.trees.iter().find(|t| t.sensor == sensor && t.distance_bin == bin)
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.trees {
            t.tree.validate()?;
            t.norms.validate()?;
            if t.norms.min.len() != t.tree.leaves.len() {
                return Err(Error::Dimension {
                    expected: t.tree.leaves.len(),
                    actual: t.norms.min.len(),
                });
            }
            match (t.sensor, t.distance_bin) {
                (Sensor::Camera, None) => {}
                (Sensor::Camera, Some(_)) => return Err(Error::domain("camera trees are not binned")),
                (_, Some(b)) if b < NUM_DISTANCE_BINS => {}
                _ => return Err(Error::domain("radar and lidar trees need a distance bin")),
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Head {
            version: u32,
        }
        let head: Head = serde_json::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
        if head.version > MODEL_VERSION {
            return Err(Error::UnsupportedVersion {
                found: head.version,
                supported: MODEL_VERSION,
            });
        }
        let m: MonitorModel = serde_json::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight transcription of min/max/centroid over all 201 points and
    /// all nine rules, with its own membership arithmetic.
    fn reference_infer(node: &FisNode, x1: f64, x2: f64) -> f64 {
        fn tri(x: f64, a: f64, b: f64, c: f64) -> f64 {
            let left = if b > a { (x - a) / (b - a) } else if x >= b { 1.0 } else { 0.0 };
            let right = if c > b { (c - x) / (c - b) } else if x <= b { 1.0 } else { 0.0 };
            left.min(right).max(0.0)
        }
        let sets = |p: [f64; 3]| [(-1.0, p[0], p[1]), (p[0], p[1], p[2]), (p[1], p[2], 2.0)];
        let (s1, s2) = (sets(node.inputs[0].peaks), sets(node.inputs[1].peaks));
        let outs = [(0.0, 0.1, 0.2), (0.4, 0.5, 0.6), (0.8, 0.9, 1.0)];
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..=200 {
            let y = i as f64 / 200.0;
            let mut agg: f64 = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    let w = tri(x1, s1[a].0, s1[a].1, s1[a].2).min(tri(x2, s2[b].0, s2[b].1, s2[b].2));
                    let o = outs[node.rules[3 * a + b].index()];
                    agg = agg.max(w.min(tri(y, o.0, o.1, o.2)));
                }
            }
            num += y * agg;
            den += agg;
        }
        num / den
    }

    #[test]
    fn fuzzify_examples() {
        let b = InputBank::default();
        assert_eq!(fuzzify(0.5, &b)[1], 1.0);
        assert_eq!(fuzzify(0.0, &b), [1.0, 0.0, 0.0]);
        assert_eq!(fuzzify(0.25, &b), [0.5, 0.5, 0.0]);
    }

    #[test]
    fn all_good_table_scores_good_centroid() {
        let node = FisNode {
            rules: [Grade::Good; 9],
            ..FisNode::default()
        };
        for &(a, b) in &[(0.0, 0.0), (0.3, 0.9), (1.0, 0.42)] {
            assert!((node.infer(a, b) - 0.9).abs() <= 1.0 / 200.0);
        }
    }

    #[test]
    fn symmetric_table_is_symmetric() {
        let node = FisNode::default();
        for i in 0..=20 {
            for j in 0..=20 {
                let (a, b) = (i as f64 / 20.0, j as f64 / 20.0);
                assert!((node.infer(a, b) - node.infer(b, a)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_reference_evaluation() {
        let node = FisNode::default();
        assert!((node.infer(0.25, 0.25) - reference_infer(&node, 0.25, 0.25)).abs() < 1e-9);
        let odd = FisNode {
            inputs: [InputBank::new([0.1, 0.1, 0.7]).unwrap(), InputBank::new([0.2, 0.6, 0.6]).unwrap()],
            rules: [
                Grade::Good,
                Grade::Poor,
                Grade::Moderate,
                Grade::Poor,
                Grade::Good,
                Grade::Good,
                Grade::Moderate,
                Grade::Poor,
                Grade::Poor,
            ],
        };
        for &(a, b) in &[(0.0, 0.0), (0.1, 0.6), (0.65, 0.33), (1.0, 1.0), (0.7, 0.2)] {
            assert!((odd.infer(a, b) - reference_infer(&odd, a, b)).abs() < 1e-9, "({a}, {b})");
        }
    }

    #[test]
    fn tree_reduction() {
        let leaf = FuzzyTree::canonical(&["x"]).unwrap();
        let out = leaf.evaluate(&[0.7]).unwrap();
        assert_eq!(out.label, grade_from_score(0.7).unwrap());
        assert!(out.node_scores.is_empty());

        let t = FuzzyTree::canonical(&["a", "b", "c", "d", "e"]).unwrap();
        assert_eq!(t.nodes.len(), 4);
        let x = [0.1, 0.9, 0.5, 0.4, 0.8];
        let out = t.evaluate(&x).unwrap();
        let n = FisNode::default();
        let (ab, cd) = (n.infer(0.1, 0.9), n.infer(0.5, 0.4));
        let abcd = n.infer(ab, cd);
        assert_eq!(out.node_scores, vec![ab, cd, abcd, n.infer(abcd, 0.8)]);
        assert_eq!(t.score(&x), out.label.score);
        assert!(t.evaluate(&x[..4]).is_err());
    }

    #[test]
    fn all_good_tree_is_good() {
        let mut t = FuzzyTree::canonical(&["a", "b", "c"]).unwrap();
        for n in &mut t.nodes {
            n.rules = [Grade::Good; 9];
        }
        for x in [[0.0, 0.0, 0.0], [1.0, 0.2, 0.7]] {
            assert_eq!(t.evaluate(&x).unwrap().label.grade, Grade::Good);
        }
    }

    #[test]
    fn normalization_clamps_and_flags() {
        let rows: Vec<Vec<Option<f64>>> = vec![vec![Some(1.0), Some(5.0)], vec![Some(3.0), Some(5.0)]];
        let norms = FeatureNorms::fit(rows.iter().map(|r| r.as_slice()), 2);
        assert_eq!(norms.max[1], 6.0);
        let n = norms.normalize(&[Some(1.0), Some(5.0)]).unwrap();
        assert_eq!(n.values, vec![0.0, 0.0]);
        let n = norms.normalize(&[Some(3.0), Some(6.0)]).unwrap();
        assert_eq!(n.values, vec![1.0, 1.0]);
        let n = norms.normalize(&[Some(9.0), None]).unwrap();
        assert_eq!(n.values, vec![1.0, 0.0]);
        assert_eq!(n.clamped, vec![true, false]);
        let empty = FeatureNorms { min: vec![], max: vec![] };
        assert!(empty.normalize(&[]).is_err());
    }

    #[test]
    fn model_json_roundtrip_and_version_gate() {
        let tree = FuzzyTree::canonical(&["a", "b"]).unwrap();
        let m = MonitorModel::new(vec![TreeModel {
            sensor: Sensor::Lidar,
            distance_bin: Some(2),
            tree,
            norms: FeatureNorms {
                min: vec![0.0, -1.0],
                max: vec![1.0, 1.0 / 3.0],
            },
        }]);
        let text = m.to_json().unwrap();
        assert_eq!(MonitorModel::from_json(&text, Path::new("m")).unwrap(), m);
        let future = text.replacen("\"version\": 1", "\"version\": 2", 1);
        assert!(matches!(
            MonitorModel::from_json(&future, Path::new("m")),
            Err(Error::UnsupportedVersion { found: 2, .. })
        ));
    }
}
