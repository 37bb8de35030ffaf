//! Per-condition curves of the frame metrics over vehicle distance.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::analysis::FrameAnalysis;
use super::plot::line_chart;
use crate::error::{Error, Result};
use crate::stats::mean_std;
use crate::types::{distance_bin, BIN_WIDTH};

/// Mean of one metric over the frames of a condition whose vehicle lies in
/// `bin`; `bin` is `None` for the all-frame summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub metric: String,
    pub condition: String,
    pub bin: Option<usize>,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub conditions: Vec<String>,
    pub curves: Vec<CurvePoint>,
    pub totals: Vec<CurvePoint>,
}

impl Report {
    pub fn curve(&self, metric: &str, condition: &str) -> Vec<&CurvePoint> {
        self.curves
            .iter()
            .filter(|p| p.metric == metric && p.condition == condition)
            .collect()
    }

    pub fn total(&self, metric: &str, condition: &str) -> Option<f64> {
        self.totals
            .iter()
            .find(|p| p.metric == metric && p.condition == condition)
            .map(|p| p.mean)
    }

    /// Mean over the frames whose vehicle bin is at least `from_bin`.
    pub fn mean_from_bin(&self, metric: &str, condition: &str, from_bin: usize) -> Option<f64> {
        let pts: Vec<&CurvePoint> = self
            .curve(metric, condition)
            .into_iter()
            .filter(|p| p.bin.is_some_and(|b| b >= from_bin))
            .collect();
        let n: usize = pts.iter().map(|p| p.count).sum();
        (n > 0).then(|| pts.iter().map(|p| p.mean * p.count as f64).sum::<f64>() / n as f64)
    }

    pub fn metrics(&self) -> Vec<&str> {
        let mut m: Vec<&str> = self.totals.iter().map(|p| p.metric.as_str()).collect();
        m.sort_unstable();
        m.dedup();
        m
    }
}

/// Aggregates frame metrics by (metric, condition, vehicle bin).
pub fn report(frames: &[FrameAnalysis]) -> Report {
    type Key = (String, String);
    let mut by_bin: BTreeMap<(Key, usize), Vec<f64>> = BTreeMap::new();
    let mut all: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    let mut conditions: Vec<String> = Vec::new();
    for f in frames {
        if !conditions.contains(&f.condition) {
            conditions.push(f.condition.clone());
        }
        for (m, &v) in &f.metrics {
            let key = (m.clone(), f.condition.clone());
            all.entry(key.clone()).or_default().push(v);
            if let Some(b) = distance_bin(f.vehicle_distance) {
                by_bin.entry((key, b)).or_default().push(v);
            }
        }
    }
    conditions.sort();
    let point = |(metric, condition): &Key, bin: Option<usize>, v: &[f64]| {
        let (mean, std) = mean_std(v.iter().copied());
        CurvePoint {
            metric: metric.clone(),
            condition: condition.clone(),
            bin,
            count: v.len(),
            mean,
            std,
        }
    };
    Report {
        conditions,
        curves: by_bin.iter().map(|((k, b), v)| point(k, Some(*b), v)).collect(),
        totals: all.iter().map(|(k, v)| point(k, None, v)).collect(),
    }
}

fn write_points(path: &Path, points: &[CurvePoint]) -> Result<()> {
    let bad = |e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(bad)?;
    w.write_record(["metric", "condition", "bin", "distance", "count", "mean", "std"])
        .map_err(bad)?;
    for p in points {
        let (bin, dist) = match p.bin {
            Some(b) => (b.to_string(), ((b as f64 + 0.5) * BIN_WIDTH).to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([
            p.metric.as_str(),
            p.condition.as_str(),
            &bin,
            &dist,
            &p.count.to_string(),
            &p.mean.to_string(),
            &p.std.to_string(),
        ])
        .map_err(bad)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `curves.csv`, `totals.csv`, `legend.csv` and one `<metric>.ppm`
/// chart per metric (one line per condition, colours in legend order).
pub fn write_report(dir: &Path, r: &Report) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_points(&dir.join("curves.csv"), &r.curves)?;
    write_points(&dir.join("totals.csv"), &r.totals)?;
    let legend = dir.join("legend.csv");
    let mut text = String::from("series,condition\n");
    for (i, c) in r.conditions.iter().enumerate() {
        text.push_str(&format!("{i},{c}\n"));
    }
    std::fs::write(&legend, text).map_err(|e| Error::io(&legend, e))?;
    for m in r.metrics() {
        let series: Vec<Vec<(f64, f64)>> = r
            .conditions
            .iter()
            .map(|c| {
                r.curve(m, c)
                    .iter()
                    .filter_map(|p| Some(((p.bin? as f64 + 0.5) * BIN_WIDTH, p.mean)))
                    .collect()
            })
            .collect();
        let p = dir.join(format!("{m}.ppm"));
        std::fs::write(&p, line_chart(&series)).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Sensor;

    fn frame(condition: &str, d: f64, v: f64) -> FrameAnalysis {
        FrameAnalysis {
            sensor: Sensor::Lidar,
            condition: condition.into(),
            frame: 0,
            vehicle_distance: d,
            bins: vec![],
            valid: vec![],
            measurement: None,
            metrics: [("m".to_string(), v)].into_iter().collect(),
        }
    }

    #[test]
    fn groups_by_condition_and_bin() {
        let r = report(&[frame("a", 1.0, 2.0), frame("a", 1.5, 4.0), frame("a", 9.0, 1.0), frame("b", 30.0, 5.0)]);
        assert_eq!(r.conditions, vec!["a", "b"]);
        let a = r.curve("m", "a");
        assert_eq!(a.len(), 2);
        assert_eq!((a[0].bin, a[0].count, a[0].mean), (Some(0), 2, 3.0));
        assert_eq!(r.total("m", "b"), Some(5.0));
        assert!(r.curve("m", "b").is_empty());
        assert_eq!(r.mean_from_bin("m", "a", 3), Some(1.0));
        assert_eq!(report(&[]), Report::default());
    }
}
