//! Run configuration read from `--config <file.json>`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use weathersense::pipeline::{ExtractConfig, TrainConfig};
use weathersense::sim::Scenario;
use weathersense::types::{RadarConfig, Sensor, WeatherCondition};

pub const SEED_ENV: &str = "WEATHERSENSE_SEED";

/// Every field is optional in the file; missing fields take the defaults
/// below and unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Overridden by `--seed`; falls back to `WEATHERSENSE_SEED`, then 0.
    pub seed: Option<u64>,
    /// Output directory; `out` when unset.
    pub out: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    pub threads: usize,
    /// 0 warn, 1 info, 2 debug, 3+ trace.
    pub verbosity: u8,
    /// Weather presets file; the bundled presets when unset.
    pub presets: Option<PathBuf>,
    /// Dataset directory; `<out>/dataset` when unset.
    pub dataset: Option<PathBuf>,
    /// Missing frames are reported but do not fail extract, monitor or report.
    pub lenient: bool,
    pub simulate: SimulateConfig,
    pub extract: ExtractConfig,
    pub train: TrainConfig,
    pub monitor: MonitorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Condition tags such as `fog_day`, or `all`.
    pub conditions: Vec<String>,
    pub frames: usize,
    pub sensors: Vec<String>,
    /// Shared by every condition; its seed is replaced by the run seed.
    pub scenario: Scenario,
    pub radar: RadarConfig,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            conditions: vec!["all".into()],
            frames: 50,
            sensors: all_sensor_names(),
            scenario: Scenario::default(),
            radar: RadarConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorConfig {
    /// Model file; `<out>/model.json` when unset.
    pub model: Option<PathBuf>,
    pub conditions: Vec<String>,
    pub sensors: Vec<String>,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            model: None,
            conditions: vec!["all".into()],
            sensors: all_sensor_names(),
        }
    }
}

fn all_sensor_names() -> Vec<String> {
    Sensor::ALL.iter().map(|s| s.as_str().to_string()).collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// `--seed`, then the file, then the environment, then 0.
    pub fn resolve_seed(&self, flag: Option<u64>) -> anyhow::Result<u64> {
        if let Some(s) = flag.or(self.seed) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}='{v}' is not an unsigned integer")),
            Err(_) => Ok(0),
        }
    }
}

/// Parses a list of sensor names; an empty list is an error.
pub fn parse_sensors(names: &[String]) -> anyhow::Result<Vec<Sensor>> {
    if names.is_empty() {
        bail!("no sensors selected");
    }
    let mut out = Vec::new();
    for n in names {
        let s = Sensor::parse(n.trim())?;
        if !out.contains(&s) {
            out.push(s);
        }
    }
    Ok(out)
}

/// Expands `all` and checks every tag.
pub fn parse_conditions(tags: &[String]) -> anyhow::Result<Vec<WeatherCondition>> {
    if tags.iter().any(|t| t == "all") {
        return Ok(WeatherCondition::matrix());
    }
    if tags.is_empty() {
        bail!("no conditions selected");
    }
    let mut out: Vec<WeatherCondition> = Vec::new();
    for t in tags {
        let w = WeatherCondition::parse_tag(t.trim())?;
        if !out.contains(&w) {
            out.push(w);
        }
    }
    Ok(out)
}

/// Splits comma-separated flag values.
pub fn split_list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}
