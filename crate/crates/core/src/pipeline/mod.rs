//! Dataset-level commands built from the per-frame analysis: feature
//! extraction and labeling, tree training, monitoring and reports.

pub mod analysis;
pub mod extract;
pub mod monitor;
mod plot;
pub mod report;
pub mod train;

pub use analysis::{analyze_camera, analyze_dataset, analyze_lidar, analyze_radar, simulate_and_analyze, DatasetAnalysis, FrameAnalysis};
pub use extract::{extract, label_frames, write_extract, ExtractConfig, ExtractOutput, ThresholdSet};
pub use monitor::{monitor_dataset, monitor_frame, BinVerdict, MonitorRecord, MonitorSummary};
pub use report::{report, write_report, CurvePoint, Report};
pub use train::{read_extract, train, write_training, TrainConfig, TrainOutput, TrainingReport};

/// Conditions whose tag starts with this prefix define the dry baseline.
pub const DRY_PREFIX: &str = "dry";
