//! One GA run per tree over the labeled samples, with a seeded held-out
//! split for the report.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fuzzy::{FeatureNorms, FuzzyTree, MonitorModel, TreeModel};
use crate::ga::{evolve, TrainingSample};
use crate::ga::GaConfig;
use crate::labeling::{feature_names, LabeledSample};
use crate::sim::mix;
use crate::types::{grade_from_score, Grade, Sensor, NUM_DISTANCE_BINS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// `ga.seed` also seeds the split.
    pub ga: GaConfig,
    pub test_fraction: f64,
    /// Training rows per tree handed to the GA; larger sets are thinned by
    /// a seeded per-grade draw. 0 keeps everything.
    pub max_train_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ga: GaConfig::default(),
            test_fraction: 0.2,
            max_train_samples: 240,
        }
    }
}

/// Rows are true grades, columns predicted grades, both Poor..Good.
pub type Confusion = [[usize; 3]; 3];

fn confusion_accuracy(c: &Confusion) -> Option<f64> {
    let total: usize = c.iter().flatten().sum();
    (total > 0).then(|| (0..3).map(|i| c[i][i]).sum::<usize>() as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeReport {
    pub sensor: Sensor,
    pub distance_bin: Option<usize>,
    pub train_samples: usize,
    pub test_samples: usize,
    pub best_fitness: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReport {
    pub sensor: Sensor,
    pub test_samples: usize,
    pub test_accuracy: Option<f64>,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub seed: u64,
    pub generations: usize,
    pub sensors: Vec<SensorReport>,
    pub trees: Vec<TreeReport>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: MonitorModel,
    pub report: TrainingReport,
    /// Best fitness per generation of every trained tree.
    pub histories: Vec<(Sensor, Option<usize>, Vec<f64>)>,
}

fn tree_keys() -> Vec<(Sensor, Option<usize>)> {
    Sensor::ALL
        .iter()
        .flat_map(|&s| {
            if s.is_binned() {
                (0..NUM_DISTANCE_BINS).map(|b| (s, Some(b))).collect::<Vec<_>>()
            } else {
                vec![(s, None)]
            }
        })
        .collect()
}

/// Per-grade shuffle, then the first `round(n * fraction)` of each grade go
/// to the test set, keeping at least one training sample overall.
fn split(samples: &[&LabeledSample], fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for g in Grade::ALL {
        let mut idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].label.grade == g).collect();
        idx.shuffle(rng);
        let k = (idx.len() as f64 * fraction).round() as usize;
        test.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    if train.is_empty() && !test.is_empty() {
        train.push(test.remove(0));
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Keeps about `cap` of `idx`, each grade in proportion but at least one.
fn thin(samples: &[&LabeledSample], idx: &[usize], cap: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut kept = Vec::with_capacity(cap);
    for g in Grade::ALL {
        let mut of_g: Vec<usize> = idx.iter().copied().filter(|&i| samples[i].label.grade == g).collect();
        if of_g.is_empty() {
            continue;
        }
        let k = ((of_g.len() * cap) as f64 / idx.len() as f64).round().max(1.0) as usize;
        of_g.shuffle(rng);
        kept.extend_from_slice(&of_g[..k.min(of_g.len())]);
    }
    kept.sort_unstable();
    kept
}

fn prepare(samples: &[&LabeledSample], idx: &[usize], norms: &FeatureNorms) -> Result<Vec<TrainingSample>> {
    idx.iter()
        .map(|&i| {
            Ok(TrainingSample {
                features: norms.normalize(&samples[i].features)?.values,
                grade: samples[i].label.grade,
            })
        })
        .collect()
}

fn predict(tree: &FuzzyTree, s: &TrainingSample) -> Grade {
    grade_from_score(tree.score(&s.features)).map_or(Grade::Poor, |l| l.grade)
}

/// Trains every radar and lidar bin tree and the camera tree. Trees without
/// samples keep the canonical configuration.
pub fn train(samples: &[LabeledSample], cfg: &TrainConfig) -> Result<TrainOutput> {
    if !(0.0..1.0).contains(&cfg.test_fraction) {
        return Err(Error::domain("test_fraction must lie in [0, 1)"));
    }
    cfg.ga.validate()?;
    let mut trees = Vec::new();
    let mut reports = Vec::new();
    let mut histories = Vec::new();
    for (key, (sensor, bin)) in tree_keys().into_iter().enumerate() {
        let names = feature_names(sensor);
        let leaves: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        let mine: Vec<&LabeledSample> = samples
            .iter()
            .filter(|s| s.sensor == sensor && s.distance_bin == bin)
            .collect();
        for s in &mine {
            s.validate()?;
        }
        let tree_seed = mix(cfg.ga.seed ^ mix(key as u64 + 1));
        let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
        let (mut train_idx, test_idx) = split(&mine, cfg.test_fraction, &mut rng);
        if cfg.max_train_samples > 0 && train_idx.len() > cfg.max_train_samples {
            train_idx = thin(&mine, &train_idx, cfg.max_train_samples, &mut rng);
        }
        let norms = FeatureNorms::fit(train_idx.iter().map(|&i| mine[i].features.as_slice()), names.len());
        let train_set = prepare(&mine, &train_idx, &norms)?;
        let test_set = prepare(&mine, &test_idx, &norms)?;

        let (tree, best_fitness) = if train_set.is_empty() {
            log::warn!("no samples for the {sensor} tree {bin:?}; keeping the canonical tree");
            let names: Vec<&str> = names.to_vec();
            (FuzzyTree::canonical(&names)?, None)
        } else {
            let ga = GaConfig {
                seed: tree_seed,
                ..cfg.ga.clone()
            };
            let e = evolve(&ga, &train_set, leaves.len())?;
            histories.push((sensor, bin, e.history.clone()));
            (e.best.to_tree(leaves)?, Some(e.best_fitness))
        };

        let mut confusion = [[0usize; 3]; 3];
        for s in &test_set {
            confusion[s.grade.index()][predict(&tree, s).index()] += 1;
        }
        let train_hits = train_set.iter().filter(|s| predict(&tree, s) == s.grade).count();
        reports.push(TreeReport {
            sensor,
            distance_bin: bin,
            train_samples: train_set.len(),
            test_samples: test_set.len(),
            best_fitness,
            train_accuracy: (!train_set.is_empty()).then(|| train_hits as f64 / train_set.len() as f64),
            test_accuracy: confusion_accuracy(&confusion),
            confusion,
        });
        trees.push(TreeModel {
            sensor,
            distance_bin: bin,
            tree,
            norms,
        });
    }

    let sensors = Sensor::ALL
        .iter()
        .map(|&s| {
            let mut confusion = [[0usize; 3]; 3];
            for r in reports.iter().filter(|r| r.sensor == s) {
                for i in 0..3 {
                    for j in 0..3 {
                        confusion[i][j] += r.confusion[i][j];
                    }
                }
            }
            SensorReport {
                sensor: s,
                test_samples: confusion.iter().flatten().sum(),
                test_accuracy: confusion_accuracy(&confusion),
                confusion,
            }
        })
        .collect();
    let model = MonitorModel::new(trees);
    model.validate()?;
    Ok(TrainOutput {
        model,
        report: TrainingReport {
            seed: cfg.ga.seed,
            generations: cfg.ga.generations,
            sensors,
            trees: reports,
        },
        histories,
    })
}

pub const MODEL_FILE: &str = "model.json";
pub const HISTORY_FILE: &str = "fitness_history.csv";
pub const REPORT_FILE: &str = "training_report.json";

/// Writes the model, the fitness histories (one row per tree and
/// generation) and the training report.
pub fn write_training(dir: &Path, out: &TrainOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    out.model.save(&dir.join(MODEL_FILE))?;
    let p = dir.join(HISTORY_FILE);
    let mut w = csv::Writer::from_writer(Vec::new());
    let bad = |e: csv::Error| Error::format(&p, e.to_string());
    w.write_record(["sensor", "bin", "generation", "best_fitness"]).map_err(bad)?;
    for (sensor, bin, h) in &out.histories {
        for (g, f) in h.iter().enumerate() {
            let bin = bin.map(|b| b.to_string()).unwrap_or_default();
            w.write_record([sensor.as_str(), &bin, &g.to_string(), &f.to_string()]).map_err(bad)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::format(&p, e.to_string()))?;
    let mut f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&p, e))?;
    let p = dir.join(REPORT_FILE);
    std::fs::write(&p, serde_json::to_string_pretty(&out.report)?).map_err(|e| Error::io(p, e))
}

/// Reads `features.csv` and `labels.csv` from `dir`.
pub fn read_extract(dir: &Path) -> Result<Vec<LabeledSample>> {
    use super::extract::{FEATURES_FILE, LABELS_FILE};
    let open = |name: &str| {
        let p = dir.join(name);
        std::fs::File::open(&p).map(std::io::BufReader::new).map_err(|e| Error::io(p, e))
    };
    crate::labeling::read_samples(open(FEATURES_FILE)?, open(LABELS_FILE)?, &dir.join(LABELS_FILE))
}
