use tempfile::TempDir;
use weathersense::fuzzy::MonitorModel;
use weathersense::pipeline::{
    analyze_dataset, extract, label_frames, monitor_dataset, monitor_frame, read_extract, report, simulate_and_analyze,
    train, write_extract, write_report, ExtractConfig, FrameAnalysis, ThresholdSet, TrainConfig,
};
use weathersense::radar::ChainConfig;
use weathersense::sim::{generate_dataset, DatasetManifest, Scenario, WeatherPresets};
use weathersense::types::{Grade, Light, RadarConfig, Sensor, WeatherCondition, WeatherKind, NUM_DISTANCE_BINS};

fn conditions() -> Vec<WeatherCondition> {
    vec![
        WeatherCondition::preset(WeatherKind::Dry, Light::Day),
        WeatherCondition::preset(WeatherKind::Fog, Light::Day),
    ]
}

fn in_memory(sensor: Sensor, w: &WeatherCondition, frames: usize) -> Vec<FrameAnalysis> {
    let s = Scenario::default().with_seed(2);
    simulate_and_analyze(
        sensor,
        &s,
        w,
        0..frames,
        &RadarConfig::default(),
        &WeatherPresets::default(),
        &ChainConfig::default(),
    )
    .unwrap()
    .into_iter()
    .map(|x| x.0)
    .collect()
}

fn small_train_config() -> TrainConfig {
    let mut tc = TrainConfig::default();
    tc.ga.population = 12;
    tc.ga.generations = 8;
    tc.ga.seed = 1;
    tc
}

#[test]
fn dataset_on_disk_matches_in_memory_analysis() {
    let dir = TempDir::new().unwrap();
    let matrix: Vec<_> = conditions().into_iter().map(|w| (w, Scenario::default().with_seed(2))).collect();
    let sensors = [Sensor::Lidar, Sensor::Camera];
    let presets = WeatherPresets::default();
    let m = generate_dataset(dir.path(), &matrix, 3, &sensors, &RadarConfig::default(), &presets).unwrap();
    assert_eq!(m.entries.len(), 2 * 2 * 3);
    assert_eq!(DatasetManifest::load(dir.path()).unwrap(), m);

    let a = analyze_dataset(dir.path(), &m, &sensors, &presets, &ChainConfig::default(), false).unwrap();
    assert!(a.missing.is_empty());
    for (w, _) in &matrix {
        for s in sensors {
            let disk: Vec<&FrameAnalysis> = a.frames.iter().filter(|f| f.sensor == s && f.condition == w.tag()).collect();
            let mem = in_memory(s, w, 3);
            assert_eq!(disk.len(), mem.len());
            for (d, m) in disk.iter().zip(&mem) {
                assert_eq!(d.frame, m.frame);
                assert_eq!(d.valid, m.valid);
                // Camera frames are stored with 8 bits per channel.
                let tol = if s == Sensor::Camera { 5e-2 } else { 1e-9 };
                for (k, v) in &m.metrics {
                    let got = d.metrics[k];
                    assert!((got - v).abs() <= tol * v.abs().max(0.05), "{k}: {got} vs {v}");
                }
            }
        }
    }
}

#[test]
fn extract_tables_round_trip() {
    let dir = TempDir::new().unwrap();
    let root = dir.path().join("dataset");
    let matrix: Vec<_> = conditions().into_iter().map(|w| (w, Scenario::default())).collect();
    let presets = WeatherPresets::default();
    generate_dataset(&root, &matrix, 4, &[Sensor::Lidar, Sensor::Camera], &RadarConfig::default(), &presets).unwrap();
    let out = extract(&root, &presets, &ExtractConfig::default()).unwrap();
    assert!(!out.samples.is_empty());
    write_extract(dir.path(), &out).unwrap();
    assert_eq!(read_extract(dir.path()).unwrap(), out.samples);
}

#[test]
fn labels_follow_the_vehicle_pass() {
    let mut frames = Vec::new();
    for w in conditions() {
        frames.extend(in_memory(Sensor::Lidar, &w, 50));
    }
    let t = ThresholdSet::fit(&frames, &ExtractConfig::default()).unwrap();
    let samples = label_frames(&frames, &t).unwrap();
    for s in &samples {
        let f = frames.iter().find(|f| f.condition == s.condition && f.frame == s.frame).unwrap();
        let bin = s.distance_bin.unwrap();
        assert!(f.valid[bin], "row for an invalid bin");
        assert_eq!(s.features, f.bins[bin]);
    }
    // Every row of one (condition, bin) carries the same label.
    for s in &samples {
        let first = samples
            .iter()
            .find(|x| x.condition == s.condition && x.distance_bin == s.distance_bin)
            .unwrap();
        assert_eq!(first.label, s.label);
    }
    let dry: Vec<_> = samples.iter().filter(|s| s.condition.starts_with("dry")).collect();
    let good = dry.iter().filter(|s| s.label.grade == Grade::Good).count();
    assert!(good as f64 >= 0.9 * dry.len() as f64, "{good}/{}", dry.len());
}

#[test]
fn trained_model_grades_every_valid_bin() {
    let mut frames = Vec::new();
    for w in conditions() {
        frames.extend(in_memory(Sensor::Lidar, &w, 20));
        frames.extend(in_memory(Sensor::Camera, &w, 20));
    }
    let t = ThresholdSet::fit(&frames, &ExtractConfig::default()).unwrap();
    let samples = label_frames(&frames, &t).unwrap();
    let out = train(&samples, &small_train_config()).unwrap();
    assert_eq!(out.model.trees.len(), 2 * NUM_DISTANCE_BINS + 1);
    assert_eq!(out.report.sensors.len(), 3);

    let dir = TempDir::new().unwrap();
    let path = dir.path().join("model.json");
    out.model.save(&path).unwrap();
    let loaded = MonitorModel::load(&path).unwrap();
    assert_eq!(loaded.to_json().unwrap(), out.model.to_json().unwrap());

    for a in &frames {
        let r = monitor_frame(&loaded, a).unwrap();
        assert_eq!(r.bins.len(), a.bins.len());
        for (v, ok) in r.bins.iter().zip(&a.valid) {
            assert_eq!(v.grade.is_some(), *ok);
            if let Some(s) = v.score {
                assert!((0.0..=1.0).contains(&s));
            }
        }
    }
}

#[test]
fn monitor_writes_one_record_per_frame() {
    let dir = TempDir::new().unwrap();
    let root = dir.path().join("dataset");
    let presets = WeatherPresets::default();
    let matrix: Vec<_> = [WeatherKind::Dry, WeatherKind::HeavyRain]
        .into_iter()
        .map(|k| (WeatherCondition::preset(k, Light::Day), Scenario::default()))
        .collect();
    generate_dataset(&root, &matrix, 2, &Sensor::ALL, &RadarConfig::default(), &presets).unwrap();
    let samples = extract(&root, &presets, &ExtractConfig::default()).unwrap().samples;
    let mut tc = small_train_config();
    tc.ga.generations = 0;
    let model = train(&samples, &tc).unwrap().model;

    let out = dir.path().join("monitor");
    let keep = vec!["heavy_rain_day".to_string()];
    let s = monitor_dataset(&root, &model, &presets, &ChainConfig::default(), Some(&keep), &Sensor::ALL, &out).unwrap();
    assert_eq!(s.records, 3 * 2);
    assert_eq!(s.grid_maps, 2);
    let text = std::fs::read_to_string(out.join("monitor.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.lines().all(|l| l.contains("heavy_rain_day")));
    assert!(out.join("gridmaps/heavy_rain_day").is_dir());
}

#[test]
fn report_aggregates_by_condition_and_bin() {
    let mut frames = Vec::new();
    for w in conditions() {
        frames.extend(in_memory(Sensor::Lidar, &w, 10));
    }
    let r = report(&frames);
    assert_eq!(r.conditions, vec!["dry_day", "fog_day"]);
    let total = r.total("lidar_ground_count", "dry_day").unwrap();
    let direct = frames
        .iter()
        .filter(|f| f.condition == "dry_day")
        .map(|f| f.metrics["lidar_ground_count"])
        .sum::<f64>()
        / 10.0;
    assert!((total - direct).abs() < 1e-9);
    // Frames with the vehicle at 20 m or beyond fall outside every bin.
    let binned = frames.iter().filter(|f| f.condition == "dry_day" && f.vehicle_distance < 20.0).count();
    let counted: usize = r.curve("lidar_ground_count", "dry_day").iter().map(|p| p.count).sum();
    assert_eq!(counted, binned);

    let dir = TempDir::new().unwrap();
    write_report(dir.path(), &r).unwrap();
    for f in ["curves.csv", "totals.csv", "legend.csv", "lidar_ground_count.ppm"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}
