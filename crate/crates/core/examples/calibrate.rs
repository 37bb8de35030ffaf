//! Prints per-condition statistics of the simulators, used to tune
//! `config/weather_presets.json`.
//!
//! `cargo run --release -p weathersense-core --example calibrate [radar|lidar|camera|gridmap|extent]`

use weathersense::camera::{camera_features, proxy_detect};
use weathersense::gridmap::frame_grid_maps;
use weathersense::lidar::{dispersion, ground_count, lidar_features, mean_intensity, min_max_distance};
use weathersense::radar::{process_cube, ChainConfig};
use weathersense::sim::camera::{render_vehicle_template, simulate_camera_frame_with};
use weathersense::sim::lidar::simulate_lidar_frame_with;
use weathersense::sim::radar::simulate_radar_frame_with;
use weathersense::sim::{Scenario, WeatherPresets};
use weathersense::types::{Light, RadarConfig, WeatherCondition, WeatherKind};

fn radar(p: &WeatherPresets) {
    let cfg = RadarConfig::default();
    let chain = ChainConfig::default();
    for kind in [WeatherKind::Dry, WeatherKind::Fog, WeatherKind::LightRain, WeatherKind::HeavyRain] {
        let w = WeatherCondition::preset(kind, Light::Day);
        for frame in [0, 15, 30, 45] {
            let s = Scenario::default().with_seed(3);
            let (cube, scene) = simulate_radar_frame_with(&cfg, &s, &w, frame, p).unwrap();
            let r = process_cube(&cube, &cfg, &chain).unwrap();
            let d = s.vehicle_distance(frame);
            let v = -s.vehicle_speed(frame);
            let veh = r
                .detections
                .iter()
                .filter(|det| det.range >= d - 1.0 && det.range <= d + 5.2 && (det.radial_velocity - v).abs() <= 1.5)
                .count();
            let ext = r.features.first().map(|f| f.rain_extent_estimate).unwrap_or(f64::NAN);
            print!(
                "{:>10} f{frame:<2} d={d:5.2} rain_sc={:4} flagged={:4} det_veh={veh:3} clusters={:3} extent={ext:5.2}",
                w.tag(),
                scene.rain.len(),
                r.flagged.len(),
                r.clusters.len()
            );
            if let Some(c) = r.nearest_cluster() {
                print!(
                    " nearest[r {:.2}..{:.2} v {:.2}..{:.2} n={}]",
                    c.min_range, c.max_range, c.min_velocity, c.max_velocity, c.size
                );
            }
            println!();
            for c in r.clusters.iter().take(6) {
                println!(
                    "      cluster r {:.2}..{:.2} v {:.2}..{:.2} n={} zero={}",
                    c.min_range, c.max_range, c.min_velocity, c.max_velocity, c.size, c.contains_zero_velocity
                );
            }
        }
    }
}

fn lidar(p: &WeatherPresets) {
    for kind in [WeatherKind::Dry, WeatherKind::Fog, WeatherKind::LightRain, WeatherKind::HeavyRain] {
        let w = WeatherCondition::preset(kind, Light::Day);
        let s = Scenario::default().with_seed(3);
        let (mut g, mut disp, mut inten, mut n, mut mind) = (0.0, 0.0, 0.0, 0.0, f64::INFINITY);
        let frames = 50;
        let mut prev = None;
        let mut nvalid = 0;
        for frame in 0..frames {
            let c = simulate_lidar_frame_with(&s, &w, frame, p).unwrap();
            g += ground_count(&c, &s.roi) as f64;
            disp += dispersion(&c, &s.label_box_at(frame)).value().unwrap_or(0.0);
            inten += mean_intensity(&c, &s.roi).unwrap_or(0.0);
            n += c.len() as f64;
            mind = mind.min(min_max_distance(&c).map_or(f64::NAN, |m| m.0));
            nvalid += lidar_features(&c, prev.as_ref(), &s.roi).iter().filter(|f| f.valid()).count();
            prev = Some(c);
        }
        let k = frames as f64;
        println!(
            "{:>10} ground={:7.0} disp={:6.3} intensity={:6.4} points={:7.0} min_dist={mind:5.2} valid_bins/frame={:.1}",
            w.tag(),
            g / k,
            disp / k,
            inten / k,
            n / k,
            nvalid as f64 / k
        );
    }
}

fn camera(p: &WeatherPresets) {
    for w in WeatherCondition::matrix() {
        let s = Scenario::default().with_seed(3);
        let (mut b, mut c, mut sh, mut conf, mut iou, mut score) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let frames = [0, 10, 20, 30, 40, 48];
        for &f in &frames {
            let (img, truth) = simulate_camera_frame_with(&s, &w, f, p).unwrap();
            let feat = camera_features(&img).unwrap();
            let t = render_vehicle_template(&s, f, p).unwrap();
            let det = proxy_detect(&img, &t, &truth.bbox).unwrap();
            b += feat.brightness;
            c += feat.contrast;
            sh += feat.sharpness;
            conf += det.confidence;
            iou += det.iou;
            score += det.confidence * det.iou;
        }
        let k = frames.len() as f64;
        println!(
            "{:>16} brightness={:.3} contrast={:.4} sharpness={:.6} conf={:.3} iou={:.3} score={:.3}",
            w.tag(),
            b / k,
            c / k,
            sh / k,
            conf / k,
            iou / k,
            score / k
        );
    }
}

/// ASCII range-Doppler picture of one heavy-rain frame: `#` flagged,
/// digits = power above the median in 5 dB steps.
fn rdmap(p: &WeatherPresets, kind: WeatherKind) {
    let cfg = RadarConfig::default();
    let w = WeatherCondition::preset(kind, Light::Day);
    let env = |k: &str, d: u64| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let s = Scenario::default().with_seed(env("WS_SEED", 3));
    let (cube, _) = simulate_radar_frame_with(&cfg, &s, &w, env("WS_FRAME", 0) as usize, p).unwrap();
    let r = process_cube(&cube, &cfg, &ChainConfig::default()).unwrap();
    let mut all: Vec<f64> = r.map.cells.clone();
    all.sort_by(f64::total_cmp);
    let med = all[all.len() / 2];
    let z = r.map.zero_velocity_bin();
    for rb in 0..130 {
        let mut line = format!("{:5.2} ", r.map.range_axis[rb]);
        for vb in z - 14..=z + 14 {
            let c = if r.flagged.contains(&(rb, vb)) {
                '#'
            } else {
                let db = 10.0 * (r.map.get(rb, vb) / med).log10();
                let k = (db / 5.0).floor().clamp(0.0, 9.0) as u8;
                if k == 0 { '.' } else { (b'0' + k) as char }
            };
            line.push(c);
        }
        println!("{line}");
    }
}

/// Nearest-cluster rain extent per frame for both rain presets.
fn extent(p: &WeatherPresets) {
    let cfg = RadarConfig::default();
    for kind in [WeatherKind::LightRain, WeatherKind::HeavyRain] {
        let w = WeatherCondition::preset(kind, Light::Day);
        let s = Scenario::default().with_seed(3);
        let mut v = Vec::new();
        let mut span = 0.0;
        let mut flagged = 0;
        for frame in (0..50).step_by(3) {
            let (cube, _) = simulate_radar_frame_with(&cfg, &s, &w, frame, p).unwrap();
            let r = process_cube(&cube, &cfg, &ChainConfig::default()).unwrap();
            v.push(r.features[0].rain_extent_estimate);
            span += r.nearest_cluster().map_or(0.0, |c| c.velocity_span);
            flagged += r.flagged.len();
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let txt: Vec<String> = v.iter().map(|x| format!("{x:.1}")).collect();
        println!(
            "{:>10} mean={mean:.2} vspan={:.2} flagged={} [{}]",
            w.tag(),
            span / v.len() as f64,
            flagged / v.len(),
            txt.join(" ")
        );
    }
}

/// Grid-map extent and velocity span over 50 frames for a few seeds.
fn gridmaps(p: &WeatherPresets) {
    let cfg = RadarConfig::default();
    for kind in [WeatherKind::Dry, WeatherKind::LightRain, WeatherKind::HeavyRain] {
        let w = WeatherCondition::preset(kind, Light::Day);
        if std::env::var("WS_ONLY").is_ok_and(|o| !w.tag().starts_with(&o)) {
            continue;
        }
        for seed in 1..=3 {
            let s = Scenario::default().with_seed(seed);
            let (mut ext, mut span, mut zero) = (0.0, 0.0, 0);
            for frame in 0..50 {
                let (cube, _) = simulate_radar_frame_with(&cfg, &s, &w, frame, p).unwrap();
                let r = process_cube(&cube, &cfg, &ChainConfig::default()).unwrap();
                let g = frame_grid_maps(&r, &s.roi, frame);
                ext += g.disturbed_extent();
                span += g.velocity_span();
                if g.is_all_clear() && kind != WeatherKind::Dry {
                    zero += 1;
                    if std::env::var("WS_VERBOSE").is_ok() {
                        let c = r.nearest_cluster().unwrap();
                        println!(
                            "    clear f{frame}: nearest r {:.2}..{:.2} v {:.2}..{:.2} n={} flagged={}",
                            c.min_range, c.max_range, c.min_velocity, c.max_velocity, c.size, r.flagged.len()
                        );
                    }
                }
            }
            println!("{:>10} seed={seed} extent={:.2} vspan={:.2} clear_frames={zero}", w.tag(), ext / 50.0, span / 50.0);
        }
    }
}

/// In-memory extract, train and monitor over the condition matrix.
fn pipeline(p: &WeatherPresets) {
    use weathersense::pipeline::{label_frames, monitor_frame, simulate_and_analyze, train, ThresholdSet, ExtractConfig, TrainConfig};
    use weathersense::types::{Grade, Sensor};
    let cfg = RadarConfig::default();
    let chain = ChainConfig::default();
    let env = |k: &str, d: u64| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let runs = env("WS_RUNS", 2);
    let sensors: Vec<Sensor> = match std::env::var("WS_SENSORS") {
        Ok(s) => s.split(',').map(|x| Sensor::parse(x).unwrap()).collect(),
        Err(_) => vec![Sensor::Lidar, Sensor::Camera],
    };
    let t0 = std::time::Instant::now();
    let mut frames = Vec::new();
    let mut run_of = Vec::new();
    for seed in 1..=runs {
        for w in WeatherCondition::matrix() {
            for &s in &sensors {
                let sc = Scenario::default().with_seed(seed);
                for x in simulate_and_analyze(s, &sc, &w, 0..50, &cfg, p, &chain).unwrap() {
                    frames.push(x.0);
                    run_of.push(seed);
                }
            }
        }
    }
    eprintln!("simulated {} frames in {:.1}s", frames.len(), t0.elapsed().as_secs_f64());
    let th = ThresholdSet::fit(&frames, &ExtractConfig::default()).unwrap();
    println!("radar good {:?}\nlidar good {:?}", th.radar.good_min, th.lidar.good_min);
    let mut samples = Vec::new();
    for seed in 1..=runs {
        let mine: Vec<_> = frames.iter().zip(&run_of).filter(|(_, r)| **r == seed).map(|(f, _)| f.clone()).collect();
        samples.extend(label_frames(&mine, &th).unwrap());
    }
    for &s in &sensors {
        for w in WeatherCondition::matrix() {
            let mut c = [0usize; 3];
            for x in samples.iter().filter(|x| x.sensor == s && x.condition == w.tag()) {
                c[x.label.grade.index()] += 1;
            }
            println!("{s} {:>16} P/M/G {:?}", w.tag(), c);
        }
    }
    if std::env::var("WS_VERBOSE").is_ok() {
        for x in samples.iter().filter(|x| x.sensor == Sensor::Lidar && x.frame == 0) {
            println!("  label {} bin {:?} {:?} m={:?}", x.condition, x.distance_bin, x.label.grade, x.measurement);
        }
        for x in samples.iter().filter(|x| x.sensor == Sensor::Lidar && x.frame % 10 == 0 && matches!(x.distance_bin, Some(0) | Some(8))) {
            let f: Vec<String> = x.features.iter().map(|v| v.map_or("-".into(), |v| format!("{v:.3}"))).collect();
            println!("  feat {:>16} f{:2} bin {:?} {:?} [{}]", x.condition, x.frame, x.distance_bin, x.label.grade, f.join(" "));
        }
    }
    let t0 = std::time::Instant::now();
    let mut tc = TrainConfig::default();
    tc.ga.generations = env("WS_GENS", 150) as usize;
    tc.ga.seed = 5;
    let out = train(&samples, &tc).unwrap();
    eprintln!("trained in {:.1}s", t0.elapsed().as_secs_f64());
    for r in &out.report.sensors {
        println!("{} test n={} acc={:?}", r.sensor, r.test_samples, r.test_accuracy);
    }
    for r in &out.report.trees {
        println!("  {} {:?} train={} test={} fit={:?} tracc={:?} teacc={:?} conf={:?}", r.sensor, r.distance_bin, r.train_samples, r.test_samples, r.best_fitness, r.train_accuracy, r.test_accuracy, r.confusion);
    }
    let held = Scenario::default().with_seed(99);
    for w in WeatherCondition::matrix() {
        for &s in &sensors {
            let fr = simulate_and_analyze(s, &held, &w, 0..50, &cfg, p, &chain).unwrap();
            let (mut good, mut total, mut mono, mut near_good) = (0, 0, 0, 0);
            for (a, _) in &fr {
                let rec = monitor_frame(&out.model, a).unwrap();
                let gs: Vec<Option<Grade>> = rec.bins.iter().map(|b| b.grade).collect();
                good += gs.iter().filter(|g| **g == Some(Grade::Good)).count();
                total += gs.iter().filter(|g| g.is_some()).count();
                let ranks: Vec<usize> = gs.iter().flatten().map(|g| g.index()).collect();
                if ranks.windows(2).all(|w| w[1] <= w[0]) { mono += 1; }
                if gs.len() > 1 && gs[0] == Some(Grade::Good) && gs[1] == Some(Grade::Good) { near_good += 1; }
                if std::env::var("WS_VERBOSE").is_ok() && w.tag() == "fog_day" && s == Sensor::Lidar {
                    println!("    f{:2} {:?}", a.frame, ranks);
                }
            }
            println!("monitor {s} {:>16} good={good}/{total} mono={mono}/50 near_good={near_good}/50", w.tag());
        }
    }
}

/// Vehicle-box dispersion over the last frames of a run, per condition.
fn near_disp(p: &WeatherPresets) {
    use weathersense::lidar::{box_point_count, dispersion};
    use weathersense::sim::lidar::simulate_lidar_frame_with;
    for w in WeatherCondition::matrix().into_iter().filter(|w| w.light == weathersense::types::Light::Day) {
        let mut line = String::new();
        for seed in 1..=4u64 {
            let s = Scenario::default().with_seed(seed);
            for f in 40..50 {
                let c = simulate_lidar_frame_with(&s, &w, f, p).unwrap();
                let b = s.label_box_at(f);
                let d = dispersion(&c, &b).value().unwrap_or(0.0);
                if seed == 1 {
                    line.push_str(&format!(" {:.2}:{:.3}/{}", s.vehicle_distance(f), d, box_point_count(&c, &b)));
                } else if f >= 46 {
                    line.push_str(&format!(" {:.3}", d));
                }
            }
        }
        println!("{:>16}{line}", w.tag());
    }
}

fn main() {
    let p = match std::env::var("WS_PRESETS") {
        Ok(path) => WeatherPresets::load(std::path::Path::new(&path)).unwrap(),
        Err(_) => WeatherPresets::default(),
    };
    let which = std::env::args().nth(1).unwrap_or_default();
    if which.is_empty() || which == "radar" {
        radar(&p);
    }
    if which == "near" {
        near_disp(&p);
    }
    if which == "pipeline" {
        pipeline(&p);
    }
    if which == "gridmap" {
        gridmaps(&p);
    }
    if which == "extent" {
        extent(&p);
    }
    if which == "map-heavy" {
        rdmap(&p, WeatherKind::HeavyRain);
    }
    if which == "map-light" {
        rdmap(&p, WeatherKind::LightRain);
    }
    if which.is_empty() || which == "lidar" {
        lidar(&p);
    }
    if which.is_empty() || which == "camera" {
        camera(&p);
    }
}
