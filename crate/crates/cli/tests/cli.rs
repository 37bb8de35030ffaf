use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn ws(out: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_weathersense"));
    cmd.env_remove("WEATHERSENSE_SEED").env_remove("WEATHERSENSE_LOG");
    cmd.arg("--out").arg(out).args(args);
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert_eq!(code(&o), 0, "stderr: {}", stderr(&o));
    o
}

fn simulate(out: &Path, conditions: &str, sensors: &str, frames: usize) {
    ok(ws(out, &["simulate", "--conditions", conditions, "--sensors", sensors, "--frames", &frames.to_string()]));
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("dataset/manifest.json")).unwrap()).unwrap()
}

fn label_grades(out: &Path) -> Vec<String> {
    let text = fs::read_to_string(out.join("labels.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "label").unwrap();
    lines.map(|l| l.split(',').nth(col).unwrap().to_string()).collect()
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    assert_eq!(code(&ws(out, &["--help"])), 0);
    assert_eq!(code(&ws(out, &["frobnicate"])), 2);
    assert_eq!(code(&ws(out, &["simulate", "--frames", "0"])), 2);
    assert_eq!(code(&ws(out, &["simulate", "--conditions", "drizzle_day"])), 2);
    assert_eq!(code(&ws(out, &["train", "--population", "0"])), 2);

    let cfg = out.join("bad.json");
    fs::write(&cfg, r#"{"simulate": {"frame": 3}}"#).unwrap();
    let o = ws(out, &["--config", cfg.to_str().unwrap(), "simulate"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("frame"), "{}", stderr(&o));
}

#[test]
fn simulate_writes_every_frame_and_is_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        simulate(d.path(), "dry_day,fog_night", "lidar,camera", 3);
    }
    let m = manifest(a.path());
    assert_eq!(m["entries"].as_array().unwrap().len(), 2 * 2 * 3);
    assert_eq!(m, manifest(b.path()));
    for e in m["entries"].as_array().unwrap() {
        let rel = e["file"].as_str().unwrap();
        let x = fs::read(a.path().join("dataset").join(rel)).unwrap();
        let y = fs::read(b.path().join("dataset").join(rel)).unwrap();
        assert!(x == y, "{rel} differs between runs");
    }
}

#[test]
fn seed_precedence() {
    let seed_of = |out: &Path| manifest(out)["cells"][0]["scenario"]["seed"].as_u64().unwrap();
    let run = |env: Option<&str>, flag: Option<&str>| {
        let dir = TempDir::new().unwrap();
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_weathersense"));
        cmd.env_remove("WEATHERSENSE_SEED");
        if let Some(v) = env {
            cmd.env("WEATHERSENSE_SEED", v);
        }
        cmd.arg("--out").arg(dir.path());
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        cmd.args(["simulate", "--conditions", "dry_day", "--sensors", "camera", "--frames", "1"]);
        let o = cmd.output().unwrap();
        (code(&o), (code(&o) == 0).then(|| seed_of(dir.path())))
    };
    assert_eq!(run(None, None), (0, Some(0)));
    assert_eq!(run(Some("7"), None), (0, Some(7)));
    assert_eq!(run(Some("7"), Some("9")), (0, Some(9)));
    assert_eq!(run(Some("seven"), None).0, 2);
}

#[test]
fn dry_extract_is_mostly_good() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    simulate(out, "dry_day", "lidar,camera", 20);
    ok(ws(out, &["extract"]));
    let grades = label_grades(out);
    assert!(!grades.is_empty());
    let good = grades.iter().filter(|g| *g == "good").count();
    assert!(good as f64 >= 0.9 * grades.len() as f64, "{good} of {} good", grades.len());
    assert!(out.join("thresholds.json").exists());
}

#[test]
fn empty_manifest_gives_empty_tables() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    simulate(out, "dry_day", "camera", 1);
    let mut m = manifest(out);
    m["entries"] = serde_json::json!([]);
    fs::write(out.join("dataset/manifest.json"), serde_json::to_string(&m).unwrap()).unwrap();
    ok(ws(out, &["extract"]));
    assert_eq!(fs::read_to_string(out.join("labels.csv")).unwrap().lines().count(), 1);
    assert_eq!(fs::read_to_string(out.join("features.csv")).unwrap().lines().count(), 1);
}

#[test]
fn missing_and_corrupt_frames() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    simulate(out, "dry_day", "lidar", 3);
    let m = manifest(out);
    let files: Vec<String> = m["entries"].as_array().unwrap().iter().map(|e| e["file"].as_str().unwrap().to_string()).collect();

    let gone = out.join("dataset").join(&files[2]);
    let kept = fs::read(&gone).unwrap();
    fs::remove_file(&gone).unwrap();
    let o = ws(out, &["extract"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("missing frame"), "{}", stderr(&o));
    ok(ws(out, &["extract", "--lenient"]));
    fs::write(&gone, kept).unwrap();

    let bad = out.join("dataset").join(&files[1]);
    fs::write(&bad, "x,y,z,intensity\n1,2,not-a-number,0.5\n").unwrap();
    let o = ws(out, &["extract", "--lenient"]);
    assert_eq!(code(&o), 1);
    let name = Path::new(&files[1]).file_name().unwrap().to_str().unwrap();
    assert!(stderr(&o).contains(name), "{}", stderr(&o));
}

#[test]
fn pipeline_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    let first = root.join("a");
    let second = root.join("b");
    simulate(&first, "dry_day,heavy_rain_day", "lidar,camera", 4);
    ok(ws(&first, &["extract"]));

    let train = ["train", "--generations", "3", "--population", "8"];
    ok(ws(&first, &["--seed", "4"].iter().chain(train.iter()).copied().collect::<Vec<_>>()));
    let input = first.to_str().unwrap();
    let mut again = vec!["--seed", "4"];
    again.extend(train);
    again.extend(["--input", input]);
    ok(ws(&second, &again));
    for f in ["model.json", "fitness_history.csv", "training_report.json"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }

    let o = ok(ws(&first, &["train", "--generations", "0"]));
    assert!(stderr(&o).contains("0 generations"), "{}", stderr(&o));

    ok(ws(&first, &["monitor", "--sensors", "lidar,camera"]));
    let records = fs::read_to_string(first.join("monitor/monitor.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 2 * 2 * 4);
    for line in records.lines() {
        let r: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(["lidar", "camera"].contains(&r["sensor"].as_str().unwrap()));
    }

    let dataset = first.join("dataset");
    let ds = dataset.to_str().unwrap();
    ok(ws(&first, &["report"]));
    ok(ws(&second, &["report", "--dataset", ds]));
    assert_eq!(
        fs::read(first.join("report/curves.csv")).unwrap(),
        fs::read(second.join("report/curves.csv")).unwrap()
    );
}
