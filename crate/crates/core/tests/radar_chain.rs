use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use weathersense::radar::{process_cube, ChainConfig};
use weathersense::sim::{synthesize_cube, Scatterer};
use weathersense::types::{Detection, RadarConfig};

fn strongest_near<'a>(dets: &'a [Detection], range: f64) -> Option<&'a Detection> {
    dets.iter()
        .filter(|d| (d.range - range).abs() < 0.5)
        .max_by(|a, b| a.power.total_cmp(&b.power))
}

#[test]
fn separated_targets_are_each_recovered() {
    let cfg = RadarConfig::default();
    let targets = [
        Scatterer::polar(4.0, (-20f64).to_radians(), 2.0, 1.0),
        Scatterer::polar(12.5, 5f64.to_radians(), -3.0, 1.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cube = synthesize_cube(&cfg, &targets, 0.01, Some(&mut rng));
    let r = process_cube(&cube, &cfg, &ChainConfig::default()).unwrap();
    for t in targets {
        let d = strongest_near(&r.detections, t.range).expect("target detected");
        assert!((d.range - t.range).abs() <= cfg.range_resolution());
        assert!((d.radial_velocity - t.radial_velocity).abs() <= cfg.velocity_resolution());
        assert!((d.azimuth - t.azimuth()).abs().to_degrees() <= 1.5, "{} vs {}", d.azimuth, t.azimuth());
    }
    assert!(r.clusters.len() >= 2);
    assert!(r.clusters[0].min_range <= r.clusters[1].min_range);
}

#[test]
fn noise_only_cube_raises_few_alarms() {
    let cfg = RadarConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cube = synthesize_cube(&cfg, &[], 0.01, Some(&mut rng));
    let r = process_cube(&cube, &cfg, &ChainConfig::default()).unwrap();
    let cells = r.map.num_range_bins * r.map.num_velocity_bins;
    assert!((r.flagged.len() as f64) < 3e-3 * cells as f64, "{} of {cells}", r.flagged.len());
}
