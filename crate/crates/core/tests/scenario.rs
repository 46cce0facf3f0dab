use std::path::PathBuf;

use rtperm::forward;
use rtperm::raytracer;
use rtperm::scenario::{self, Dataset};
use rtperm::templates::{self, CanyonParams};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/canyon.json")
}

#[test]
fn bundled_fixture_loads_with_two_materials_and_100_links() {
    let s = scenario::load_scenario(fixture()).unwrap();
    assert_eq!(s.num_materials(), 2);
    assert_eq!(s.num_links(), 100);
    assert_eq!(s.surfaces.len(), 2);
}

#[test]
fn bundled_fixture_matches_default_template() {
    let s = scenario::load_scenario(fixture()).unwrap();
    assert_eq!(s, templates::canyon(&CanyonParams::default()).unwrap());
}

#[test]
fn save_load_round_trip_is_exact() {
    let s = scenario::load_scenario(fixture()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.json");
    scenario::save_scenario(&s, &path).unwrap();
    assert_eq!(scenario::load_scenario(&path).unwrap(), s);

    let cache = raytracer::trace_all(&s);
    let d = scenario::synthesize_dataset(&s, &cache, 0.7, 11).unwrap();
    let dpath = dir.path().join("data.json");
    scenario::save_dataset(&d, &dpath).unwrap();
    assert_eq!(scenario::load_dataset(&dpath).unwrap(), d);
}

#[test]
fn normalization_of_fixture_is_plain_subtraction() {
    let s = scenario::load_scenario(fixture()).unwrap();
    let measured: Vec<f64> = (0..s.num_links())
        .map(|n| -60.0 - n as f64 * 0.25)
        .collect();
    let d = Dataset {
        noise_var: 1.0,
        seed: None,
        measured_db: measured.clone(),
    };
    let y = scenario::normalize_measurements(&s, &d).unwrap();
    for (n, link) in s.links.iter().enumerate() {
        let expected = measured[n] - link.tx_power_dbm - link.tx_gain_db - link.rx_gain_db;
        assert_eq!(y[n], expected);
    }
}

#[test]
fn noiseless_synthesis_equals_link_gain_exactly() {
    let s = scenario::load_scenario(fixture()).unwrap();
    let cache = raytracer::trace_all(&s);
    let truth = s.true_eps().unwrap();
    let d = scenario::synthesize_dataset(&s, &cache, 0.0, 5).unwrap();
    assert_eq!(d.noise_var, 0.0);
    let y = scenario::normalize_measurements(&s, &d).unwrap();
    for n in 0..s.num_links() {
        let g =
            forward::link_gain_db(cache.link(n), &truth, s.wavelength_m, s.polarization).unwrap();
        // Adding then subtracting the budget can round in the last place.
        assert!(
            (y[n] - g).abs() <= 1e-12 * g.abs(),
            "link {n}: {} vs {g}",
            y[n]
        );
    }
}

#[test]
fn same_seed_same_dataset() {
    let s = scenario::load_scenario(fixture()).unwrap();
    let cache = raytracer::trace_all(&s);
    let a = scenario::synthesize_dataset(&s, &cache, 2.0, 42).unwrap();
    let b = scenario::synthesize_dataset(&s, &cache, 2.0, 42).unwrap();
    let c = scenario::synthesize_dataset(&s, &cache, 2.0, 43).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn noise_sample_variance_is_within_five_percent() {
    let s = templates::canyon(&CanyonParams {
        num_links: 10_000,
        ..CanyonParams::default()
    })
    .unwrap();
    let cache = raytracer::trace_all(&s);
    let clean = scenario::synthesize_dataset(&s, &cache, 0.0, 3).unwrap();
    let noisy = scenario::synthesize_dataset(&s, &cache, 1.0, 3).unwrap();
    let z: Vec<f64> = noisy
        .measured_db
        .iter()
        .zip(&clean.measured_db)
        .map(|(a, b)| a - b)
        .collect();
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    assert!((var - 1.0).abs() < 0.05, "sample variance {var}");
}
