use rtperm::forward;
use rtperm::oracle::{self, GridSpec};
use rtperm::raytracer;
use rtperm::scenario;
use rtperm::templates::{self, CanyonParams};
use rtperm::Error;

#[test]
fn perfect_fit_scores_zero_and_outside_prior_is_minus_infinity() {
    let s = templates::canyon(&CanyonParams::default()).unwrap();
    let cache = raytracer::trace_all(&s);
    let truth = s.true_eps().unwrap();
    let y = forward::forward(&s, &cache, &truth).unwrap();
    assert_eq!(
        oracle::log_posterior(&s, &cache, &y, &truth, 0.5).unwrap(),
        0.0
    );
    assert_eq!(
        oracle::log_posterior(&s, &cache, &y, &[0.5, 9.0], 0.5).unwrap(),
        f64::NEG_INFINITY
    );
    assert_eq!(
        oracle::log_posterior(&s, &cache, &y, &[4.0, 13.5], 0.5).unwrap(),
        f64::NEG_INFINITY
    );
    assert!(oracle::log_posterior(&s, &cache, &y, &[4.5, 9.0], 0.5).unwrap() < 0.0);
}

#[test]
fn log_posterior_orders_points_by_residual() {
    let s = templates::canyon(&CanyonParams::default()).unwrap();
    let cache = raytracer::trace_all(&s);
    let d = scenario::synthesize_dataset(&s, &cache, 1.0, 8).unwrap();
    let y = scenario::normalize_measurements(&s, &d).unwrap();
    let sse = |e: &[f64]| {
        let g = forward::forward(&s, &cache, e).unwrap();
        y.iter()
            .zip(&g)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    };
    let (p, q) = ([3.0, 8.0], [6.0, 11.0]);
    let lp = oracle::log_posterior(&s, &cache, &y, &p, 1.0).unwrap();
    let lq = oracle::log_posterior(&s, &cache, &y, &q, 1.0).unwrap();
    assert!((lp + sse(&p) / 2.0).abs() < 1e-9 * sse(&p));
    assert_eq!(lp > lq, sse(&p) < sse(&q));
}

#[test]
fn log_posterior_ignores_link_order() {
    let s = templates::canyon(&CanyonParams::default()).unwrap();
    let cache = raytracer::trace_all(&s);
    let d = scenario::synthesize_dataset(&s, &cache, 1.0, 2).unwrap();
    let y = scenario::normalize_measurements(&s, &d).unwrap();
    let order: Vec<usize> = (0..s.num_links()).rev().collect();
    let y_rev: Vec<f64> = order.iter().map(|&n| y[n]).collect();
    let a = oracle::log_posterior(&s, &cache, &y, &[5.0, 8.0], 1.0).unwrap();
    let b = oracle::log_posterior(
        &s.with_links(&order),
        &cache.with_links(&order),
        &y_rev,
        &[5.0, 8.0],
        1.0,
    )
    .unwrap();
    assert!((a - b).abs() <= 1e-12 * a.abs());
}

#[test]
fn one_dimensional_map_equals_a_direct_scan() {
    let s = templates::canyon(&CanyonParams {
        num_materials: 1,
        true_eps: Some(vec![6.0]),
        ..CanyonParams::default()
    })
    .unwrap();
    let cache = raytracer::trace_all(&s);
    let d = scenario::synthesize_dataset(&s, &cache, 1.0, 4).unwrap();
    let y = scenario::normalize_measurements(&s, &d).unwrap();
    let map = oracle::grid_map(&s, &cache, &y, 1.0, &GridSpec::uniform(1, 0.05)).unwrap();
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=240 {
        let e = 1.0 + 0.05 * k as f64;
        let g = forward::forward(&s, &cache, &[e]).unwrap();
        let sse: f64 = y.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum();
        if sse < best.0 {
            best = (sse, e);
        }
    }
    assert!((map[0] - best.1).abs() < 1e-9, "{} vs {}", map[0], best.1);
}

#[test]
fn noiseless_map_lands_on_the_truth_node() {
    let s = templates::canyon(&CanyonParams::default()).unwrap();
    let cache = raytracer::trace_all(&s);
    let y = forward::forward(&s, &cache, &s.true_eps().unwrap()).unwrap();
    let map = oracle::grid_map(&s, &cache, &y, 0.0, &GridSpec::uniform(2, 0.25)).unwrap();
    assert!(
        (map[0] - 4.0).abs() < 1e-9 && (map[1] - 9.0).abs() < 1e-9,
        "{map:?}"
    );
}

#[test]
fn grid_guard_rejects_huge_grids() {
    let s = templates::canyon(&CanyonParams {
        num_materials: 4,
        ..CanyonParams::default()
    })
    .unwrap();
    let cache = raytracer::trace_all(&s);
    let y = vec![0.0; s.num_links()];
    let r = oracle::grid_map(&s, &cache, &y, 1.0, &GridSpec::uniform(4, 0.05));
    assert!(matches!(r, Err(Error::GridTooLarge { .. })));
}
