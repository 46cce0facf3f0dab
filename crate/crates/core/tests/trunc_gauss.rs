use proptest::prelude::*;
use rtperm::oracle::quadrature_moments;
use rtperm::trunc_gauss::{clamp_to_interval, truncated_moments, Interval};

fn iv(lo: f64, hi: f64) -> Interval {
    Interval::new(lo, hi).unwrap()
}

#[test]
fn unit_case_matches_quadrature() {
    let (m, v) = truncated_moments(0.0, 1.0, &iv(0.0, 1.0));
    let (qm, qv) = quadrature_moments(0.0, 1.0, &iv(0.0, 1.0)).unwrap();
    assert!(
        (m - qm).abs() <= 1e-9 && (v - qv).abs() <= 1e-9,
        "{m} {v} vs {qm} {qv}"
    );
    // Closed form: mean = (1 − e^{-1/2}) / (√(2π)(Φ(1) − 1/2)).
    let closed =
        (1.0 - (-0.5f64).exp()) / ((2.0 * std::f64::consts::PI).sqrt() * 0.341_344_746_068_542_9);
    assert!((m - closed).abs() < 1e-12);
}

#[test]
fn flat_limit_is_uniform() {
    let (m, v) = truncated_moments(0.0, 1e9, &iv(-1.0, 1.0));
    assert!(m.abs() < 1e-12);
    assert!((v - 1.0 / 3.0).abs() < 1e-6);
}

#[test]
fn untruncated_limit() {
    let (m, v) = truncated_moments(5.0, 1e-8, &iv(0.0, 10.0));
    assert!((m - 5.0).abs() <= 5.0 * 1e-12);
    assert!((v - 1e-8).abs() <= 1e-8 * 1e-12);
}

#[test]
fn far_tail_stays_finite_and_inside() {
    for &(c, tau, lo, hi) in &[
        (-1e6, 1.0, 0.0, 1.0),
        (1e6, 1e-4, 0.0, 1.0),
        (-50.0, 1.0, 0.0, 1e-9),
        (3.0, 1e-300, -1.0, 0.0),
        (-1e300, 1e300, 2.0, 3.0),
    ] {
        let (m, v) = truncated_moments(c, tau, &iv(lo, hi));
        assert!(m.is_finite() && v.is_finite() && v > 0.0, "{c} {tau}");
        assert!((lo..=hi).contains(&m));
    }
}

#[test]
fn clamp_pulls_into_the_interval() {
    let i = iv(1.0, 13.0);
    assert_eq!(clamp_to_interval(-4.0, &i), 1.0);
    assert_eq!(clamp_to_interval(14.0, &i), 13.0);
    assert_eq!(clamp_to_interval(7.5, &i), 7.5);
}

fn case() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (-10.0..10.0f64, -6.0..2.0f64, -10.0..10.0f64, -3.0..1.5f64)
        .prop_map(|(c, lt, lo, lw)| (c, 10f64.powf(lt), lo, lo + 10f64.powf(lw)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn moments_are_bounded((c, tau, lo, hi) in case()) {
        let (m, v) = truncated_moments(c, tau, &iv(lo, hi));
        prop_assert!(m > lo - 1e-12 && m < hi + 1e-12);
        let cap = tau.min((hi - lo) * (hi - lo) / 4.0);
        prop_assert!(v > 0.0 && v <= cap * (1.0 + 1e-9));
    }

    #[test]
    fn translation_equivariance((c, tau, lo, hi) in case(), shift in -20.0..20.0f64) {
        let (m, v) = truncated_moments(c, tau, &iv(lo, hi));
        let (ms, vs) = truncated_moments(c + shift, tau, &iv(lo + shift, hi + shift));
        let scale = 1.0 + lo.abs().max(hi.abs()) + shift.abs();
        prop_assert!((ms - m - shift).abs() <= 1e-11 * scale);
        prop_assert!((vs - v).abs() <= 1e-9 * v.max(1e-12) + 1e-13 * scale * scale);
    }

    #[test]
    fn scale_equivariance((c, tau, lo, hi) in case(), k in 0.1..10.0f64) {
        let (m, v) = truncated_moments(c, tau, &iv(lo, hi));
        let (mk, vk) = truncated_moments(k * c, k * k * tau, &iv(k * lo, k * hi));
        let scale = 1.0 + lo.abs().max(hi.abs());
        prop_assert!((mk - k * m).abs() <= 1e-11 * k * scale);
        prop_assert!((vk - k * k * v).abs() <= 1e-8 * k * k * v + 1e-13 * k * k * scale * scale);
    }

    #[test]
    fn mean_increases_with_c_hat((c, tau, lo, hi) in case(), dc in 0.01..2.0f64) {
        let (m0, _) = truncated_moments(c, tau, &iv(lo, hi));
        let (m1, _) = truncated_moments(c + dc, tau, &iv(lo, hi));
        prop_assert!(m1 >= m0 - 1e-13 * (1.0 + m0.abs()));
    }

    #[test]
    fn agrees_with_quadrature((c, tau, lo, hi) in case()) {
        let (m, v) = truncated_moments(c, tau, &iv(lo, hi));
        let (qm, qv) = quadrature_moments(c, tau, &iv(lo, hi)).unwrap();
        prop_assert!((m - qm).abs() <= 1e-9, "mean {} vs {}", m, qm);
        prop_assert!((v - qv).abs() <= 1e-9, "var {} vs {}", v, qv);
    }
}
