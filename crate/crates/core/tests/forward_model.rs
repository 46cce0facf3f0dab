use std::f64::consts::{FRAC_PI_3, LN_10, PI};

use approx::assert_relative_eq;
use rtperm::forward::{self, JacobianMethod, Polarization};
use rtperm::raytracer::{self, Ray, RayCache, Reflection};
use rtperm::rng::Stream;
use rtperm::scenario::{Link, Material, Scenario};
use rtperm::templates::{self, CanyonParams};
use rtperm::Error;

fn ray(length: f64, bounces: &[(usize, f64)]) -> Ray {
    Ray {
        total_length_m: length,
        reflections: bounces
            .iter()
            .map(|&(material_index, incidence_angle)| Reflection {
                material_index,
                incidence_angle,
            })
            .collect(),
        blocked: false,
        surfaces: bounces.iter().map(|b| b.0 - 1).collect(),
        points: Vec::new(),
    }
}

fn bare_scenario(m: usize, n: usize, wavelength_m: f64) -> Scenario {
    Scenario {
        wavelength_m,
        max_reflections: 2,
        polarization: Polarization::Te,
        materials: (1..=m)
            .map(|index| Material {
                index,
                prior_lo: 1.0,
                prior_hi: 13.0,
                true_eps: None,
            })
            .collect(),
        surfaces: Vec::new(),
        links: (0..n)
            .map(|i| Link {
                tx_pos: rtperm::geometry::Point::new(0.0, 0.0),
                rx_pos: rtperm::geometry::Point::new(1.0 + i as f64, 0.0),
                tx_power_dbm: 0.0,
                tx_gain_db: 0.0,
                rx_gain_db: 0.0,
            })
            .collect(),
    }
}

/// Row-normalized discrepancy: max over entries of |A − F| divided by the
/// largest magnitude in that row.
fn row_relative_error(a: &forward::Linearization, f: &forward::Linearization) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.rows {
        let scale = a.row(i).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if scale == 0.0 {
            assert!(f.row(i).iter().all(|v| v.abs() < 1e-6));
            continue;
        }
        for m in 0..a.cols {
            worst = worst.max((a.a(i, m) - f.a(i, m)).abs() / scale);
        }
    }
    worst
}

#[test]
fn vacuum_wall_reflects_nothing() {
    for theta in [0.0, 0.3, 1.2] {
        for pol in [Polarization::Te, Polarization::Tm] {
            assert_eq!(forward::fresnel_power_coeff(1.0, theta, pol).unwrap(), 0.0);
        }
    }
}

#[test]
fn normal_incidence_te_is_one_ninth() {
    assert_relative_eq!(
        forward::fresnel_power_coeff(4.0, 0.0, Polarization::Te).unwrap(),
        1.0 / 9.0,
        max_relative = 1e-15
    );
    assert_relative_eq!(
        forward::fresnel_power_coeff(4.0, 0.0, Polarization::Tm).unwrap(),
        1.0 / 9.0,
        max_relative = 1e-15
    );
}

#[test]
fn tm_at_sixty_degrees_matches_high_precision_value() {
    // High-precision evaluation of the TM formula at eps=4, theta=pi/3.
    let reference = 0.002_689_798_300_996_443_6;
    let got = forward::fresnel_power_coeff(4.0, FRAC_PI_3, Polarization::Tm).unwrap();
    assert_relative_eq!(got, reference, max_relative = 1e-12);
    let te = 0.320_063_392_875_115_27;
    assert_relative_eq!(
        forward::fresnel_power_coeff(4.0, FRAC_PI_3, Polarization::Te).unwrap(),
        te,
        max_relative = 1e-14
    );
}

#[test]
fn permittivity_below_one_is_a_domain_error() {
    assert!(matches!(
        forward::fresnel_power_coeff(0.9, 0.1, Polarization::Te),
        Err(Error::Domain { .. })
    ));
}

#[test]
fn te_reflectance_grows_with_permittivity() {
    for t in 0..=14 {
        let theta = 0.1 * t as f64;
        let mut prev = -1.0;
        for e in 0..=140 {
            let eps = 1.0 + 0.1 * e as f64;
            let r = forward::fresnel_power_coeff(eps, theta, Polarization::Te).unwrap();
            assert!((0.0..=1.0).contains(&r));
            assert!(r > prev, "theta={theta} eps={eps}");
            prev = r;
        }
    }
}

#[test]
fn friis_los_and_single_bounce() {
    let los = forward::ray_gain_linear(&ray(1.0, &[]), &[4.0], 0.3, Polarization::Te).unwrap();
    let friis = (0.3 / (4.0 * PI)).powi(2);
    assert_relative_eq!(los, friis, max_relative = 1e-15);
    assert_relative_eq!(los, 5.6992e-4, max_relative = 1e-4);
    let bounce =
        forward::ray_gain_linear(&ray(1.0, &[(1, 0.0)]), &[4.0], 0.3, Polarization::Te).unwrap();
    assert_relative_eq!(bounce, friis / 9.0, max_relative = 1e-14);
    let vacuum =
        forward::ray_gain_linear(&ray(1.0, &[(1, 0.4)]), &[1.0], 0.3, Polarization::Te).unwrap();
    assert_eq!(vacuum, 0.0);
}

#[test]
fn link_gain_sums_energy() {
    let r = ray(7.0, &[]);
    let g = forward::ray_gain_linear(&r, &[4.0], 0.1, Polarization::Te).unwrap();
    let one =
        forward::link_gain_db(std::slice::from_ref(&r), &[4.0], 0.1, Polarization::Te).unwrap();
    assert_relative_eq!(one, 10.0 * g.log10(), max_relative = 1e-15);
    let two = forward::link_gain_db(&[r.clone(), r], &[4.0], 0.1, Polarization::Te).unwrap();
    assert_relative_eq!(two - one, 10.0 * 2f64.log10(), max_relative = 1e-12);
    assert_relative_eq!(two - one, 3.0103, max_relative = 1e-5);
}

#[test]
fn annihilated_link_hits_the_gain_floor() {
    let rays = [ray(5.0, &[(1, 0.2)]), ray(9.0, &[(1, 0.5), (2, 0.1)])];
    assert!(matches!(
        forward::link_gain_db(&rays, &[1.0, 1.0], 0.1, Polarization::Te),
        Err(Error::GainFloor { .. })
    ));
}

#[test]
fn link_gain_ignores_ray_order() {
    let rays = vec![
        ray(10.0, &[]),
        ray(12.0, &[(1, 0.7)]),
        ray(15.0, &[(2, 0.3), (1, 1.1)]),
        ray(21.0, &[(2, 0.2)]),
    ];
    let eps = [3.3, 8.1];
    let base = forward::link_gain_db(&rays, &eps, 0.1, Polarization::Te).unwrap();
    let mut perm = rays.clone();
    for _ in 0..4 {
        perm.rotate_left(1);
        perm.swap(0, 2);
        let g = forward::link_gain_db(&perm, &eps, 0.1, Polarization::Te).unwrap();
        assert_relative_eq!(g, base, max_relative = 1e-14);
    }
}

#[test]
fn fixture_gains_match_direct_summation() {
    let s = templates::canyon(&CanyonParams::default()).unwrap();
    let cache = raytracer::trace_all(&s);
    let eps = [4.0, 7.0];
    let g = forward::forward(&s, &cache, &eps).unwrap();
    for (n, rays) in cache.links.iter().enumerate() {
        let mut total = 0.0;
        for r in rays {
            let mut gain = (s.wavelength_m / (4.0 * PI * r.total_length_m)).powi(2);
            for b in &r.reflections {
                let e = eps[b.material_index - 1];
                let (sin, cos) = b.incidence_angle.sin_cos();
                let q = (e - sin * sin).sqrt();
                gain *= ((cos - q) / (cos + q)).powi(2);
            }
            total += gain;
        }
        assert_relative_eq!(g[n], 10.0 * total.log10(), max_relative = 1e-13);
    }
}

#[test]
fn line_of_sight_only_gives_zero_jacobian() {
    let s = templates::free_space(3, 12, 4).unwrap();
    let cache = raytracer::trace_all(&s);
    let lin = forward::jacobian(&s, &cache, &[2.0, 5.0, 9.0], JacobianMethod::Analytic).unwrap();
    assert!(lin.a_matrix.iter().all(|&a| a == 0.0));
    assert_eq!((lin.rows, lin.cols), (12, 3));
}

#[test]
fn normal_incidence_derivative_matches_symbolic_value() {
    let s = bare_scenario(1, 1, 0.3);
    let cache = RayCache {
        links: vec![vec![ray(1.0, &[(1, 0.0)])]],
    };
    // d/dε 10·log10(((1−√ε)/(1+√ε))²) = (10/ln10)·2/(√ε(ε−1)).
    let symbolic = |e: f64| 10.0 / LN_10 * 2.0 / (e.sqrt() * (e - 1.0));
    for eps in [4.0, 2.5, 11.0] {
        let lin = forward::jacobian(&s, &cache, &[eps], JacobianMethod::Analytic).unwrap();
        assert_relative_eq!(lin.a(0, 0), symbolic(eps), max_relative = 1e-13);
    }
    let at4 = forward::jacobian(&s, &cache, &[4.0], JacobianMethod::Analytic).unwrap();
    assert_relative_eq!(at4.a(0, 0), 1.4476, max_relative = 1e-4);
}

#[test]
fn linearization_is_exact_at_the_expansion_point() {
    let s = templates::canyon(&CanyonParams {
        num_materials: 3,
        ..CanyonParams::default()
    })
    .unwrap();
    let cache = raytracer::trace_all(&s);
    let x = [2.2, 6.4, 10.9];
    let lin = forward::jacobian(&s, &cache, &x, JacobianMethod::Analytic).unwrap();
    let g = forward::forward(&s, &cache, &x).unwrap();
    for (p, v) in lin.predict(&x).iter().zip(&g) {
        assert_relative_eq!(*p, *v, max_relative = 1e-10);
    }
    assert_eq!(lin.expansion_point, x.to_vec());
}

#[test]
fn analytic_matches_central_differences_on_random_canyons() {
    let mut stream = Stream::new(2024);
    for seed in 1..=10u64 {
        let m = 1 + (seed as usize % 4);
        let s = templates::canyon(&CanyonParams {
            num_materials: m,
            num_links: 30,
            seed,
            ..CanyonParams::default()
        })
        .unwrap();
        let cache = raytracer::trace_all(&s);
        let eps: Vec<f64> = (0..m).map(|_| stream.uniform_in(1.5, 12.5)).collect();
        let a = forward::jacobian(&s, &cache, &eps, JacobianMethod::Analytic).unwrap();
        let f = forward::jacobian(&s, &cache, &eps, JacobianMethod::CentralFd).unwrap();
        let err = row_relative_error(&a, &f);
        assert!(err <= 1e-5, "seed {seed}: {err:e}");
        for (x, y) in a.mu.iter().zip(&f.mu) {
            assert!((x - y).abs() < 1e-4);
        }
    }
}

#[test]
fn fd_near_unit_permittivity_falls_back_to_one_sided() {
    let s = templates::canyon(&CanyonParams::default()).unwrap();
    let cache = raytracer::trace_all(&s);
    let lin = forward::jacobian(&s, &cache, &[1.0 + 5e-7, 5.0], JacobianMethod::CentralFd).unwrap();
    assert_eq!(lin.one_sided, vec![0]);
    let lin = forward::jacobian(&s, &cache, &[3.0, 5.0], JacobianMethod::CentralFd).unwrap();
    assert!(lin.one_sided.is_empty());
}

#[test]
fn taylor_remainder_is_second_order() {
    let s = templates::canyon(&CanyonParams::default()).unwrap();
    let cache = raytracer::trace_all(&s);
    let x = [5.0, 8.0];
    let lin = forward::jacobian(&s, &cache, &x, JacobianMethod::Analytic).unwrap();
    let remainder = |h: f64| {
        let xp = [x[0] + 0.6 * h, x[1] - 0.8 * h];
        let g = forward::forward(&s, &cache, &xp).unwrap();
        g.iter()
            .zip(lin.predict(&xp))
            .map(|(g, p)| (g - p) * (g - p))
            .sum::<f64>()
            .sqrt()
    };
    let ratio = remainder(0.1) / remainder(0.05);
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn forward_with_wrong_length_is_rejected() {
    let s = templates::canyon(&CanyonParams::default()).unwrap();
    let cache = raytracer::trace_all(&s);
    assert!(matches!(
        forward::forward(&s, &cache, &[4.0]),
        Err(Error::Dimension { .. })
    ));
}
