//! Reference machinery kept independent of the solver: the exact
//! log-posterior, an exhaustive grid MAP search and quadrature moments of the
//! truncated Gaussian. Only the forward model is shared with the solver.

use crate::error::{Error, Result};
use crate::forward;
use crate::par;
use crate::raytracer::RayCache;
use crate::scenario::Scenario;
use crate::trunc_gauss::Interval;

/// Upper bound on the number of grid nodes `grid_map` will visit.
pub const MAX_GRID_NODES: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Step per material, permittivity units.
    pub steps: Vec<f64>,
}

impl GridSpec {
    pub fn uniform(m: usize, step: f64) -> Self {
        GridSpec {
            steps: vec![step; m],
        }
    }

    /// Nodes `lo, lo + step, …` not exceeding `hi` (to within rounding).
    pub fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| lo + i as f64 * step).collect()
    }
}

fn prior_contains(scenario: &Scenario, eps: &[f64]) -> bool {
    scenario
        .materials
        .iter()
        .zip(eps)
        .all(|(m, &e)| m.prior_lo <= e && e <= m.prior_hi)
}

fn sse(y: &[f64], g: &[f64]) -> f64 {
    y.iter().zip(g).map(|(y, g)| (y - g) * (y - g)).sum()
}

/// `ln p(ε | y)` up to a constant: `−Σ_n (y_n − g̃_n(ε))² / (2σ_z²)` inside
/// the uniform prior box, `−∞` outside it.
pub fn log_posterior(
    scenario: &Scenario,
    cache: &RayCache,
    y: &[f64],
    eps: &[f64],
    sigma_z: f64,
) -> Result<f64> {
    if !(sigma_z > 0.0) {
        return Err(Error::validation(
            "sigma_z",
            "log-posterior needs sigma_z > 0",
        ));
    }
    if y.len() != cache.len() {
        return Err(Error::Dimension {
            what: "measurements vs ray cache",
            expected: cache.len(),
            got: y.len(),
        });
    }
    if eps.len() != scenario.num_materials() {
        return Err(Error::Dimension {
            what: "permittivity vector",
            expected: scenario.num_materials(),
            got: eps.len(),
        });
    }
    if !prior_contains(scenario, eps) {
        return Ok(f64::NEG_INFINITY);
    }
    let g = forward::forward(scenario, cache, eps)?;
    Ok(-sse(y, &g) / (2.0 * sigma_z * sigma_z))
}

/// Exhaustive MAP search over the Cartesian grid spanned by the priors.
/// Ties go to the lexicographically smallest node. With `sigma_z = 0` the
/// nodes are ranked by squared residual, which has the same argmax.
pub fn grid_map(
    scenario: &Scenario,
    cache: &RayCache,
    y: &[f64],
    sigma_z: f64,
    grid: &GridSpec,
) -> Result<Vec<f64>> {
    let m = scenario.num_materials();
    if grid.steps.len() != m {
        return Err(Error::Dimension {
            what: "grid steps",
            expected: m,
            got: grid.steps.len(),
        });
    }
    if grid.steps.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::validation(
            "grid.steps",
            "every step must be positive",
        ));
    }
    let axes: Vec<Vec<f64>> = scenario
        .materials
        .iter()
        .zip(&grid.steps)
        .map(|(mat, &step)| GridSpec::axis(mat.prior_lo, mat.prior_hi, step))
        .collect();
    let nodes: u128 = axes.iter().map(|a| a.len() as u128).product();
    if nodes > MAX_GRID_NODES {
        return Err(Error::GridTooLarge {
            nodes,
            limit: MAX_GRID_NODES,
        });
    }
    let node_at = |mut flat: usize| -> Vec<f64> {
        let mut eps = vec![0.0; m];
        for k in (0..m).rev() {
            let len = axes[k].len();
            eps[k] = axes[k][flat % len];
            flat /= len;
        }
        eps
    };
    let scores: Vec<Result<f64>> = par::map_range(nodes as usize, |flat| {
        let eps = node_at(flat);
        if sigma_z > 0.0 {
            log_posterior(scenario, cache, y, &eps, sigma_z)
        } else {
            forward::forward(scenario, cache, &eps).map(|g| -sse(y, &g))
        }
    });
    let mut best: Option<(usize, f64)> = None;
    for (flat, score) in scores.into_iter().enumerate() {
        let score = score?;
        // Strict comparison keeps the first (lexicographically smallest) maximum.
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((flat, score));
        }
    }
    let (flat, _) = best.expect("grid has at least one node");
    Ok(node_at(flat))
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const GK_WEIGHTS_G: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Gauss–Kronrod 7/15 on `[a, b]` for a vector integrand of width 3;
/// returns the Kronrod estimates and |Kronrod − Gauss| per component.
fn gk15<F: Fn(f64) -> [f64; 3]>(f: &F, a: f64, b: f64) -> ([f64; 3], [f64; 3]) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = [0.0; 3];
    let mut g = [0.0; 3];
    for i in 0..8 {
        let pts: &[f64] = if GK_NODES[i] == 0.0 {
            &[0.0]
        } else {
            &[-1.0, 1.0]
        };
        for &sign in pts {
            let v = f(c + sign * h * GK_NODES[i]);
            for j in 0..3 {
                k[j] += GK_WEIGHTS_K[i] * v[j];
                // Odd Kronrod nodes (1, 3, 5, 7) are the Gauss nodes.
                if i % 2 == 1 {
                    g[j] += GK_WEIGHTS_G[i / 2] * v[j];
                }
            }
        }
    }
    let est = k.map(|v| v * h);
    let err = [0, 1, 2].map(|j| ((k[j] - g[j]) * h).abs());
    (est, err)
}

/// Globally adaptive GK15 integration of a 3-vector integrand; stops when the
/// summed error of every component is within `tol[j]`.
fn integrate<F: Fn(f64) -> [f64; 3]>(
    f: &F,
    breaks: &[f64],
    tol: impl Fn(&[f64; 3]) -> [f64; 3],
) -> Result<[f64; 3]> {
    const MAX_PIECES: usize = 5000;
    let (a, b) = (breaks[0], breaks[breaks.len() - 1]);
    let mut pieces: Vec<_> = breaks
        .windows(2)
        .map(|w| (w[0], w[1], gk15(f, w[0], w[1])))
        .collect();
    loop {
        let mut total = [0.0; 3];
        let mut err = [0.0; 3];
        for (_, _, (e, r)) in &pieces {
            for j in 0..3 {
                total[j] += e[j];
                err[j] += r[j];
            }
        }
        let target = tol(&total);
        if (0..3).all(|j| err[j] <= target[j]) {
            return Ok(total);
        }
        if pieces.len() >= MAX_PIECES {
            return Err(Error::Quadrature { lo: a, hi: b });
        }
        // Bisect the piece with the largest error relative to its target.
        let worst = (0..pieces.len())
            .max_by(|&p, &q| {
                let score = |i: usize| {
                    (0..3)
                        .map(|j| pieces[i].2 .1[j] / target[j].max(f64::MIN_POSITIVE))
                        .fold(0.0, f64::max)
                };
                score(p).total_cmp(&score(q))
            })
            .unwrap();
        let (lo, hi, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if !(lo < mid && mid < hi) {
            return Err(Error::Quadrature { lo: a, hi: b });
        }
        pieces.push((lo, mid, gk15(f, lo, mid)));
        pieces.push((mid, hi, gk15(f, mid, hi)));
    }
}

/// Mean and variance of `N(c_hat, tau_c)` restricted to `interval`, by
/// adaptive quadrature of the unnormalized density (absolute target ~1e−11).
pub fn quadrature_moments(c_hat: f64, tau_c: f64, interval: &Interval) -> Result<(f64, f64)> {
    let (lo, hi) = (interval.lo, interval.hi);
    let width = hi - lo;
    // Rescale the density so its maximum over the interval is 1.
    let peak = c_hat.clamp(lo, hi);
    // (x−ĉ)² − (peak−ĉ)² factored so nothing cancels near the peak.
    let density = |x: f64| (-(x - peak) * (x + peak - 2.0 * c_hat) / (2.0 * tau_c)).exp();
    // The density can fall off on a scale far below the interval width
    // (ĉ far outside, tiny τ), where a coarse first pass sees only zeros.
    // Seed the integrator with breakpoints at geometric distances from the
    // peak, starting at that scale.
    let scale = if peak == c_hat {
        tau_c.sqrt()
    } else {
        tau_c.sqrt().min(tau_c / (peak - c_hat).abs())
    };
    let mut breaks = vec![lo, hi, peak];
    let mut d = scale;
    while d < width {
        for x in [peak - d, peak + d] {
            if x > lo && x < hi {
                breaks.push(x);
            }
        }
        d *= 4.0;
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    // Relative target on the normalizer, absolute targets on the moments.
    const REL: f64 = 1e-12;
    const ABS_MEAN: f64 = 1e-13;
    const ABS_VAR: f64 = 1e-13;

    let first = integrate(
        &|x| {
            let w = density(x);
            [w, (x - peak) * w, 0.0]
        },
        &breaks,
        |t| [REL * t[0], ABS_MEAN * t[0], f64::INFINITY],
    )?;
    let mean = peak + first[1] / first[0];
    let second = integrate(
        &|x| {
            let w = density(x);
            [w, (x - mean) * (x - mean) * w, 0.0]
        },
        &breaks,
        |t| [REL * t[0], ABS_VAR * t[0] * width.max(1.0), f64::INFINITY],
    )?;
    Ok((mean, second[1] / second[0]))
}
