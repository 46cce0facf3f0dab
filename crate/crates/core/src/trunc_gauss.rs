//! Moments of a Gaussian restricted to an interval.
//!
//! This is the input-channel posterior of the solver: a uniform prior on
//! `[lo, hi]` times a Gaussian message `N(ĉ, τ)`. With `α = (lo−ĉ)/√τ`,
//! `β = (hi−ĉ)/√τ` and `Z = Φ(β) − Φ(α)`,
//!
//! ```text
//! mean = ĉ + √τ·(φ(α) − φ(β))/Z
//! var  = τ·[1 + (αφ(α) − βφ(β))/Z − ((φ(α) − φ(β))/Z)²]
//! ```
//!
//! Four evaluation regimes keep this finite and accurate:
//!
//! * interval narrow relative to `√τ` with moderate tilt: a series in the
//!   interval's half-width, evaluated around the midpoint (the closed form
//!   cancels catastrophically there);
//! * interval entirely on one side of `ĉ`: tail ratios through `erfcx`, so
//!   nothing underflows;
//! * the same more than ten standard deviations out: a series in the offset
//!   from the near endpoint, since the closed-form variance cancels there;
//! * interval straddling `ĉ`: the closed form with `Φ` from `erfc`.
//!
//! If all of these still fail to produce a finite in-range result the
//! answer degrades to the nearest endpoint with a tiny variance.

use serde::{Deserialize, Serialize};

use crate::special::{erfcx, norm_pdf, norm_sf};

/// Standardized width below which the narrow-interval series is used.
const NARROW_WIDTH: f64 = 0.1;
/// Terms of the exp(−u²/2) expansion in the narrow series.
const NARROW_QUAD_TERMS: usize = 5;
/// Terms of the exp(−c·u) expansion in the narrow series (|c·h| ≤ 1).
const NARROW_TILT_TERMS: usize = 32;
/// Standardized distance beyond which one-sided tails use [`far_tail_moments`].
const FAR_TAIL_ALPHA: f64 = 10.0;
/// Terms of the exp(−v²/2α²) expansion in the far-tail series.
const FAR_TAIL_TERMS: usize = 20;
/// Relative variance floor used by the degenerate fallback.
const FALLBACK_VAR_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    /// `None` unless `lo < hi` and both are finite.
    pub fn new(lo: f64, hi: f64) -> Option<Self> {
        (lo < hi && lo.is_finite() && hi.is_finite()).then_some(Interval { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Overlap of two intervals, `None` when it is empty or a single point.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        Interval::new(self.lo.max(other.lo), self.hi.min(other.hi))
    }
}

pub fn clamp_to_interval(x: f64, interval: &Interval) -> f64 {
    interval.hi.min(interval.lo.max(x))
}

/// Mean and variance of `N(c_hat, tau_c)` truncated to `interval`.
///
/// Always returns a finite mean in `[lo, hi]` and a finite positive variance
/// for finite inputs with `tau_c > 0`.
pub fn truncated_moments(c_hat: f64, tau_c: f64, interval: &Interval) -> (f64, f64) {
    let (lo, hi) = (interval.lo, interval.hi);
    let moments = if c_hat.is_finite() && tau_c > 0.0 && tau_c.is_finite() {
        // Reflect so the interval midpoint sits at or above ĉ.
        if interval.mid() >= c_hat {
            raw_moments(c_hat, tau_c, lo, hi)
        } else {
            raw_moments(-c_hat, tau_c, -hi, -lo).map(|(m, v)| (-m, v))
        }
    } else {
        None
    };
    match moments {
        Some((mean, var)) if mean.is_finite() && var.is_finite() && var > 0.0 => {
            (clamp_to_interval(mean, interval), var)
        }
        _ => degenerate(c_hat, interval),
    }
}

fn degenerate(c_hat: f64, interval: &Interval) -> (f64, f64) {
    let var = FALLBACK_VAR_REL * interval.width() * interval.width();
    let mean = if c_hat.is_nan() {
        interval.mid()
    } else if c_hat >= interval.mid() {
        interval.hi - var.sqrt()
    } else {
        interval.lo + var.sqrt()
    };
    (mean, var)
}

/// Moments for an interval whose midpoint lies at or above `c_hat`.
fn raw_moments(c_hat: f64, tau: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    let s = tau.sqrt();
    let half = 0.5 * (hi - lo);
    let mid = lo + half;
    // Standardized half-width and tilt c·h = (mid − ĉ)/s · half/s.
    let h = half / s;
    let tilt = (mid - c_hat) * half / tau;
    if 2.0 * h <= NARROW_WIDTH && tilt <= 1.0 {
        return Some(narrow_moments(mid, half, tilt, h * h));
    }
    let alpha = (lo - c_hat) / s;
    let beta = (hi - c_hat) / s;
    if alpha > FAR_TAIL_ALPHA {
        let (m, v) = far_tail_moments(alpha, beta);
        return Some((lo + s * m / alpha, tau * v / (alpha * alpha)));
    }
    let (m, v) = if alpha >= 0.0 {
        tail_moments(alpha, beta)
    } else {
        straddle_moments(alpha, beta)
    };
    Some((c_hat + s * m, tau * v))
}

/// Both limits on the upper side of the mean: `0 ≤ α < β`.
fn tail_moments(alpha: f64, beta: f64) -> (f64, f64) {
    let x = -(beta - alpha) * (beta + alpha) * 0.5;
    // r = φ(β)/φ(α)
    let r = x.exp();
    let one_minus_r = -x.exp_m1();
    let ea = erfcx(alpha * std::f64::consts::FRAC_1_SQRT_2);
    let eb = erfcx(beta * std::f64::consts::FRAC_1_SQRT_2);
    // φ(α)/Z
    let k = (2.0 / std::f64::consts::PI).sqrt() / (ea - eb * r);
    let lambda = k * one_minus_r;
    let var = 1.0 + k * (alpha - beta * r) - lambda * lambda;
    (lambda, var)
}

/// Far one-sided tail, `α > FAR_TAIL_ALPHA`. The closed form loses every
/// digit of the variance to `1 + αλ − λ²` here, so the moments are taken in
/// the scaled offset `v = α(u − α) ∈ [0, α(β − α)]`, where the density is
/// `e^{−v}·e^{−v²/2α²}`. The second factor is expanded in powers of
/// `v²/2α²` and each term integrates to a lower incomplete gamma function.
/// Returns the mean and variance of `v`.
fn far_tail_moments(alpha: f64, beta: f64) -> (f64, f64) {
    // e^{−v} leaves nothing measurable past v = 100.
    let len = (alpha * (beta - alpha)).min(100.0);
    let eps = 0.5 / (alpha * alpha);
    let max_k = 2 + 2 * (FAR_TAIL_TERMS - 1);
    let gammas: Vec<f64> = (0..=max_k).map(|k| lower_gamma_int(k, len)).collect();
    let moment = |p: usize| {
        let mut coef = 1.0;
        let mut sum = 0.0;
        for n in 0..FAR_TAIL_TERMS {
            if n > 0 {
                coef *= -eps / n as f64;
            }
            sum += coef * gammas[p + 2 * n];
        }
        sum
    };
    let (m0, m1, m2) = (moment(0), moment(1), moment(2));
    let mean = m1 / m0;
    (mean, m2 / m0 - mean * mean)
}

/// `∫_0^x v^k e^{−v} dv` for `0 < x ≤ 100`, from the series
/// `x^{k+1} e^{−x} Σ_j x^j / ((k+1)(k+2)…(k+1+j))`.
fn lower_gamma_int(k: usize, x: f64) -> f64 {
    let mut term = (-x).exp() * x.powi(k as i32 + 1) / (k + 1) as f64;
    let mut sum = term;
    let mut j = 1;
    while term > 1e-17 * sum {
        term *= x / (k + 1 + j) as f64;
        sum += term;
        j += 1;
    }
    sum
}

/// `α < 0 < β`; Z is bounded away from zero here.
fn straddle_moments(alpha: f64, beta: f64) -> (f64, f64) {
    let z = 1.0 - norm_sf(beta) - norm_sf(-alpha);
    let (pa, pb) = (norm_pdf(alpha), norm_pdf(beta));
    let lambda = (pa - pb) / z;
    let var = 1.0 + (alpha * pa - beta * pb) / z - lambda * lambda;
    (lambda, var)
}

/// Narrow interval around `mid` with half-width `half`. In the standardized
/// offset `u ∈ [−h, h]` from the midpoint the density is `exp(−c·u − u²/2)`;
/// both factors are expanded in powers of `u/h`.
fn narrow_moments(mid: f64, half: f64, tilt: f64, h2: f64) -> (f64, f64) {
    // J[p] = ∫_{-1}^{1} v^p e^{-tilt·v} dv / 2
    let max_p = 2 + 2 * (NARROW_QUAD_TERMS - 1);
    let mut j = vec![0.0; max_p + 1];
    for (p, jp) in j.iter_mut().enumerate() {
        let mut coef = 1.0;
        let mut sum = 0.0;
        for k in 0..NARROW_TILT_TERMS {
            if k > 0 {
                coef *= -tilt / k as f64;
            }
            if (p + k) % 2 == 0 {
                sum += coef / (p + k + 1) as f64;
            }
        }
        *jp = sum;
    }
    // K[k] = Σ_n (−h²/2)^n/n! · J[k + 2n]
    let kk = |k: usize| {
        let mut coef = 1.0;
        let mut sum = 0.0;
        for n in 0..NARROW_QUAD_TERMS {
            if n > 0 {
                coef *= -0.5 * h2 / n as f64;
            }
            sum += coef * j[k + 2 * n];
        }
        sum
    };
    let (k0, k1, k2) = (kk(0), kk(1), kk(2));
    let e1 = k1 / k0;
    let e2 = k2 / k0;
    (mid + half * e1, half * half * (e2 - e1 * e1))
}
