//! Standard-normal density, tail probabilities and the scaled complementary
//! error function.
//!
//! `erfc` comes from the `libm` crate (a port of musl / FreeBSD msun, under
//! 1 ulp across the real line). `erfcx(x) = exp(x²)·erfc(x)` is assembled
//! from it with an error-free split of `x²` for moderate arguments and from the
//! asymptotic series beyond the point where `erfc` underflows.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// 1/√(2π)
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// 1/√π
const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Argument above which `erfcx` switches to the asymptotic expansion.
const ERFCX_ASYMPTOTIC: f64 = 26.0;

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Scaled complementary error function `exp(x²)·erfc(x)`.
///
/// Finite for all finite `x` where the result is representable; for negative
/// arguments the result grows like `2·exp(x²)` and overflows below about −26.6.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < ERFCX_ASYMPTOTIC {
        // x² = hi + lo exactly, so exp(x²) carries no rounding from squaring.
        let hi = x * x;
        let lo = x.mul_add(x, -hi);
        let scale = hi.exp() * lo.exp();
        return scale * libm::erfc(x);
    }
    // erfcx(x) ~ 1/(x√π) · Σ_k (−1)^k (2k−1)!! / (2x²)^k
    let inv2x2 = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..12 {
        term *= -((2 * k - 1) as f64) * inv2x2;
        sum += term;
    }
    INV_SQRT_PI / x * sum
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal upper tail `Q(x) = 1 − Φ(x)`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Standard normal CDF `Φ(x)`.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Mills-type ratio `φ(x)/Q(x)` expressed through `erfcx`; stable for large positive `x`.
pub fn inverse_mills(x: f64) -> f64 {
    (2.0 / PI).sqrt() / erfcx(x * FRAC_1_SQRT_2)
}
