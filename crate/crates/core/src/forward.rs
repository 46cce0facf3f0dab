//! Ray gains, link gains in dB and the linearized forward map.
//!
//! A ray of length `d` bouncing off surfaces with power reflection
//! coefficients `R_b` carries linear gain `(λ/4πd)²·Π_b R_b`. A link's gain is
//! the energy sum over its rays, in dB. Permittivities are real (lossless
//! dielectrics) and `R_b` is the Fresnel `|Γ|²` for the scenario polarization.

use std::f64::consts::{LN_10, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::raytracer::{Ray, RayCache};
use crate::scenario::Scenario;

/// Linear gain sums below this make a link unusable.
pub const GAIN_FLOOR: f64 = 1e-30;
/// Default central-difference step, permittivity units.
pub const FD_STEP: f64 = 1e-6;

const DB_PER_NEPER_POWER: f64 = 10.0 / LN_10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarization {
    /// Electric field perpendicular to the plane of incidence.
    #[default]
    #[serde(rename = "TE")]
    Te,
    /// Magnetic field perpendicular to the plane of incidence.
    #[serde(rename = "TM")]
    Tm,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMethod {
    #[default]
    Analytic,
    CentralFd,
}

/// Power reflection coefficient `|Γ|²` of a lossless dielectric half-space.
pub fn fresnel_power_coeff(eps: f64, theta: f64, pol: Polarization) -> Result<f64> {
    fresnel_with_derivative(eps, theta, pol).map(|(r, _)| r)
}

/// `|Γ|²` and its derivative with respect to `eps`.
pub fn fresnel_with_derivative(eps: f64, theta: f64, pol: Polarization) -> Result<(f64, f64)> {
    if !(eps >= 1.0) {
        return Err(Error::Domain { eps });
    }
    let cos = theta.cos();
    // (ε − 1) + cos²θ rather than ε − sin²θ: exact at ε = 1, where q = cos θ.
    let q = ((eps - 1.0) + cos * cos).sqrt();
    let (gamma, dgamma) = match pol {
        Polarization::Te => {
            let den = cos + q;
            ((cos - q) / den, -cos / (q * den * den))
        }
        Polarization::Tm => {
            let den = eps * cos + q;
            (
                (eps * cos - q) / den,
                cos * (2.0 * q * q - eps) / (q * den * den),
            )
        }
    };
    Ok((gamma * gamma, 2.0 * gamma * dgamma))
}

/// Linear power gain of one ray.
pub fn ray_gain_linear(
    ray: &Ray,
    eps: &[f64],
    wavelength_m: f64,
    pol: Polarization,
) -> Result<f64> {
    let spread = wavelength_m / (4.0 * PI * ray.total_length_m);
    let mut g = spread * spread;
    for r in &ray.reflections {
        g *= fresnel_power_coeff(eps[r.material_index - 1], r.incidence_angle, pol)?;
    }
    Ok(g)
}

/// Ray gain and its gradient over all `eps.len()` materials (product rule
/// across the ray's bounces), accumulated into `grad`.
fn ray_gain_with_gradient(
    ray: &Ray,
    eps: &[f64],
    wavelength_m: f64,
    pol: Polarization,
    grad: &mut [f64],
) -> Result<f64> {
    let spread = wavelength_m / (4.0 * PI * ray.total_length_m);
    let base = spread * spread;
    let k = ray.reflections.len();
    let mut coeffs = Vec::with_capacity(k);
    for r in &ray.reflections {
        coeffs.push(fresnel_with_derivative(
            eps[r.material_index - 1],
            r.incidence_angle,
            pol,
        )?);
    }
    let value = base * coeffs.iter().map(|c| c.0).product::<f64>();
    for (b, r) in ray.reflections.iter().enumerate() {
        let others: f64 = coeffs
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != b)
            .map(|(_, c)| c.0)
            .product();
        grad[r.material_index - 1] += base * coeffs[b].1 * others;
    }
    Ok(value)
}

/// `10·log10(Σ_j g_j)` over the rays of one link.
pub fn link_gain_db(
    rays: &[Ray],
    eps: &[f64],
    wavelength_m: f64,
    pol: Polarization,
) -> Result<f64> {
    let mut total = 0.0;
    for ray in rays {
        total += ray_gain_linear(ray, eps, wavelength_m, pol)?;
    }
    if !(total >= GAIN_FLOOR) {
        return Err(Error::GainFloor { total });
    }
    Ok(10.0 * total.log10())
}

fn check_eps(eps: &[f64], m: usize) -> Result<()> {
    if eps.len() != m {
        return Err(Error::Dimension {
            what: "permittivity vector",
            expected: m,
            got: eps.len(),
        });
    }
    Ok(())
}

fn link_error(n: usize, e: Error) -> Error {
    match e {
        Error::GainFloor { total } => Error::UnusableLink {
            link: n,
            reason: format!("total linear gain {total:e} below floor {GAIN_FLOOR:e}"),
        },
        Error::Domain { eps } => Error::UnusableLink {
            link: n,
            reason: format!("permittivity {eps} below 1"),
        },
        other => other,
    }
}

/// Noiseless link gains `g̃(ε)` for every link of the cache.
pub fn forward(scenario: &Scenario, cache: &RayCache, eps: &[f64]) -> Result<Vec<f64>> {
    check_eps(eps, scenario.num_materials())?;
    let (lambda, pol) = (scenario.wavelength_m, scenario.polarization);
    par::map_range(cache.len(), |n| {
        link_gain_db(cache.link(n), eps, lambda, pol).map_err(|e| link_error(n, e))
    })
    .into_iter()
    .collect()
}

/// First-order Taylor surrogate `g̃(x) ≈ A·x + μ` around `expansion_point`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linearization {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows × cols`, dB per unit permittivity.
    pub a_matrix: Vec<f64>,
    pub mu: Vec<f64>,
    pub expansion_point: Vec<f64>,
    /// Columns where a central difference would have crossed ε = 1 and a
    /// forward difference was used instead.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub one_sided: Vec<usize>,
}

impl Linearization {
    /// Builds `μ = g̃(x̂) − A·x̂` from the value at the expansion point.
    pub fn from_parts(a_matrix: Vec<f64>, value: &[f64], expansion_point: Vec<f64>) -> Self {
        let rows = value.len();
        let cols = expansion_point.len();
        assert_eq!(a_matrix.len(), rows * cols);
        let mu = (0..rows)
            .map(|i| {
                let ax: f64 = (0..cols)
                    .map(|m| a_matrix[i * cols + m] * expansion_point[m])
                    .sum();
                value[i] - ax
            })
            .collect();
        Linearization {
            rows,
            cols,
            a_matrix,
            mu,
            expansion_point,
            one_sided: Vec::new(),
        }
    }

    pub fn a(&self, i: usize, m: usize) -> f64 {
        self.a_matrix[i * self.cols + m]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.a_matrix[i * self.cols..(i + 1) * self.cols]
    }

    /// `A·x + μ`.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, x)| a * x).sum::<f64>() + self.mu[i])
            .collect()
    }
}

/// Jacobian `A` and offset `μ` of the forward map at `eps`.
pub fn jacobian(
    scenario: &Scenario,
    cache: &RayCache,
    eps: &[f64],
    method: JacobianMethod,
) -> Result<Linearization> {
    let m = scenario.num_materials();
    check_eps(eps, m)?;
    match method {
        JacobianMethod::Analytic => analytic_jacobian(scenario, cache, eps),
        JacobianMethod::CentralFd => fd_jacobian(scenario, cache, eps, FD_STEP),
    }
}

fn analytic_jacobian(scenario: &Scenario, cache: &RayCache, eps: &[f64]) -> Result<Linearization> {
    let m = eps.len();
    let (lambda, pol) = (scenario.wavelength_m, scenario.polarization);
    let rows: Vec<(f64, Vec<f64>)> = par::map_range(cache.len(), |n| {
        let mut grad = vec![0.0; m];
        let mut total = 0.0;
        for ray in cache.link(n) {
            total += ray_gain_with_gradient(ray, eps, lambda, pol, &mut grad)
                .map_err(|e| link_error(n, e))?;
        }
        if !(total >= GAIN_FLOOR) {
            return Err(link_error(n, Error::GainFloor { total }));
        }
        let row = grad
            .iter()
            .map(|d| DB_PER_NEPER_POWER * d / total)
            .collect();
        Ok((10.0 * total.log10(), row))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let value: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let a_matrix = rows.into_iter().flat_map(|r| r.1).collect();
    Ok(Linearization::from_parts(a_matrix, &value, eps.to_vec()))
}

/// Finite-difference Jacobian with step `h`; columns whose backward point
/// would fall below ε = 1 use a forward difference.
pub fn fd_jacobian(
    scenario: &Scenario,
    cache: &RayCache,
    eps: &[f64],
    h: f64,
) -> Result<Linearization> {
    let (n, m) = (cache.len(), eps.len());
    let value = forward(scenario, cache, eps)?;
    let mut a_matrix = vec![0.0; n * m];
    let mut one_sided = Vec::new();
    for col in 0..m {
        let mut plus = eps.to_vec();
        plus[col] += h;
        let f_plus = forward(scenario, cache, &plus)?;
        let (f_minus, span) = if eps[col] - h >= 1.0 {
            let mut minus = eps.to_vec();
            minus[col] -= h;
            (forward(scenario, cache, &minus)?, 2.0 * h)
        } else {
            one_sided.push(col);
            (value.clone(), h)
        };
        for i in 0..n {
            a_matrix[i * m + col] = (f_plus[i] - f_minus[i]) / span;
        }
    }
    let mut lin = Linearization::from_parts(a_matrix, &value, eps.to_vec());
    lin.one_sided = one_sided;
    Ok(lin)
}

/// A differentiable map from permittivities to predicted link gains.
pub trait ForwardMap: Sync {
    fn num_params(&self) -> usize;
    fn num_outputs(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn linearize(&self, x: &[f64]) -> Result<Linearization>;
}

/// The ray-traced link-gain model of a scenario.
#[derive(Debug, Clone, Copy)]
pub struct RayTracedModel<'a> {
    pub scenario: &'a Scenario,
    pub cache: &'a RayCache,
    pub method: JacobianMethod,
}

impl<'a> RayTracedModel<'a> {
    pub fn new(scenario: &'a Scenario, cache: &'a RayCache) -> Self {
        Self {
            scenario,
            cache,
            method: JacobianMethod::Analytic,
        }
    }
}

impl ForwardMap for RayTracedModel<'_> {
    fn num_params(&self) -> usize {
        self.scenario.num_materials()
    }

    fn num_outputs(&self) -> usize {
        self.cache.len()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        forward(self.scenario, self.cache, x)
    }

    fn linearize(&self, x: &[f64]) -> Result<Linearization> {
        jacobian(self.scenario, self.cache, x, self.method)
    }
}

/// A fixed affine map `x ↦ A·x + μ`; its linearization is itself.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineModel {
    pub rows: usize,
    pub cols: usize,
    pub a_matrix: Vec<f64>,
    pub mu: Vec<f64>,
}

impl ForwardMap for AffineModel {
    fn num_params(&self) -> usize {
        self.cols
    }

    fn num_outputs(&self) -> usize {
        self.rows
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.linearize(x)?.predict(x))
    }

    fn linearize(&self, x: &[f64]) -> Result<Linearization> {
        check_eps(x, self.cols)?;
        Ok(Linearization {
            rows: self.rows,
            cols: self.cols,
            a_matrix: self.a_matrix.clone(),
            mu: self.mu.clone(),
            expansion_point: x.to_vec(),
            one_sided: Vec::new(),
        })
    }
}
