//! Trust-region GAMP for nonlinear permittivity estimation.
//!
//! The outer loop linearizes the forward map at the current estimate,
//! `g̃(x) ≈ A·x + μ`, and fixes a trust region of width `δ_tr` around it. The
//! inner loop runs `K_gamp` sum-product GAMP iterations for an AWGN output
//! channel with variance `τ^w`, whose input step is the MMSE estimate under a
//! uniform prior restricted to prior ∩ trust region. The iteration counter
//! `k = k₁·K_gamp + k₂` runs continuously, so `ŝ` carries over between
//! linearizations.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{ForwardMap, JacobianMethod, Linearization, RayTracedModel};
use crate::raytracer::RayCache;
use crate::scenario::Scenario;
use crate::trunc_gauss::{clamp_to_interval, truncated_moments, Interval};

pub const DEFAULT_K_ITER: usize = 20;
pub const DEFAULT_K_GAMP: usize = 10;
/// Smallest output-channel variance used, dB².
pub const TAU_W_FLOOR: f64 = 1e-6;
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GampConfig {
    pub k_iter: usize,
    pub k_gamp: usize,
    /// Trust-region width per material.
    pub delta_tr: Vec<f64>,
    /// Output-channel noise variance, dB².
    pub tau_w: f64,
    pub x0: Vec<f64>,
    /// Weight of the new `ŝ` in `ρ·ŝ_new + (1−ρ)·ŝ_old`; 1 disables damping.
    pub damping: f64,
    /// Inner loop ends early once `‖Δx̂‖∞` drops below this; 0 disables.
    pub early_stop_tol: f64,
    pub variance_floor: f64,
    #[serde(default)]
    pub jacobian: JacobianMethod,
}

impl GampConfig {
    /// Defaults for a scenario: start at the prior midpoints, 20×10
    /// iterations, `δ_tr` = smallest prior width / 5 on every component and
    /// `τ^w = max(σ_z², 1e−6)`.
    pub fn for_scenario(scenario: &Scenario, noise_var: f64) -> Self {
        let priors = priors(scenario);
        let min_width = priors
            .iter()
            .map(Interval::width)
            .fold(f64::INFINITY, f64::min);
        GampConfig {
            k_iter: DEFAULT_K_ITER,
            k_gamp: DEFAULT_K_GAMP,
            delta_tr: vec![min_width / 5.0; priors.len()],
            tau_w: noise_var.max(TAU_W_FLOOR),
            x0: priors.iter().map(Interval::mid).collect(),
            damping: 1.0,
            early_stop_tol: 0.0,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            jacobian: JacobianMethod::Analytic,
        }
    }

    /// Sets the same trust-region width on every component.
    pub fn with_delta_tr(mut self, delta: f64) -> Self {
        self.delta_tr = vec![delta; self.x0.len()];
        self
    }

    pub fn validate(&self, priors: &[Interval]) -> Result<()> {
        let m = priors.len();
        if self.k_iter == 0 || self.k_gamp == 0 {
            return Err(Error::validation("k_iter/k_gamp", "must be at least 1"));
        }
        if self.x0.len() != m {
            return Err(Error::Dimension {
                what: "x0",
                expected: m,
                got: self.x0.len(),
            });
        }
        if self.delta_tr.len() != m {
            return Err(Error::Dimension {
                what: "delta_tr",
                expected: m,
                got: self.delta_tr.len(),
            });
        }
        if self.delta_tr.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::validation("delta_tr", "must be positive and finite"));
        }
        if !(self.tau_w > 0.0 && self.tau_w.is_finite()) {
            return Err(Error::validation("tau_w", "must be positive and finite"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::validation("damping", "must lie in (0, 1]"));
        }
        if !(self.early_stop_tol >= 0.0) {
            return Err(Error::validation("early_stop_tol", "must be >= 0"));
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::validation("variance_floor", "must be positive"));
        }
        for (i, (x, p)) in self.x0.iter().zip(priors).enumerate() {
            if !p.contains(*x) {
                return Err(Error::validation(
                    format!("x0[{i}]"),
                    format!("{x} outside prior [{}, {}]", p.lo, p.hi),
                ));
            }
        }
        Ok(())
    }
}

/// Uniform prior support of every material.
pub fn priors(scenario: &Scenario) -> Vec<Interval> {
    scenario
        .materials
        .iter()
        .map(|m| Interval {
            lo: m.prior_lo,
            hi: m.prior_hi,
        })
        .collect()
}

/// Trust region `[max(a, x − δ/2), min(b, x + δ/2)]` per component.
pub fn trust_regions(center: &[f64], delta_tr: &[f64], priors: &[Interval]) -> Vec<Interval> {
    center
        .iter()
        .zip(delta_tr)
        .zip(priors)
        .map(|((&x, &d), p)| {
            let x = clamp_to_interval(x, p);
            Interval {
                lo: p.lo.max(x - 0.5 * d),
                hi: p.hi.min(x + 0.5 * d),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GampState {
    pub x_hat: Vec<f64>,
    pub tau_x: Vec<f64>,
    pub s_hat: Vec<f64>,
    pub tau_s: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub tau_p: Vec<f64>,
    /// `Σ_m a_im x̂_m`; diagnostic only.
    pub z_hat: Vec<f64>,
    pub c_hat: Vec<f64>,
    pub tau_c: Vec<f64>,
    pub trust: Vec<Interval>,
    pub k: usize,
}

/// Starting state: `x̂ = x0`, `τ^x` = prior variances, `ŝ = 0`, trust
/// regions centered on `x0`.
pub fn init_state(priors: &[Interval], num_links: usize, config: &GampConfig) -> GampState {
    let m = priors.len();
    GampState {
        x_hat: config.x0.clone(),
        tau_x: priors
            .iter()
            .map(|p| p.width() * p.width() / 12.0)
            .collect(),
        s_hat: vec![0.0; num_links],
        tau_s: vec![0.0; num_links],
        p_hat: vec![0.0; num_links],
        tau_p: vec![0.0; num_links],
        z_hat: vec![0.0; num_links],
        c_hat: vec![0.0; m],
        tau_c: vec![0.0; m],
        trust: trust_regions(&config.x0, &config.delta_tr, priors),
        k: 0,
    }
}

/// Output (measurement-side) half of one GAMP iteration.
pub fn output_step(
    state: &mut GampState,
    lin: &Linearization,
    y: &[f64],
    tau_w: f64,
    damping: f64,
) -> Result<()> {
    if y.len() != lin.rows || state.s_hat.len() != lin.rows {
        return Err(Error::Dimension {
            what: "measurements vs linearization rows",
            expected: lin.rows,
            got: y.len(),
        });
    }
    for i in 0..lin.rows {
        let row = lin.row(i);
        let mut tau_p = 0.0;
        let mut z = 0.0;
        for (m, &a) in row.iter().enumerate() {
            tau_p += a * a * state.tau_x[m];
            z += a * state.x_hat[m];
        }
        let p = z - tau_p * state.s_hat[i];
        let s_new = (y[i] - lin.mu[i] - p) / (tau_w + tau_p);
        let tau_s = 1.0 / (tau_p + tau_w);
        if !(s_new.is_finite() && tau_s.is_finite() && p.is_finite()) {
            return Err(Error::Solver {
                iteration: state.k,
                reason: format!("non-finite output step at link {i}"),
            });
        }
        state.tau_p[i] = tau_p;
        state.p_hat[i] = p;
        state.z_hat[i] = z;
        state.s_hat[i] = damping * s_new + (1.0 - damping) * state.s_hat[i];
        state.tau_s[i] = tau_s;
    }
    Ok(())
}

/// Input (parameter-side) half of one GAMP iteration. Returns the indices of
/// parameters no link observes; those keep their estimate and fall back to
/// the prior variance.
pub fn input_step(
    state: &mut GampState,
    lin: &Linearization,
    priors: &[Interval],
    variance_floor: f64,
) -> Result<Vec<usize>> {
    let mut unobserved = Vec::new();
    for m in 0..lin.cols {
        let mut precision = 0.0;
        let mut corr = 0.0;
        for i in 0..lin.rows {
            let a = lin.a(i, m);
            precision += a * a * state.tau_s[i];
            corr += a * state.s_hat[i];
        }
        let support = priors[m]
            .intersect(&state.trust[m])
            .unwrap_or(state.trust[m]);
        if !(precision > 0.0) {
            unobserved.push(m);
            state.c_hat[m] = state.x_hat[m];
            state.tau_c[m] = priors[m].width() * priors[m].width() / 12.0;
            state.tau_x[m] = state.tau_c[m];
            continue;
        }
        let tau_c = 1.0 / precision;
        let c_hat = state.x_hat[m] + tau_c * corr;
        if !(tau_c.is_finite() && c_hat.is_finite()) {
            return Err(Error::Solver {
                iteration: state.k,
                reason: format!("non-finite input step at material {}", m + 1),
            });
        }
        let (mean, var) = truncated_moments(c_hat, tau_c, &support);
        state.c_hat[m] = c_hat;
        state.tau_c[m] = tau_c;
        state.x_hat[m] = mean;
        state.tau_x[m] = var.max(variance_floor);
    }
    Ok(unobserved)
}

/// Snapshot handed to a solve observer after every inner iteration.
#[derive(Debug)]
pub struct IterationRecord<'a> {
    /// Outer (linearization) index k₁.
    pub outer: usize,
    /// Inner index k₂.
    pub inner: usize,
    pub expansion_point: &'a [f64],
    pub delta_tr: &'a [f64],
    pub priors: &'a [Interval],
    pub state: &'a GampState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub eps_hat: Vec<f64>,
    /// `x̂(0)` followed by the estimate after every inner iteration.
    pub trajectory: Vec<Vec<f64>>,
    /// RMS of `y − g̃(ε̂)` over links, dB.
    pub residual_db: f64,
    /// Same RMS at the starting point.
    pub initial_residual_db: f64,
    pub iterations_run: usize,
    pub warnings: Vec<String>,
    pub config: GampConfig,
    pub wall_ms: f64,
}

fn rms(y: &[f64], g: &[f64]) -> f64 {
    let n = y.len().max(1) as f64;
    (y.iter().zip(g).map(|(y, g)| (y - g) * (y - g)).sum::<f64>() / n).sqrt()
}

/// Runs the full estimator against `model` with measurements `y`.
pub fn solve<F: ForwardMap>(
    model: &F,
    priors: &[Interval],
    y: &[f64],
    config: &GampConfig,
) -> Result<EstimateReport> {
    solve_observed(model, priors, y, config, |_| {})
}

/// [`solve`] calling `observer` after every inner iteration.
pub fn solve_observed<F, O>(
    model: &F,
    priors: &[Interval],
    y: &[f64],
    config: &GampConfig,
    mut observer: O,
) -> Result<EstimateReport>
where
    F: ForwardMap,
    O: FnMut(&IterationRecord),
{
    let start = Instant::now();
    config.validate(priors)?;
    if model.num_params() != priors.len() {
        return Err(Error::Dimension {
            what: "model parameters vs priors",
            expected: priors.len(),
            got: model.num_params(),
        });
    }
    if y.len() != model.num_outputs() {
        return Err(Error::Dimension {
            what: "measurements vs model outputs",
            expected: model.num_outputs(),
            got: y.len(),
        });
    }

    let mut state = init_state(priors, y.len(), config);
    let mut trajectory = vec![state.x_hat.clone()];
    let mut unobserved_seen = BTreeSet::new();
    let mut warnings = Vec::new();

    let initial_fit = model.eval(&state.x_hat).map_err(|e| Error::Solver {
        iteration: 0,
        reason: format!("forward model failed at x0: {e}"),
    })?;
    let initial_residual_db = rms(y, &initial_fit);

    for outer in 0..config.k_iter {
        let expansion = state.x_hat.clone();
        let lin = model.linearize(&expansion).map_err(|e| Error::Solver {
            iteration: state.k,
            reason: format!("linearization failed at {expansion:?}: {e}"),
        })?;
        if !lin.one_sided.is_empty() {
            warnings.push(format!(
                "iteration {}: one-sided difference for materials {:?}",
                state.k,
                lin.one_sided.iter().map(|m| m + 1).collect::<Vec<_>>()
            ));
        }
        state.trust = trust_regions(&expansion, &config.delta_tr, priors);
        for inner in 0..config.k_gamp {
            let before = state.x_hat.clone();
            output_step(&mut state, &lin, y, config.tau_w, config.damping)?;
            for m in input_step(&mut state, &lin, priors, config.variance_floor)? {
                if unobserved_seen.insert(m) {
                    warnings.push(format!(
                        "iteration {}: material {} is not observed by any link; estimate held",
                        state.k,
                        m + 1
                    ));
                }
            }
            state.k += 1;
            trajectory.push(state.x_hat.clone());
            observer(&IterationRecord {
                outer,
                inner,
                expansion_point: &expansion,
                delta_tr: &config.delta_tr,
                priors,
                state: &state,
            });
            if config.early_stop_tol > 0.0 {
                let step = before
                    .iter()
                    .zip(&state.x_hat)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if step < config.early_stop_tol {
                    break;
                }
            }
        }
    }

    let final_fit = model.eval(&state.x_hat).map_err(|e| Error::Solver {
        iteration: state.k,
        reason: format!("forward model failed at the final estimate: {e}"),
    })?;
    let residual_db = rms(y, &final_fit);
    if residual_db > initial_residual_db {
        warnings.push(format!(
            "final residual {residual_db:.6} dB exceeds the starting residual {initial_residual_db:.6} dB"
        ));
    }
    Ok(EstimateReport {
        eps_hat: state.x_hat,
        trajectory,
        residual_db,
        initial_residual_db,
        iterations_run: state.k,
        warnings,
        config: config.clone(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Solves against the ray-traced model of `scenario`.
pub fn solve_scenario(
    scenario: &Scenario,
    cache: &RayCache,
    y: &[f64],
    config: &GampConfig,
) -> Result<EstimateReport> {
    let model = RayTracedModel {
        scenario,
        cache,
        method: config.jacobian,
    };
    solve(&model, &priors(scenario), y, config)
}
