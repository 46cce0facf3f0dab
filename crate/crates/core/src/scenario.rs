//! Physical scenario description and measurement datasets.
//!
//! A [`Scenario`] holds the reflecting surfaces, the candidate materials with
//! their uniform permittivity priors, and the measured links. A [`Dataset`]
//! carries the received power of every link in dB. Both round-trip through
//! JSON; see the README for the file schemas.
//!
//! The placement of each link's transmitter and receiver is all the ray
//! tracer needs to know about a link; powers and antenna gains only enter as
//! a dB offset removed by [`normalize_measurements`].

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{self, Polarization};
use crate::geometry::Point;
use crate::raytracer::RayCache;
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    /// 1-based material index, referenced by surfaces.
    pub index: usize,
    /// Lower bound of the uniform permittivity prior.
    pub prior_lo: f64,
    /// Upper bound of the uniform permittivity prior.
    pub prior_hi: f64,
    /// Ground truth, only present for synthetic scenarios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_eps: Option<f64>,
}

impl Material {
    pub fn prior_mid(&self) -> f64 {
        0.5 * (self.prior_lo + self.prior_hi)
    }

    /// Variance of the uniform prior, (b − a)²/12.
    pub fn prior_var(&self) -> f64 {
        let w = self.prior_hi - self.prior_lo;
        w * w / 12.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    #[serde(rename = "a")]
    pub endpoint_a: Point,
    #[serde(rename = "b")]
    pub endpoint_b: Point,
    #[serde(rename = "material")]
    pub material_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    #[serde(rename = "tx")]
    pub tx_pos: Point,
    #[serde(rename = "rx")]
    pub rx_pos: Point,
    #[serde(rename = "p_dbm")]
    pub tx_power_dbm: f64,
    #[serde(rename = "g_tx_db")]
    pub tx_gain_db: f64,
    #[serde(rename = "g_rx_db")]
    pub rx_gain_db: f64,
}

impl Link {
    /// Known part of the link budget, P + G_tx + G_rx.
    pub fn budget_db(&self) -> f64 {
        self.tx_power_dbm + self.tx_gain_db + self.rx_gain_db
    }
}

fn default_max_reflections() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub wavelength_m: f64,
    #[serde(default = "default_max_reflections")]
    pub max_reflections: usize,
    #[serde(default)]
    pub polarization: Polarization,
    pub materials: Vec<Material>,
    pub surfaces: Vec<Surface>,
    pub links: Vec<Link>,
}

impl Scenario {
    pub fn num_materials(&self) -> usize {
        self.materials.len()
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    /// Ground-truth permittivities, if every material carries one.
    pub fn true_eps(&self) -> Option<Vec<f64>> {
        self.materials.iter().map(|m| m.true_eps).collect()
    }

    pub fn prior_mids(&self) -> Vec<f64> {
        self.materials.iter().map(Material::prior_mid).collect()
    }

    /// Checks every type invariant; the error names the offending field.
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength_m > 0.0 && self.wavelength_m.is_finite()) {
            return Err(Error::validation(
                "wavelength_m",
                "must be positive and finite",
            ));
        }
        if self.materials.is_empty() {
            return Err(Error::validation(
                "materials",
                "at least one material is required",
            ));
        }
        if self.links.is_empty() {
            return Err(Error::validation("links", "at least one link is required"));
        }
        for (i, m) in self.materials.iter().enumerate() {
            let field = |f: &str| format!("materials[{i}].{f}");
            if m.index != i + 1 {
                return Err(Error::validation(
                    field("index"),
                    format!(
                        "expected {} (indices must run 1..M in order), got {}",
                        i + 1,
                        m.index
                    ),
                ));
            }
            if !(m.prior_lo.is_finite() && m.prior_hi.is_finite()) {
                return Err(Error::validation(
                    field("prior_lo"),
                    "prior bounds must be finite",
                ));
            }
            if m.prior_lo < 1.0 {
                return Err(Error::validation(
                    field("prior_lo"),
                    format!("relative permittivity must be >= 1, got {}", m.prior_lo),
                ));
            }
            if m.prior_lo >= m.prior_hi {
                return Err(Error::validation(
                    field("prior_hi"),
                    format!(
                        "prior_lo {} must be below prior_hi {}",
                        m.prior_lo, m.prior_hi
                    ),
                ));
            }
            if let Some(t) = m.true_eps {
                if !(m.prior_lo..=m.prior_hi).contains(&t) {
                    return Err(Error::validation(
                        field("true_eps"),
                        format!("{t} lies outside [{}, {}]", m.prior_lo, m.prior_hi),
                    ));
                }
            }
        }
        for (i, s) in self.surfaces.iter().enumerate() {
            if !(s.endpoint_a.is_finite() && s.endpoint_b.is_finite()) {
                return Err(Error::validation(
                    format!("surfaces[{i}].a"),
                    "non-finite coordinate",
                ));
            }
            if s.endpoint_a == s.endpoint_b {
                return Err(Error::validation(
                    format!("surfaces[{i}].b"),
                    "endpoints coincide",
                ));
            }
            if s.material_index == 0 || s.material_index > self.materials.len() {
                return Err(Error::validation(
                    format!("surfaces[{i}].material"),
                    format!(
                        "{} does not name a material in 1..{}",
                        s.material_index,
                        self.materials.len()
                    ),
                ));
            }
        }
        for (i, l) in self.links.iter().enumerate() {
            if !(l.tx_pos.is_finite() && l.rx_pos.is_finite()) {
                return Err(Error::validation(
                    format!("links[{i}].tx"),
                    "non-finite coordinate",
                ));
            }
            if l.tx_pos == l.rx_pos {
                return Err(Error::validation(
                    format!("links[{i}].rx"),
                    "tx and rx coincide",
                ));
            }
            if !(l.tx_power_dbm.is_finite() && l.tx_gain_db.is_finite() && l.rx_gain_db.is_finite())
            {
                return Err(Error::validation(
                    format!("links[{i}].p_dbm"),
                    "non-finite power or gain",
                ));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|source| Error::Parse {
            what: "scenario".into(),
            source,
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Copy of the scenario keeping only the links at `keep` (in that order).
    pub fn with_links(&self, keep: &[usize]) -> Scenario {
        Scenario {
            links: keep.iter().map(|&i| self.links[i].clone()).collect(),
            ..self.clone()
        }
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    Scenario::from_json(&text)
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &scenario.to_json())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// σ_z², in dB².
    pub noise_var: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Measured received power per link, dBm.
    pub measured_db: Vec<f64>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(Error::validation("noise_var", "must be finite and >= 0"));
        }
        if let Some(i) = self.measured_db.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(
                format!("measured_db[{i}]"),
                "non-finite value",
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: Dataset = serde_json::from_str(text).map_err(|source| Error::Parse {
            what: "dataset".into(),
            source,
        })?;
        d.validate()?;
        Ok(d)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serializes")
    }

    pub fn with_links(&self, keep: &[usize]) -> Dataset {
        Dataset {
            measured_db: keep.iter().map(|&i| self.measured_db[i]).collect(),
            ..self.clone()
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    Dataset::from_json(&text)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &dataset.to_json())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

/// Simulates measurements at the scenario's ground-truth permittivities:
/// `R̂_n = P_n + G_tx,n + G_rx,n + g̃_n(ε*) + z_n` with `z_n ~ N(0, σ_z²)`.
///
/// Noise is drawn in link order from [`Stream::new(seed)`](Stream).
pub fn synthesize_dataset(
    scenario: &Scenario,
    rays: &RayCache,
    sigma_z: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(sigma_z >= 0.0 && sigma_z.is_finite()) {
        return Err(Error::validation("sigma_z", "must be finite and >= 0"));
    }
    let truth = scenario.true_eps().ok_or_else(|| {
        Error::validation("materials.true_eps", "every material needs a ground truth")
    })?;
    let gains = forward::forward(scenario, rays, &truth)?;
    let mut stream = Stream::new(seed);
    let measured_db = scenario
        .links
        .iter()
        .zip(&gains)
        .map(|(link, g)| {
            let z = if sigma_z > 0.0 {
                sigma_z * stream.gaussian()
            } else {
                0.0
            };
            link.budget_db() + g + z
        })
        .collect();
    Ok(Dataset {
        noise_var: sigma_z * sigma_z,
        seed: Some(seed),
        measured_db,
    })
}

/// Removes the known power and gains: `y_n = R̂_n − (P_n + G_tx,n + G_rx,n)`.
pub fn normalize_measurements(scenario: &Scenario, dataset: &Dataset) -> Result<Vec<f64>> {
    if scenario.links.len() != dataset.measured_db.len() {
        return Err(Error::Dimension {
            what: "dataset.measured_db vs scenario.links",
            expected: scenario.links.len(),
            got: dataset.measured_db.len(),
        });
    }
    Ok(scenario
        .links
        .iter()
        .zip(&dataset.measured_db)
        .map(|(l, r)| r - l.budget_db())
        .collect())
}
