//! Built-in synthetic scenarios.

use crate::error::{Error, Result};
use crate::forward::Polarization;
use crate::geometry::Point;
use crate::rng::Stream;
use crate::scenario::{Link, Material, Scenario, Surface};

/// Ground-truth permittivities assigned to materials 1, 2, … in turn.
pub const DEFAULT_TRUE_EPS: [f64; 6] = [4.0, 9.0, 5.5, 10.5, 3.0, 8.0];

/// A straight street canyon: two parallel walls of length `length_m`, `width_m`
/// apart, each cut into segments that cycle through the materials. Links are
/// placed uniformly inside the canyon.
#[derive(Debug, Clone, PartialEq)]
pub struct CanyonParams {
    pub num_materials: usize,
    pub num_links: usize,
    pub length_m: f64,
    pub width_m: f64,
    pub wavelength_m: f64,
    pub max_reflections: usize,
    pub prior: (f64, f64),
    /// Ground truth per material; defaults cycle through [`DEFAULT_TRUE_EPS`].
    pub true_eps: Option<Vec<f64>>,
    pub placement: Placement,
    pub seed: u64,
}

/// How link endpoints are drawn inside the canyon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Placement {
    /// Both ends uniform over the street, at least 10% of the width from either wall.
    Uniform,
    /// Both ends on one sidewalk, within `band_m` of the same wall and at
    /// most `max_range_m` apart along the street; the side is drawn per link.
    Sidewalk { band_m: f64, max_range_m: f64 },
}

impl Default for CanyonParams {
    fn default() -> Self {
        CanyonParams {
            num_materials: 2,
            num_links: 100,
            length_m: 200.0,
            width_m: 30.0,
            wavelength_m: 0.1,
            max_reflections: 2,
            prior: (1.0, 13.0),
            true_eps: None,
            placement: Placement::Sidewalk {
                band_m: 4.0,
                max_range_m: 40.0,
            },
            seed: 1,
        }
    }
}

fn materials(m: usize, prior: (f64, f64), true_eps: Option<&[f64]>) -> Result<Vec<Material>> {
    if m == 0 {
        return Err(Error::validation("num_materials", "must be at least 1"));
    }
    if let Some(t) = true_eps {
        if t.len() != m {
            return Err(Error::Dimension {
                what: "true_eps",
                expected: m,
                got: t.len(),
            });
        }
    }
    Ok((0..m)
        .map(|i| Material {
            index: i + 1,
            prior_lo: prior.0,
            prior_hi: prior.1,
            true_eps: Some(true_eps.map_or(DEFAULT_TRUE_EPS[i % DEFAULT_TRUE_EPS.len()], |t| t[i])),
        })
        .collect())
}

/// Draws `n` links, rejecting pairs closer than 1 m. `endpoints` draws one
/// (tx, rx) candidate from the stream.
fn random_links<F>(stream: &mut Stream, n: usize, mut endpoints: F) -> Vec<Link>
where
    F: FnMut(&mut Stream) -> (Point, Point),
{
    const POWERS_DBM: [f64; 3] = [23.0, 30.0, 43.0];
    let mut links = Vec::with_capacity(n);
    while links.len() < n {
        let (tx, rx) = endpoints(stream);
        let power = POWERS_DBM[(stream.uniform() * 3.0) as usize % 3];
        let g_tx = (stream.uniform() * 4.0).floor() * 3.0;
        if tx.dist(rx) < 1.0 {
            continue;
        }
        links.push(Link {
            tx_pos: tx,
            rx_pos: rx,
            tx_power_dbm: power,
            tx_gain_db: g_tx,
            rx_gain_db: 0.0,
        });
    }
    links
}

fn uniform_box(x: (f64, f64), y: (f64, f64)) -> impl FnMut(&mut Stream) -> (Point, Point) {
    move |s: &mut Stream| {
        let tx = Point::new(s.uniform_in(x.0, x.1), s.uniform_in(y.0, y.1));
        let rx = Point::new(s.uniform_in(x.0, x.1), s.uniform_in(y.0, y.1));
        (tx, rx)
    }
}

pub fn canyon(p: &CanyonParams) -> Result<Scenario> {
    if !(p.length_m > 0.0 && p.width_m > 0.0) {
        return Err(Error::validation(
            "canyon geometry",
            "length and width must be positive",
        ));
    }
    if p.num_links == 0 {
        return Err(Error::validation("num_links", "must be at least 1"));
    }
    let materials = materials(p.num_materials, p.prior, p.true_eps.as_deref())?;
    let per_wall = p.num_materials.div_ceil(2);
    let seg = p.length_m / per_wall as f64;
    let mut surfaces = Vec::with_capacity(2 * per_wall);
    for (w, y) in [0.0, p.width_m].into_iter().enumerate() {
        for j in 0..per_wall {
            surfaces.push(Surface {
                endpoint_a: Point::new(j as f64 * seg, y),
                endpoint_b: Point::new((j + 1) as f64 * seg, y),
                material_index: (w * per_wall + j) % p.num_materials + 1,
            });
        }
    }
    let mut stream = Stream::new(p.seed);
    let (x_lo, x_hi) = (0.05 * p.length_m, 0.95 * p.length_m);
    let links = match p.placement {
        Placement::Uniform => random_links(
            &mut stream,
            p.num_links,
            uniform_box((x_lo, x_hi), (0.1 * p.width_m, 0.9 * p.width_m)),
        ),
        Placement::Sidewalk {
            band_m,
            max_range_m,
        } => {
            if !(band_m > 0.0 && 2.0 * band_m < p.width_m && max_range_m >= 1.0) {
                return Err(Error::validation(
                    "placement",
                    "sidewalk band must be positive and narrower than half the street, range >= 1 m",
                ));
            }
            let width = p.width_m;
            random_links(&mut stream, p.num_links, move |s: &mut Stream| {
                let far_side = s.uniform() < 0.5;
                let mut offset = || {
                    let d = s.uniform_in(0.5, band_m);
                    if far_side {
                        width - d
                    } else {
                        d
                    }
                };
                let (ty, ry) = (offset(), offset());
                let tx_x = s.uniform_in(x_lo, x_hi);
                let rx_x = (tx_x + s.uniform_in(-max_range_m, max_range_m)).clamp(x_lo, x_hi);
                (Point::new(tx_x, ty), Point::new(rx_x, ry))
            })
        }
    };
    let s = Scenario {
        wavelength_m: p.wavelength_m,
        max_reflections: p.max_reflections,
        polarization: Polarization::Te,
        materials,
        surfaces,
        links,
    };
    s.validate()?;
    Ok(s)
}

/// No reflectors at all: every link is line-of-sight only, so no material
/// is observable.
pub fn free_space(num_materials: usize, num_links: usize, seed: u64) -> Result<Scenario> {
    if num_links == 0 {
        return Err(Error::validation("num_links", "must be at least 1"));
    }
    let mut stream = Stream::new(seed);
    let s = Scenario {
        wavelength_m: 0.1,
        max_reflections: 2,
        polarization: Polarization::Te,
        materials: materials(num_materials, (1.0, 13.0), None)?,
        surfaces: Vec::new(),
        links: random_links(
            &mut stream,
            num_links,
            uniform_box((0.0, 100.0), (0.0, 100.0)),
        ),
    };
    s.validate()?;
    Ok(s)
}
