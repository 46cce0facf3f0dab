//! 2D image-method ray enumeration.
//!
//! For every sequence of up to `max_reflections` surfaces (no surface twice in
//! a row) the transmitter is mirrored across each surface line in turn; the
//! path is then recovered backwards from the receiver by intersecting the
//! straight image→target segment with each mirror. A candidate survives when
//! every reflection point lies on its finite surface, no incidence is grazing,
//! and no leg is crossed by any surface.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{line_params, mirror, Point};
use crate::par;
use crate::scenario::{Scenario, Surface};

/// Endpoint tolerance of the occlusion test, meters.
pub const EPS_GEO: f64 = 1e-9;
/// Rays with incidence at or beyond π/2 − this are discarded.
pub const GRAZING_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflection {
    pub material_index: usize,
    /// Angle from the surface normal, radians, in [0, π/2).
    pub incidence_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub total_length_m: f64,
    pub reflections: Vec<Reflection>,
    pub blocked: bool,
    /// Surface indices hit, in order.
    pub surfaces: Vec<usize>,
    /// Polyline TX, bounce points..., RX.
    pub points: Vec<Point>,
}

impl Ray {
    pub fn is_los(&self) -> bool {
        self.reflections.is_empty()
    }
}

/// Rays of every link of a scenario, traced once. Links with no ray hold an
/// empty list; see [`RayCache::unusable_links`].
#[derive(Debug, Clone, PartialEq)]
pub struct RayCache {
    pub links: Vec<Vec<Ray>>,
}

impl RayCache {
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn link(&self, n: usize) -> &[Ray] {
        &self.links[n]
    }

    pub fn unusable_links(&self) -> Vec<usize> {
        (0..self.links.len())
            .filter(|&n| self.links[n].is_empty())
            .collect()
    }

    pub fn with_links(&self, keep: &[usize]) -> RayCache {
        RayCache {
            links: keep.iter().map(|&n| self.links[n].clone()).collect(),
        }
    }

    /// Writes the per-link ray table as CSV:
    /// `link,ray,length_m,n_bounces,materials,angles` with `;`-joined lists.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "link",
            "ray",
            "length_m",
            "n_bounces",
            "materials",
            "angles",
        ])?;
        for (n, rays) in self.links.iter().enumerate() {
            for (j, ray) in rays.iter().enumerate() {
                let mats: Vec<String> = ray
                    .reflections
                    .iter()
                    .map(|r| r.material_index.to_string())
                    .collect();
                let angles: Vec<String> = ray
                    .reflections
                    .iter()
                    .map(|r| r.incidence_angle.to_string())
                    .collect();
                w.write_record([
                    n.to_string(),
                    j.to_string(),
                    ray.total_length_m.to_string(),
                    ray.reflections.len().to_string(),
                    mats.join(";"),
                    angles.join(";"),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// All unblocked rays of link `link_index`, sorted by length.
pub fn trace_link(scenario: &Scenario, link_index: usize) -> Result<Vec<Ray>> {
    let link = scenario.links.get(link_index).ok_or_else(|| {
        Error::validation(
            "link_index",
            format!("{link_index} out of range 0..{}", scenario.links.len()),
        )
    })?;
    let rays: Vec<Ray> = enumerate_rays(scenario, link.tx_pos, link.rx_pos)
        .into_iter()
        .filter(|r| !r.blocked)
        .collect();
    if rays.is_empty() {
        return Err(Error::UnusableLink {
            link: link_index,
            reason: "no unobstructed ray between tx and rx".into(),
        });
    }
    Ok(rays)
}

/// Traces every link (in parallel when enabled).
pub fn trace_all(scenario: &Scenario) -> RayCache {
    RayCache {
        links: par::map_range(scenario.links.len(), |n| {
            trace_link(scenario, n).unwrap_or_default()
        }),
    }
}

/// Every geometrically valid specular path from `tx` to `rx`, blocked or not,
/// sorted by length then by surface sequence.
pub fn enumerate_rays(scenario: &Scenario, tx: Point, rx: Point) -> Vec<Ray> {
    let surfaces = &scenario.surfaces;
    let mut out = Vec::new();
    out.push(build_ray(surfaces, &[], vec![tx, rx]));

    let mut seq = Vec::with_capacity(scenario.max_reflections);
    let mut images = Vec::with_capacity(scenario.max_reflections);
    extend_sequences(
        surfaces,
        scenario.max_reflections,
        tx,
        rx,
        &mut seq,
        &mut images,
        &mut out,
    );

    out.sort_by(|a, b| {
        a.total_length_m
            .total_cmp(&b.total_length_m)
            .then_with(|| a.surfaces.cmp(&b.surfaces))
    });
    out
}

fn extend_sequences(
    surfaces: &[Surface],
    max_depth: usize,
    tx: Point,
    rx: Point,
    seq: &mut Vec<usize>,
    images: &mut Vec<Point>,
    out: &mut Vec<Ray>,
) {
    if seq.len() == max_depth {
        return;
    }
    let source = images.last().copied().unwrap_or(tx);
    for (s, surf) in surfaces.iter().enumerate() {
        if seq.last() == Some(&s) {
            continue;
        }
        seq.push(s);
        images.push(mirror(source, surf.endpoint_a, surf.endpoint_b));
        if let Some(points) = backtrace(surfaces, seq, images, tx, rx) {
            out.push(build_ray(surfaces, seq, points));
        }
        extend_sequences(surfaces, max_depth, tx, rx, seq, images, out);
        seq.pop();
        images.pop();
    }
}

/// Recovers the bounce points of a surface sequence from its images, or
/// `None` when the sequence yields no valid specular path.
fn backtrace(
    surfaces: &[Surface],
    seq: &[usize],
    images: &[Point],
    tx: Point,
    rx: Point,
) -> Option<Vec<Point>> {
    let k = seq.len();
    let mut points = vec![rx; k + 2];
    points[0] = tx;
    let mut target = rx;
    for j in (0..k).rev() {
        let surf = &surfaces[seq[j]];
        let (t, u) = line_params(images[j], target, surf.endpoint_a, surf.endpoint_b)?;
        if !(t > 0.0 && t < 1.0 && (0.0..=1.0).contains(&u)) {
            return None;
        }
        let p = surf
            .endpoint_a
            .add(surf.endpoint_b.sub(surf.endpoint_a).scale(u));
        points[j + 1] = p;
        target = p;
    }
    if points.windows(2).any(|w| w[0].dist(w[1]) <= EPS_GEO) {
        return None;
    }
    for j in 0..k {
        if incidence_angle(&surfaces[seq[j]], points[j], points[j + 1])
            >= FRAC_PI_2 - GRAZING_MARGIN
        {
            return None;
        }
    }
    Some(points)
}

/// Angle between the leg `from→at` and the normal of `surf`.
pub fn incidence_angle(surf: &Surface, from: Point, at: Point) -> f64 {
    let d = at.sub(from);
    let t = surf.endpoint_b.sub(surf.endpoint_a);
    // |sin| of the angle to the surface tangent equals |cos| of the angle to the normal.
    let cos_normal = (d.cross(t) / (d.norm() * t.norm())).abs().min(1.0);
    cos_normal.acos()
}

fn build_ray(surfaces: &[Surface], seq: &[usize], points: Vec<Point>) -> Ray {
    let total_length_m = points.windows(2).map(|w| w[0].dist(w[1])).sum();
    let reflections = seq
        .iter()
        .enumerate()
        .map(|(j, &s)| Reflection {
            material_index: surfaces[s].material_index,
            incidence_angle: incidence_angle(&surfaces[s], points[j], points[j + 1]),
        })
        .collect();
    let blocked = points.windows(2).any(|w| leg_blocked(surfaces, w[0], w[1]));
    Ray {
        total_length_m,
        reflections,
        blocked,
        surfaces: seq.to_vec(),
        points,
    }
}

fn leg_blocked(surfaces: &[Surface], p: Point, q: Point) -> bool {
    let tol = EPS_GEO / p.dist(q);
    surfaces.iter().any(|s| {
        matches!(line_params(p, q, s.endpoint_a, s.endpoint_b),
            Some((t, u)) if t > tol && t < 1.0 - tol && (0.0..=1.0).contains(&u))
    })
}
