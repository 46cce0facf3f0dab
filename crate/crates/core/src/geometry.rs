use serde::{Deserialize, Serialize};

/// A point (or vector) in the plane, in meters. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point(pub [f64; 2]);

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point([x, y])
    }

    pub fn x(self) -> f64 {
        self.0[0]
    }

    pub fn y(self) -> f64 {
        self.0[1]
    }

    pub fn sub(self, o: Point) -> Point {
        Point::new(self.x() - o.x(), self.y() - o.y())
    }

    pub fn add(self, o: Point) -> Point {
        Point::new(self.x() + o.x(), self.y() + o.y())
    }

    pub fn scale(self, s: f64) -> Point {
        Point::new(self.x() * s, self.y() * s)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x() * o.x() + self.y() * o.y()
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x() * o.y() - self.y() * o.x()
    }

    pub fn norm(self) -> f64 {
        self.x().hypot(self.y())
    }

    pub fn dist(self, o: Point) -> f64 {
        self.sub(o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x().is_finite() && self.y().is_finite()
    }
}

/// Mirror `p` across the infinite line through `a` and `b`.
pub fn mirror(p: Point, a: Point, b: Point) -> Point {
    let d = b.sub(a);
    let t = p.sub(a).dot(d) / d.dot(d);
    let foot = a.add(d.scale(t));
    foot.scale(2.0).sub(p)
}

/// Intersection of segments `p0→p1` and `q0→q1` as parameters `(t, u)` with
/// the point at `p0 + t(p1−p0) = q0 + u(q1−q0)`. `None` for parallel segments.
pub fn line_params(p0: Point, p1: Point, q0: Point, q1: Point) -> Option<(f64, f64)> {
    let r = p1.sub(p0);
    let s = q1.sub(q0);
    let denom = r.cross(s);
    if denom == 0.0 {
        return None;
    }
    let qp = q0.sub(p0);
    Some((qp.cross(s) / denom, qp.cross(r) / denom))
}
