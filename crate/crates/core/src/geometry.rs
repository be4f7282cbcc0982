//! Exact 2-D primitives: boxes, polygons, gates and planar homographies.
//!
//! Everything here is generic over [`Scalar`]; the crate root re-exports
//! `f64` aliases that the rest of the engine uses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("bounding box must have finite coordinates and positive size")]
    InvalidBox,
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon has non-finite or repeated vertices")]
    DegenerateVertex,
    #[error("polygon is self-intersecting")]
    SelfIntersecting,
    #[error("polygon has zero area")]
    ZeroArea,
    #[error("gate endpoints coincide")]
    DegenerateGate,
    #[error("gate positive_side must be +1 or -1, got {0}")]
    InvalidSide(i8),
    #[error("homography is singular (|det| = {0:e})")]
    SingularHomography(f64),
    #[error("point projects at or behind the horizon (w = {0:e})")]
    Horizon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point<S> {
    pub x: S,
    pub y: S,
}

impl<S: Scalar> Point<S> {
    pub fn new(x: S, y: S) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, k: S) -> Self {
        Self::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, o: Self) -> S {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> S {
        self.dot(self).sqrt()
    }
}

/// Axis-aligned box in top-left + size form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[S; 4]", into = "[S; 4]")]
#[serde(bound(serialize = "S: Scalar + Serialize", deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct BBox<S> {
    pub x: S,
    pub y: S,
    pub w: S,
    pub h: S,
}

impl<S: Scalar> TryFrom<[S; 4]> for BBox<S> {
    type Error = GeometryError;

    fn try_from(v: [S; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl<S: Scalar> From<BBox<S>> for [S; 4] {
    fn from(b: BBox<S>) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl<S: Scalar> BBox<S> {
    pub fn new(x: S, y: S, w: S, h: S) -> Result<Self, GeometryError> {
        let finite = x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite();
        if !finite || w <= S::zero() || h <= S::zero() {
            return Err(GeometryError::InvalidBox);
        }
        Ok(Self { x, y, w, h })
    }

    pub fn from_center(cx: S, cy: S, w: S, h: S) -> Result<Self, GeometryError> {
        let half = S::lit(0.5);
        Self::new(cx - w * half, cy - h * half, w, h)
    }

    /// Tight box around a set of points; `None` when the hull is degenerate.
    pub fn enclosing(points: &[Point<S>]) -> Option<Self> {
        let first = points.first()?;
        let (mut x0, mut y0, mut x1, mut y1) = (first.x, first.y, first.x, first.y);
        for p in &points[1..] {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        Self::new(x0, y0, x1 - x0, y1 - y0).ok()
    }

    pub fn right(&self) -> S {
        self.x + self.w
    }

    pub fn bottom(&self) -> S {
        self.y + self.h
    }

    pub fn area(&self) -> S {
        self.w * self.h
    }

    pub fn center(&self) -> Point<S> {
        let half = S::lit(0.5);
        Point::new(self.x + self.w * half, self.y + self.h * half)
    }

    /// Ground-contact point used for calibrated measurements.
    pub fn bottom_center(&self) -> Point<S> {
        Point::new(self.x + self.w * S::lit(0.5), self.bottom())
    }

    /// Corners in counter-clockwise order (y up convention).
    pub fn corners(&self) -> [Point<S>; 4] {
        [
            Point::new(self.x, self.y),
            Point::new(self.right(), self.y),
            Point::new(self.right(), self.bottom()),
            Point::new(self.x, self.bottom()),
        ]
    }

    pub fn intersection_area(&self, o: &Self) -> S {
        let iw = self.right().min(o.right()) - self.x.max(o.x);
        let ih = self.bottom().min(o.bottom()) - self.y.max(o.y);
        if iw <= S::zero() || ih <= S::zero() {
            S::zero()
        } else {
            iw * ih
        }
    }

    /// Clamp to `[0, width] x [0, height]`; `None` if nothing remains.
    pub fn clip_to(&self, width: S, height: S) -> Option<Self> {
        let x0 = self.x.max(S::zero());
        let y0 = self.y.max(S::zero());
        let x1 = self.right().min(width);
        let y1 = self.bottom().min(height);
        Self::new(x0, y0, x1 - x0, y1 - y0).ok()
    }
}

/// Intersection over union of two boxes.
pub fn iou<S: Scalar>(a: &BBox<S>, b: &BBox<S>) -> S {
    if a == b {
        return S::one();
    }
    let inter = a.intersection_area(b);
    if inter <= S::zero() {
        return S::zero();
    }
    let union = a.area() + b.area() - inter;
    (inter / union).min(S::one())
}

/// Simple polygon with counter-clockwise vertex order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "Vec<[S; 2]>")]
#[serde(bound(serialize = "S: Scalar + Serialize"))]
pub struct Polygon<S> {
    vertices: Vec<Point<S>>,
}

impl<S: Scalar> From<Polygon<S>> for Vec<[S; 2]> {
    fn from(p: Polygon<S>) -> Self {
        p.vertices.iter().map(|v| [v.x, v.y]).collect()
    }
}

impl<'de, S: Scalar + Deserialize<'de>> Deserialize<'de> for Polygon<S> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw: Vec<[S; 2]> = Vec::deserialize(d)?;
        Polygon::new(raw.into_iter().map(|[x, y]| Point::new(x, y)).collect())
            .map_err(serde::de::Error::custom)
    }
}

impl<S: Scalar> Polygon<S> {
    /// Validates simplicity and non-zero area, then normalizes to CCW order.
    pub fn new(mut vertices: Vec<Point<S>>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::TooFewVertices(n));
        }
        for i in 0..n {
            let p = vertices[i];
            if !p.is_finite() || p == vertices[(i + 1) % n] {
                return Err(GeometryError::DegenerateVertex);
            }
        }
        for i in 0..n {
            let (a0, a1) = (vertices[i], vertices[(i + 1) % n]);
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (b0, b1) = (vertices[j], vertices[(j + 1) % n]);
                if adjacent {
                    // Adjacent edges may only share their common vertex.
                    let shared = if j == i + 1 { a1 } else { a0 };
                    let (other_a, other_b) = if j == i + 1 { (a0, b1) } else { (a1, b0) };
                    if orient(shared, other_a, other_b) == S::zero()
                        && (other_a.sub(shared)).dot(other_b.sub(shared)) > S::zero()
                    {
                        return Err(GeometryError::SelfIntersecting);
                    }
                } else if segments_intersect(a0, a1, b0, b1) {
                    return Err(GeometryError::SelfIntersecting);
                }
            }
        }
        let area = signed_area(&vertices);
        if area == S::zero() {
            return Err(GeometryError::ZeroArea);
        }
        if area < S::zero() {
            vertices.reverse();
        }
        Ok(Self { vertices })
    }

    pub fn rect(x0: S, y0: S, x1: S, y1: S) -> Result<Self, GeometryError> {
        Self::new(vec![
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ])
    }

    pub fn vertices(&self) -> &[Point<S>] {
        &self.vertices
    }

    pub fn area(&self) -> S {
        signed_area(&self.vertices)
    }

    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            orient(
                self.vertices[i],
                self.vertices[(i + 1) % n],
                self.vertices[(i + 2) % n],
            ) >= S::zero()
        })
    }

    /// Even-odd rule; boundary points count as inside.
    pub fn contains(&self, p: Point<S>) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if orient(a, b, p) == S::zero() && on_segment(a, b, p) {
                return true;
            }
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Area of `self ∩ b`.
    ///
    /// Sutherland–Hodgman with the box as (convex) clip window. The subject
    /// may be concave: the spurious edges SH emits along the window boundary
    /// are traversed in both directions and contribute zero signed area.
    pub fn intersection_area(&self, b: &BBox<S>) -> S {
        let mut poly = self.vertices.clone();
        let edges = [
            (Point::new(S::one(), S::zero()), b.x),
            (Point::new(-S::one(), S::zero()), -b.right()),
            (Point::new(S::zero(), S::one()), b.y),
            (Point::new(S::zero(), -S::one()), -b.bottom()),
        ];
        // Keep points with n·p >= c.
        for (normal, c) in edges {
            if poly.is_empty() {
                break;
            }
            poly = clip_half_plane(&poly, normal, c);
        }
        if poly.len() < 3 {
            return S::zero();
        }
        signed_area(&poly).abs()
    }
}

fn clip_half_plane<S: Scalar>(poly: &[Point<S>], normal: Point<S>, c: S) -> Vec<Point<S>> {
    let mut out = Vec::with_capacity(poly.len() + 4);
    let n = poly.len();
    for i in 0..n {
        let cur = poly[i];
        let nxt = poly[(i + 1) % n];
        let dc = normal.dot(cur) - c;
        let dn = normal.dot(nxt) - c;
        let cur_in = dc >= S::zero();
        let nxt_in = dn >= S::zero();
        if cur_in {
            out.push(cur);
        }
        if cur_in != nxt_in {
            let t = dc / (dc - dn);
            out.push(cur.add(nxt.sub(cur).scale(t)));
        }
    }
    out
}

fn signed_area<S: Scalar>(v: &[Point<S>]) -> S {
    let n = v.len();
    let mut acc = S::zero();
    for i in 0..n {
        acc += v[i].cross(v[(i + 1) % n]);
    }
    acc * S::lit(0.5)
}

/// Fraction of `b`'s area lying inside `poly`.
pub fn overlap_fraction<S: Scalar>(poly: &Polygon<S>, b: &BBox<S>) -> S {
    let f = poly.intersection_area(b) / b.area();
    f.max(S::zero()).min(S::one())
}

fn orient<S: Scalar>(a: Point<S>, b: Point<S>, c: Point<S>) -> S {
    b.sub(a).cross(c.sub(a))
}

fn on_segment<S: Scalar>(a: Point<S>, b: Point<S>, p: Point<S>) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed segment intersection (touching endpoints count).
pub fn segments_intersect<S: Scalar>(p1: Point<S>, p2: Point<S>, q1: Point<S>, q2: Point<S>) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    let z = S::zero();
    if ((d1 > z && d2 < z) || (d1 < z && d2 > z)) && ((d3 > z && d4 < z) || (d3 < z && d4 > z)) {
        return true;
    }
    (d1 == z && on_segment(q1, q2, p1))
        || (d2 == z && on_segment(q1, q2, p2))
        || (d3 == z && on_segment(p1, p2, q1))
        || (d4 == z && on_segment(p1, p2, q2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Crossing {
    Forward,
    Backward,
}

impl Crossing {
    pub fn reversed(self) -> Self {
        match self {
            Crossing::Forward => Crossing::Backward,
            Crossing::Backward => Crossing::Forward,
        }
    }
}

/// Directed counting line.
///
/// With `positive_side = +1`, motion from the left of `p0 → p1` to its
/// right (y-up orientation) is the forward direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar + Serialize", deserialize = "S: Scalar + Deserialize<'de>"))]
#[serde(try_from = "GateRepr<S>", into = "GateRepr<S>")]
pub struct Gate<S> {
    pub id: String,
    pub p0: Point<S>,
    pub p1: Point<S>,
    pub positive_side: i8,
}

#[derive(Serialize, Deserialize)]
struct GateRepr<S> {
    id: String,
    p0: [S; 2],
    p1: [S; 2],
    #[serde(default = "default_side")]
    positive_side: i8,
}

fn default_side() -> i8 {
    1
}

impl<S: Scalar> TryFrom<GateRepr<S>> for Gate<S> {
    type Error = GeometryError;

    fn try_from(r: GateRepr<S>) -> Result<Self, Self::Error> {
        Gate::new(
            r.id,
            Point::new(r.p0[0], r.p0[1]),
            Point::new(r.p1[0], r.p1[1]),
            r.positive_side,
        )
    }
}

impl<S: Scalar> From<Gate<S>> for GateRepr<S> {
    fn from(g: Gate<S>) -> Self {
        GateRepr {
            id: g.id,
            p0: [g.p0.x, g.p0.y],
            p1: [g.p1.x, g.p1.y],
            positive_side: g.positive_side,
        }
    }
}

impl<S: Scalar> Gate<S> {
    pub fn new(
        id: impl Into<String>,
        p0: Point<S>,
        p1: Point<S>,
        positive_side: i8,
    ) -> Result<Self, GeometryError> {
        if !p0.is_finite() || !p1.is_finite() || p0 == p1 {
            return Err(GeometryError::DegenerateGate);
        }
        if positive_side != 1 && positive_side != -1 {
            return Err(GeometryError::InvalidSide(positive_side));
        }
        Ok(Self {
            id: id.into(),
            p0,
            p1,
            positive_side,
        })
    }
}

/// Signed crossing of the motion `prev → curr` over gate `g`.
pub fn gate_crossing<S: Scalar>(prev: Point<S>, curr: Point<S>, g: &Gate<S>) -> Option<Crossing> {
    if prev == curr || !segments_intersect(prev, curr, g.p0, g.p1) {
        return None;
    }
    // Positive when the motion goes from the gate's left to its right.
    let side = curr.sub(prev).cross(g.p1.sub(g.p0));
    let z = S::zero();
    if side == z {
        return None;
    }
    let positive = side > z;
    if positive == (g.positive_side > 0) {
        Some(Crossing::Forward)
    } else {
        Some(Crossing::Backward)
    }
}

/// Row-major 3x3 planar homography.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar + Serialize", deserialize = "S: Scalar + Deserialize<'de>"))]
#[serde(try_from = "[[S; 3]; 3]", into = "[[S; 3]; 3]")]
pub struct Homography<S> {
    m: [[S; 3]; 3],
}

impl<S: Scalar> TryFrom<[[S; 3]; 3]> for Homography<S> {
    type Error = GeometryError;

    fn try_from(m: [[S; 3]; 3]) -> Result<Self, Self::Error> {
        Homography::new(m)
    }
}

impl<S: Scalar> From<Homography<S>> for [[S; 3]; 3] {
    fn from(h: Homography<S>) -> Self {
        h.m
    }
}

impl<S: Scalar> Homography<S> {
    pub fn new(m: [[S; 3]; 3]) -> Result<Self, GeometryError> {
        let h = Self { m };
        let det = h.det();
        if !det.is_finite() || det.abs() <= S::lit(1e-12) {
            return Err(GeometryError::SingularHomography(det.to_f64_lossy()));
        }
        Ok(h)
    }

    pub fn identity() -> Self {
        let (o, z) = (S::one(), S::zero());
        Self {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    pub fn matrix(&self) -> &[[S; 3]; 3] {
        &self.m
    }

    pub fn det(&self) -> S {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Self {
        let m = &self.m;
        let d = self.det();
        let c = |r0: usize, c0: usize, r1: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        let adj = [
            [c(1, 1, 2, 2), -c(0, 1, 2, 2), c(0, 1, 1, 2)],
            [-c(1, 0, 2, 2), c(0, 0, 2, 2), -c(0, 0, 1, 2)],
            [c(1, 0, 2, 1), -c(0, 0, 2, 1), c(0, 0, 1, 1)],
        ];
        let mut inv = [[S::zero(); 3]; 3];
        for r in 0..3 {
            for col in 0..3 {
                inv[r][col] = adj[r][col] / d;
            }
        }
        Self { m: inv }
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Self) -> Self {
        let mut out = [[S::zero(); 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).fold(S::zero(), |acc, k| acc + self.m[r][k] * first.m[k][c]);
            }
        }
        Self { m: out }
    }

    pub fn project(&self, p: Point<S>) -> Result<Point<S>, GeometryError> {
        let m = &self.m;
        let x = m[0][0] * p.x + m[0][1] * p.y + m[0][2];
        let y = m[1][0] * p.x + m[1][1] * p.y + m[1][2];
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if !(w.abs() > S::lit(1e-9)) {
            return Err(GeometryError::Horizon(w.to_f64_lossy()));
        }
        Ok(Point::new(x / w, y / w))
    }
}

/// Free-function form of [`Homography::project`].
pub fn project<S: Scalar>(h: &Homography<S>, p: Point<S>) -> Result<Point<S>, GeometryError> {
    h.project(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox<f64> {
        BBox::new(x, y, w, h).unwrap()
    }

    fn p(x: f64, y: f64) -> Point<f64> {
        Point::new(x, y)
    }

    #[test]
    fn iou_cases() {
        assert_eq!(iou(&b(0., 0., 2., 2.), &b(0., 0., 2., 2.)), 1.0);
        assert_eq!(iou(&b(0., 0., 2., 2.), &b(5., 5., 1., 1.)), 0.0);
        // inter 2, union 6
        assert!((iou(&b(0., 0., 2., 2.), &b(1., 0., 2., 2.)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn iou_in_f32() {
        let a = BBox::<f32>::new(0., 0., 2., 2.).unwrap();
        let c = BBox::<f32>::new(1., 0., 2., 2.).unwrap();
        assert!((iou(&a, &c) - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(BBox::new(0., 0., 0., 1.).is_err());
        assert!(BBox::new(0., 0., 1., -1.).is_err());
        assert!(BBox::new(f64::NAN, 0., 1., 1.).is_err());
    }

    #[test]
    fn overlap_cases() {
        let big = Polygon::rect(-10., -10., 10., 10.).unwrap();
        assert_eq!(overlap_fraction(&big, &b(0., 0., 1., 1.)), 1.0);
        assert_eq!(overlap_fraction(&big, &b(20., 20., 1., 1.)), 0.0);
        let half = Polygon::new(vec![p(0., 0.), p(0.5, 0.), p(0.5, 1.), p(0., 1.)]).unwrap();
        assert!((overlap_fraction(&half, &b(0., 0., 1., 1.)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn overlap_concave_subject() {
        // U shape: 3x3 square minus the middle column notch from the top.
        let u = Polygon::new(vec![
            p(0., 0.),
            p(3., 0.),
            p(3., 3.),
            p(2., 3.),
            p(2., 1.),
            p(1., 1.),
            p(1., 3.),
            p(0., 3.),
        ])
        .unwrap();
        // Box covers the notch fully and both arms partially.
        let bx = b(0.5, 0.5, 2., 2.);
        // arms: [0.5,1]x[0.5,2.5] + [2,2.5]x[0.5,2.5] = 1 + 1; bottom strip [1,2]x[0.5,1] = 0.5
        assert!((overlap_fraction(&u, &bx) - 2.5 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn polygon_validation() {
        assert_eq!(
            Polygon::new(vec![p(0., 0.), p(1., 1.)]).unwrap_err(),
            GeometryError::TooFewVertices(2)
        );
        // bow tie
        assert_eq!(
            Polygon::new(vec![p(0., 0.), p(1., 1.), p(1., 0.), p(0., 1.)]).unwrap_err(),
            GeometryError::SelfIntersecting
        );
        // collinear: the closing edge folds back over the others
        assert!(Polygon::new(vec![p(0., 0.), p(1., 0.), p(2., 0.)]).is_err());
        // clockwise input becomes counter-clockwise
        let cw = Polygon::new(vec![p(0., 0.), p(0., 1.), p(1., 1.), p(1., 0.)]).unwrap();
        assert!(cw.area() > 0.0);
        assert!(cw.is_convex());
    }

    #[test]
    fn point_in_polygon() {
        let sq = Polygon::rect(0., 0., 2., 2.).unwrap();
        assert!(sq.contains(p(1., 1.)));
        assert!(sq.contains(p(0., 1.)));
        assert!(!sq.contains(p(3., 1.)));
    }

    #[test]
    fn gate_crossing_cases() {
        let g = Gate::new("g", p(0., 0.), p(0., 2.), 1).unwrap();
        assert_eq!(gate_crossing(p(-1., 1.), p(1., 1.), &g), Some(Crossing::Forward));
        assert_eq!(gate_crossing(p(-1., 3.), p(1., 3.), &g), None);
        assert_eq!(gate_crossing(p(1., 1.), p(-1., 1.), &g), Some(Crossing::Backward));
        // grazing an endpoint still counts
        assert_eq!(gate_crossing(p(-1., 2.), p(1., 2.), &g), Some(Crossing::Forward));
        let flipped = Gate::new("g", p(0., 0.), p(0., 2.), -1).unwrap();
        assert_eq!(gate_crossing(p(-1., 1.), p(1., 1.), &flipped), Some(Crossing::Backward));
        // motion along the gate has no side
        assert_eq!(gate_crossing(p(0., -1.), p(0., 3.), &g), None);
    }

    #[test]
    fn gate_validation() {
        assert_eq!(Gate::new("g", p(1., 1.), p(1., 1.), 1).unwrap_err(), GeometryError::DegenerateGate);
        assert_eq!(Gate::new("g", p(0., 0.), p(1., 1.), 0).unwrap_err(), GeometryError::InvalidSide(0));
    }

    #[test]
    fn projection_cases() {
        let id = Homography::<f64>::identity();
        assert_eq!(id.project(p(3., 4.)).unwrap(), p(3., 4.));
        let s = Homography::new([[2., 0., 0.], [0., 2., 0.], [0., 0., 1.]]).unwrap();
        assert_eq!(s.project(p(3., 4.)).unwrap(), p(6., 8.));
        let w = Homography::new([[1., 0., 0.], [0., 1., 0.], [0., 0., 2.]]).unwrap();
        assert_eq!(w.project(p(3., 4.)).unwrap(), p(1.5, 2.0));
    }

    #[test]
    fn horizon_and_singular() {
        let h = Homography::new([[1., 0., 0.], [0., 1., 0.], [0., 1., -4.]]).unwrap();
        assert!(matches!(h.project(p(0., 4.)), Err(GeometryError::Horizon(_))));
        assert!(matches!(
            Homography::new([[1., 0., 0.], [2., 0., 0.], [0., 0., 1.]]),
            Err(GeometryError::SingularHomography(_))
        ));
    }

    #[test]
    fn serde_shapes() {
        let bx: BBox<f64> = serde_json::from_str("[1,2,3,4]").unwrap();
        assert_eq!(bx, b(1., 2., 3., 4.));
        assert!(serde_json::from_str::<BBox<f64>>("[1,2,0,4]").is_err());
        let poly: Polygon<f64> = serde_json::from_str("[[0,0],[0,1],[1,1],[1,0]]").unwrap();
        assert!(poly.area() > 0.0);
        assert!(serde_json::from_str::<Polygon<f64>>("[[0,0],[1,1],[1,0],[0,1]]").is_err());
        let g: Gate<f64> = serde_json::from_str(r#"{"id":"N","p0":[0,0],"p1":[0,2]}"#).unwrap();
        assert_eq!(g.positive_side, 1);
    }
}
