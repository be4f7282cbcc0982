//! Arc-length parameterised polylines in world metres.

use serde::{Deserialize, Serialize};
use xroads_core::Point;

use crate::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Polyline {
    pts: Vec<Point>,
    cum: Vec<f64>,
}

impl TryFrom<Vec<[f64; 2]>> for Polyline {
    type Error = SimError;

    fn try_from(raw: Vec<[f64; 2]>) -> Result<Self, Self::Error> {
        Polyline::new(raw.into_iter().map(|[x, y]| Point::new(x, y)).collect())
    }
}

impl From<Polyline> for Vec<[f64; 2]> {
    fn from(p: Polyline) -> Self {
        p.pts.iter().map(|q| [q.x, q.y]).collect()
    }
}

impl Polyline {
    pub fn new(pts: Vec<Point>) -> Result<Self, SimError> {
        if pts.len() < 2 {
            return Err(SimError::Config("a path needs at least two points".into()));
        }
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            let d = w[1].sub(w[0]).norm();
            if !(d.is_finite() && d > 1e-9) {
                return Err(SimError::Config("path has repeated or non-finite points".into()));
            }
            cum.push(cum.last().copied().unwrap_or(0.0) + d);
        }
        Ok(Self { pts, cum })
    }

    pub fn points(&self) -> &[Point] {
        &self.pts
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().expect("non-empty")
    }

    /// Position and unit heading at arc length `s`; extrapolates linearly
    /// beyond either end.
    pub fn at(&self, s: f64) -> (Point, Point) {
        let n = self.pts.len();
        let seg = match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let (a, b) = (self.pts[seg], self.pts[seg + 1]);
        let len = self.cum[seg + 1] - self.cum[seg];
        let dir = b.sub(a).scale(1.0 / len);
        (a.add(dir.scale(s - self.cum[seg])), dir)
    }

    /// Straight segments joined by circular arcs sampled every `step` metres.
    pub fn builder(start: Point) -> PolylineBuilder {
        PolylineBuilder { pts: vec![start] }
    }
}

pub struct PolylineBuilder {
    pts: Vec<Point>,
}

impl PolylineBuilder {
    pub fn line_to(mut self, p: Point) -> Self {
        self.pts.push(p);
        self
    }

    /// Arc around `center` from the current point, sweeping `sweep` radians
    /// (positive counter-clockwise).
    pub fn arc(mut self, center: Point, sweep: f64, step: f64) -> Self {
        let start = *self.pts.last().expect("builder starts with a point");
        let r = start.sub(center).norm();
        let a0 = (start.y - center.y).atan2(start.x - center.x);
        let n = ((r * sweep.abs()) / step).ceil().max(1.0) as usize;
        for k in 1..=n {
            let a = a0 + sweep * k as f64 / n as f64;
            self.pts.push(Point::new(center.x + r * a.cos(), center.y + r * a.sin()));
        }
        self
    }

    pub fn build(self) -> Result<Polyline, SimError> {
        Polyline::new(self.pts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arc_length_lookup() {
        let p = Polyline::new(vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(10.0, 5.0)]).unwrap();
        assert_eq!(p.length(), 15.0);
        let (q, d) = p.at(12.0);
        assert_eq!((q.x, q.y, d.x, d.y), (10.0, 2.0, 0.0, 1.0));
        let (q, _) = p.at(-2.0);
        assert_eq!((q.x, q.y), (-2.0, 0.0));
        let (q, _) = p.at(10.0);
        assert_eq!((q.x, q.y), (10.0, 0.0));
    }

    #[test]
    fn quarter_arc_length() {
        let p = Polyline::builder(Point::new(5.0, 0.0))
            .arc(Point::new(0.0, 0.0), std::f64::consts::FRAC_PI_2, 0.1)
            .build()
            .unwrap();
        let exact = 5.0 * std::f64::consts::FRAC_PI_2;
        assert!((p.length() - exact).abs() < 1e-3);
        let end = p.points().last().unwrap();
        assert!(end.x.abs() < 1e-12 && (end.y - 5.0).abs() < 1e-12);
    }
}
