//! Court polygon and the region filter applied before evaluation.

use crate::error::{Error, Result};
use crate::types::Point;

const EPS: f64 = 1e-9;

/// A simple (non-self-intersecting) polygon; the region is closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Court {
    vertices: Vec<Point>,
}

impl Court {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::domain("court polygon needs at least 3 vertices"));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::domain("court polygon has non-finite vertices"));
        }
        let n = vertices.len();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                let (c, d) = (vertices[j], vertices[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(Error::domain(format!(
                        "court polygon is self-intersecting (edges {i} and {j})"
                    )));
                }
            }
        }
        Ok(Court { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Even-odd containment; points on an edge count as inside.
    pub fn contains(&self, p: Point) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if on_segment(a, b, p) {
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
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    let scale = (b.x - a.x).abs().max((b.y - a.y).abs()).max(1.0);
    cross(a, b, p).abs() <= EPS * scale
        && p.x >= a.x.min(b.x) - EPS
        && p.x <= a.x.max(b.x) + EPS
        && p.y >= a.y.min(b.y) - EPS
        && p.y <= a.y.max(b.y) + EPS
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(c, d, a) || on_segment(c, d, b) || on_segment(a, b, c) || on_segment(a, b, d)
}

/// Keeps the items whose reference point lies on the court. Items without a
/// reference point, and everything when there is no court, are kept.
pub fn filter_court<T>(items: Vec<T>, court: Option<&Court>, reference: impl Fn(&T) -> Option<Point>) -> Vec<T> {
    match court {
        None => items,
        Some(court) => items
            .into_iter()
            .filter(|it| reference(it).map_or(true, |p| court.contains(p)))
            .collect(),
    }
}
