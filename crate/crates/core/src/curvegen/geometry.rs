//! Polygon sampling and polyline densification in unit coordinates.

use rand::Rng;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Minimum pairwise vertex distance, unit coordinates.
pub const MIN_VERTEX_DISTANCE: f64 = 0.15;
/// Vertices are drawn from `[VERTEX_LO, VERTEX_HI]^2`, leaving room for
/// rotation and scaling before the shape leaves the frame.
pub const VERTEX_LO: f64 = 0.1;
pub const VERTEX_HI: f64 = 0.9;
/// Rejects near-collinear vertex sets, which rasterize as a single stroke.
const MIN_AREA: f64 = 0.02;
const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Triangle,
    Quadrangle,
}

impl ShapeKind {
    pub fn vertex_count(self) -> usize {
        match self {
            ShapeKind::Triangle => 3,
            ShapeKind::Quadrangle => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub vertices: Vec<Point>,
    pub convex_required: bool,
}

impl ShapeSpec {
    pub fn outline(&self) -> Polyline {
        Polyline {
            points: self.vertices.clone(),
            closed: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<Point>,
    /// When set, the last point connects back to the first.
    pub closed: bool,
}

impl Polyline {
    pub fn open(points: Vec<Point>) -> Self {
        Polyline { points, closed: false }
    }

    pub fn closed(points: Vec<Point>) -> Self {
        Polyline { points, closed: true }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Consecutive point pairs, including the closing edge.
    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.points.len();
        let count = match (self.closed, n) {
            (_, 0 | 1) => 0,
            (true, 2) => 1,
            (true, _) => n,
            (false, _) => n - 1,
        };
        (0..count).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(p: Point, q: Point, r: Point) -> bool {
    q[0] >= p[0].min(r[0]) && q[0] <= p[0].max(r[0]) && q[1] >= p[1].min(r[1]) && q[1] <= p[1].max(r[1])
}

/// Closed-segment intersection test (touching counts as intersecting).
pub fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, p1, q2))
        || (d2 == 0.0 && on_segment(q1, p2, q2))
        || (d3 == 0.0 && on_segment(p1, q1, p2))
        || (d4 == 0.0 && on_segment(p1, q2, p2))
}

/// True when no two non-adjacent edges of the closed polygon meet.
pub fn is_simple(vertices: &[Point]) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(vertices[i], vertices[(i + 1) % n], vertices[j], vertices[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

pub fn signed_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    (0..n)
        .map(|i| {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

pub fn is_convex(vertices: &[Point]) -> bool {
    let n = vertices.len();
    let signs: Vec<f64> = (0..n)
        .map(|i| cross(vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]))
        .collect();
    signs.iter().all(|&s| s > 0.0) || signs.iter().all(|&s| s < 0.0)
}

pub fn sample_polygon<R: Rng>(kind: ShapeKind, rng: &mut R) -> Result<ShapeSpec> {
    sample_polygon_with(kind, false, rng)
}

pub fn sample_polygon_with<R: Rng>(kind: ShapeKind, convex_required: bool, rng: &mut R) -> Result<ShapeSpec> {
    let n = kind.vertex_count();
    for _ in 0..MAX_ATTEMPTS {
        let vertices: Vec<Point> = (0..n)
            .map(|_| [rng.random_range(VERTEX_LO..=VERTEX_HI), rng.random_range(VERTEX_LO..=VERTEX_HI)])
            .collect();
        let spread = (0..n).all(|i| (i + 1..n).all(|j| dist(vertices[i], vertices[j]) >= MIN_VERTEX_DISTANCE));
        if !spread || signed_area(&vertices).abs() < MIN_AREA || !is_simple(&vertices) {
            continue;
        }
        if convex_required && !is_convex(&vertices) {
            continue;
        }
        return Ok(ShapeSpec {
            kind,
            vertices,
            convex_required,
        });
    }
    Err(Error::Generation(format!(
        "no valid {kind:?} after {MAX_ATTEMPTS} attempts"
    )))
}

/// Inserts points so consecutive points are at most `max_step` apart. Each
/// edge is split into equal pieces; original vertices are kept.
pub fn densify_edges(line: &Polyline, max_step: f64) -> Result<Polyline> {
    if !(max_step > 0.0 && max_step.is_finite()) {
        return Err(Error::InvalidParameter(format!("densify step must be positive, got {max_step}")));
    }
    if line.points.len() < 2 {
        return Ok(line.clone());
    }
    let mut points = Vec::new();
    for (a, b) in line.segments() {
        let pieces = (dist(a, b) / max_step).ceil().max(1.0) as usize;
        for k in 0..pieces {
            let s = k as f64 / pieces as f64;
            points.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
        }
    }
    if !line.closed {
        points.push(*line.points.last().unwrap());
    }
    Ok(Polyline {
        points,
        closed: line.closed,
    })
}

pub fn max_spacing(line: &Polyline) -> f64 {
    line.segments().map(|(a, b)| dist(a, b)).fold(0.0, f64::max)
}

pub fn arc_length(line: &Polyline) -> f64 {
    line.segments().map(|(a, b)| dist(a, b)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn intersection_examples() {
        assert!(segments_intersect([0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]));
        assert!(!segments_intersect([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]));
        // touching endpoint
        assert!(segments_intersect([0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [2.0, 1.0]));
        // collinear, disjoint
        assert!(!segments_intersect([0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]));
    }

    #[test]
    fn bowtie_is_not_simple() {
        let bowtie = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(!is_simple(&bowtie));
        let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(is_simple(&square) && is_convex(&square));
        let dart = [[0.0, 0.0], [1.0, 0.5], [0.0, 1.0], [0.3, 0.5]];
        assert!(is_simple(&dart) && !is_convex(&dart));
    }

    #[test]
    fn sampled_polygons_are_valid_and_reproducible() {
        for kind in [ShapeKind::Triangle, ShapeKind::Quadrangle] {
            for s in 0..200 {
                let spec = sample_polygon(kind, &mut seed::rng(s)).unwrap();
                assert_eq!(spec.vertices.len(), kind.vertex_count());
                assert!(is_simple(&spec.vertices));
                let v = &spec.vertices;
                for i in 0..v.len() {
                    for j in i + 1..v.len() {
                        assert!(dist(v[i], v[j]) >= MIN_VERTEX_DISTANCE);
                    }
                }
                assert_eq!(spec, sample_polygon(kind, &mut seed::rng(s)).unwrap());
            }
        }
        let convex = sample_polygon_with(ShapeKind::Quadrangle, true, &mut seed::rng(3)).unwrap();
        assert!(is_convex(&convex.vertices));
    }

    #[test]
    fn some_quadrangles_are_nonconvex() {
        let nonconvex = (0..200)
            .filter(|&s| !is_convex(&sample_polygon(ShapeKind::Quadrangle, &mut seed::rng(s)).unwrap().vertices))
            .count();
        assert!(nonconvex > 0);
    }

    #[test]
    fn densify_respects_spacing() {
        let tri = Polyline::closed(vec![[0.1, 0.1], [0.9, 0.2], [0.4, 0.8]]);
        let d = densify_edges(&tri, 0.01).unwrap();
        assert!(max_spacing(&d) <= 0.01 + 1e-15);
        assert!((arc_length(&d) - arc_length(&tri)).abs() < 1e-12);
        assert_eq!(d.points[0], tri.points[0]);

        let seg = densify_edges(&Polyline::open(vec![[0.0, 0.0], [1.0, 0.0]]), 0.3).unwrap();
        assert_eq!(seg.len(), 5);
        assert_eq!(*seg.points.last().unwrap(), [1.0, 0.0]);
        assert!(densify_edges(&tri, 0.0).is_err());
    }
}
