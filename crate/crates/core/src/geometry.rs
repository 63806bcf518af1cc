//! Planar polygon primitives: area, exact intersection area and IoU.
//!
//! Intersection area is computed from Green's theorem: the boundary of
//! `A ∩ B` is made of the pieces of `∂A` lying inside `B` plus the pieces of
//! `∂B` lying inside `A`. Every edge is split at all crossings with the other
//! polygon and each piece is classified by its midpoint. Edges shared by both
//! polygons with the same orientation are counted half from each side, which
//! makes the result symmetric in its arguments bit for bit.
//!
//! Polygons are normalized on construction (closing vertex dropped,
//! near-duplicate vertices merged, exterior counter-clockwise, holes
//! clockwise, every ring rotated to a canonical start vertex) so that results
//! never depend on the vertex cycle a caller happened to supply.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

use crate::error::GeometryError;

/// Consecutive vertices closer than this are merged.
pub const DEDUP_TOLERANCE: f64 = 1e-9;

const PARAM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    fn dist(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    fn lex_cmp(&self, o: &Point) -> Ordering {
        self.x.total_cmp(&o.x).then(self.y.total_cmp(&o.y))
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point::new(x, y)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    fn of(points: &[Point]) -> BBox {
        let mut b = BBox {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for p in points {
            b.min_x = b.min_x.min(p.x);
            b.min_y = b.min_y.min(p.y);
            b.max_x = b.max_x.max(p.x);
            b.max_y = b.max_y.max(p.y);
        }
        b
    }

    pub fn intersects(&self, o: &BBox) -> bool {
        self.min_x <= o.max_x && o.min_x <= self.max_x && self.min_y <= o.max_y && o.min_y <= self.max_y
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    /// Gap between the boxes (0 when they overlap).
    pub fn distance(&self, o: &BBox) -> f64 {
        let dx = (o.min_x - self.max_x).max(self.min_x - o.max_x).max(0.0);
        let dy = (o.min_y - self.max_y).max(self.min_y - o.max_y).max(0.0);
        dx.hypot(dy)
    }
}

/// A simple polygon with optional holes.
///
/// Exterior rings are stored counter-clockwise and holes clockwise, both
/// without a repeated closing vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    exterior: Vec<Point>,
    holes: Vec<Vec<Point>>,
    area: f64,
    bbox: BBox,
}

impl Polygon {
    /// Builds a validated, normalized polygon.
    pub fn new(exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Result<Self, GeometryError> {
        let mut exterior = clean_ring(exterior);
        if exterior.len() < 3 {
            return Err(GeometryError::DegenerateRing { vertices: exterior.len() });
        }
        let ext_area = signed_area(&exterior);
        if !(ext_area.abs() > 0.0) || !ext_area.is_finite() {
            return Err(GeometryError::ZeroArea);
        }
        if ext_area < 0.0 {
            exterior.reverse();
        }
        if ring_self_crosses(&exterior) {
            return Err(GeometryError::SelfIntersecting);
        }
        canonical_rotation(&mut exterior);

        let mut rings = Vec::with_capacity(holes.len());
        for hole in holes {
            let mut hole = clean_ring(hole);
            if hole.len() < 3 {
                return Err(GeometryError::DegenerateRing { vertices: hole.len() });
            }
            let a = signed_area(&hole);
            if !(a.abs() > 0.0) {
                return Err(GeometryError::ZeroArea);
            }
            if a > 0.0 {
                hole.reverse();
            }
            if ring_self_crosses(&hole) {
                return Err(GeometryError::SelfIntersecting);
            }
            canonical_rotation(&mut hole);
            rings.push(hole);
        }
        rings.sort_by(|a, b| a[0].lex_cmp(&b[0]));

        for hole in &rings {
            if rings_cross(&exterior, hole) || hole.iter().any(|p| point_in_ring(&exterior, *p) == Location::Outside) {
                return Err(GeometryError::HoleOutsideExterior);
            }
        }
        for (i, h1) in rings.iter().enumerate() {
            for h2 in &rings[i + 1..] {
                if rings_cross(h1, h2)
                    || h1.iter().any(|p| point_in_ring(h2, *p) == Location::Inside)
                    || h2.iter().any(|p| point_in_ring(h1, *p) == Location::Inside)
                {
                    return Err(GeometryError::OverlappingHoles);
                }
            }
        }

        let area = ring_area(&exterior) - rings.iter().map(|h| ring_area(h)).sum::<f64>();
        if !(area > 0.0) {
            return Err(GeometryError::ZeroArea);
        }
        let bbox = BBox::of(&exterior);
        Ok(Polygon { exterior, holes: rings, area, bbox })
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        Polygon::new(
            vec![Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)],
            vec![],
        )
    }

    pub fn exterior(&self) -> &[Point] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<Point>] {
        &self.holes
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn vertex_count(&self) -> usize {
        self.exterior.len() + self.holes.iter().map(Vec::len).sum::<usize>()
    }

    fn rings(&self) -> impl Iterator<Item = &[Point]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(Vec::as_slice))
    }

    /// Applies `f` to every vertex and re-normalizes.
    pub fn map_coords(&self, f: impl Fn(Point) -> Point) -> Result<Polygon, GeometryError> {
        Polygon::new(
            self.exterior.iter().map(|p| f(*p)).collect(),
            self.holes.iter().map(|h| h.iter().map(|p| f(*p)).collect()).collect(),
        )
    }

    /// True when `p` lies strictly inside the polygon (not on its boundary,
    /// not inside a hole).
    pub fn contains(&self, p: Point) -> bool {
        if p.x < self.bbox.min_x || p.x > self.bbox.max_x || p.y < self.bbox.min_y || p.y > self.bbox.max_y {
            return false;
        }
        locate(self, p) == Location::Inside
    }
}

/// Area of a polygon, holes subtracted.
pub fn polygon_area(p: &Polygon) -> f64 {
    p.area()
}

/// Exact area of `a ∩ b`.
pub fn intersection_area(a: &Polygon, b: &Polygon) -> f64 {
    if !a.bbox.intersects(&b.bbox) {
        return 0.0;
    }
    // Shared origin, symmetric in (a, b), to keep the shoelace terms small.
    let origin = Point::new(a.bbox.min_x.min(b.bbox.min_x), a.bbox.min_y.min(b.bbox.min_y));
    let total = boundary_inside(a, b, origin) + boundary_inside(b, a, origin);
    total.clamp(0.0, a.area.min(b.area))
}

/// Intersection over union in `[0, 1]`.
pub fn iou(a: &Polygon, b: &Polygon) -> f64 {
    let inter = intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area + b.area - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Minimum Euclidean distance between two polygons (0 when they touch or
/// overlap).
pub fn polygon_distance(a: &Polygon, b: &Polygon) -> f64 {
    if a.bbox.intersects(&b.bbox) {
        if locate(b, a.exterior[0]) != Location::Outside || locate(a, b.exterior[0]) != Location::Outside {
            return 0.0;
        }
    }
    let mut best = f64::INFINITY;
    for ra in a.rings() {
        for (p, q) in edges(ra) {
            for rb in b.rings() {
                for (r, s) in edges(rb) {
                    best = best.min(segment_distance(p, q, r, s));
                    if best == 0.0 {
                        return 0.0;
                    }
                }
            }
        }
    }
    best
}

fn boundary_inside(a: &Polygon, b: &Polygon, origin: Point) -> f64 {
    let mut sum = 0.0;
    let mut params: Vec<f64> = Vec::new();
    let mut overlaps: Vec<(f64, f64, bool)> = Vec::new();
    let b_box = b.bbox;
    for ring in a.rings() {
        for (p, q) in edges(ring) {
            let d = q.sub(p);
            let seg_box = BBox {
                min_x: p.x.min(q.x),
                min_y: p.y.min(q.y),
                max_x: p.x.max(q.x),
                max_y: p.y.max(q.y),
            };
            let p0 = p.sub(origin);
            let q0 = q.sub(origin);
            if !seg_box.intersects(&b_box) {
                // Entirely outside b.
                continue;
            }
            params.clear();
            overlaps.clear();
            params.push(0.0);
            params.push(1.0);
            let len2 = d.dot(d);
            let len = len2.sqrt();
            for rb in b.rings() {
                for (r, s) in edges(rb) {
                    if r.x.min(s.x) > seg_box.max_x
                        || r.x.max(s.x) < seg_box.min_x
                        || r.y.min(s.y) > seg_box.max_y
                        || r.y.max(s.y) < seg_box.min_y
                    {
                        continue;
                    }
                    let e = s.sub(r);
                    let denom = d.cross(e);
                    let elen = e.dot(e).sqrt();
                    let off_r = d.cross(r.sub(p)) / len;
                    let off_s = d.cross(s.sub(p)) / len;
                    if off_r.abs() <= DEDUP_TOLERANCE && off_s.abs() <= DEDUP_TOLERANCE {
                        let tr = r.sub(p).dot(d) / len2;
                        let ts = s.sub(p).dot(d) / len2;
                        let lo = tr.min(ts).max(0.0);
                        let hi = tr.max(ts).min(1.0);
                        if hi - lo > PARAM_EPS {
                            params.push(lo);
                            params.push(hi);
                            overlaps.push((lo, hi, d.dot(e) > 0.0));
                        }
                        continue;
                    }
                    if denom.abs() <= PARAM_EPS * len * elen {
                        continue;
                    }
                    let w = r.sub(p);
                    let t = w.cross(e) / denom;
                    let u = w.cross(d) / denom;
                    let tol_t = DEDUP_TOLERANCE / len;
                    let tol_u = DEDUP_TOLERANCE / elen;
                    if t >= -tol_t && t <= 1.0 + tol_t && u >= -tol_u && u <= 1.0 + tol_u {
                        params.push(t.clamp(0.0, 1.0));
                    }
                }
            }
            params.sort_by(f64::total_cmp);
            let at = |t: f64| {
                if t == 0.0 {
                    p0
                } else if t == 1.0 {
                    q0
                } else {
                    Point::new(p0.x + d.x * t, p0.y + d.y * t)
                }
            };
            let mut prev = params[0];
            for &t in &params[1..] {
                if t - prev <= PARAM_EPS {
                    continue;
                }
                let mid = 0.5 * (prev + t);
                let weight = match overlaps.iter().find(|(lo, hi, _)| *lo <= mid && mid <= *hi) {
                    Some((_, _, true)) => 0.5,
                    Some((_, _, false)) => 0.0,
                    None => {
                        let m = Point::new(p.x + d.x * mid, p.y + d.y * mid);
                        if locate(b, m) == Location::Inside {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
                if weight > 0.0 {
                    sum += weight * 0.5 * at(prev).cross(at(t));
                }
                prev = t;
            }
        }
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Location {
    Inside,
    Outside,
    Boundary,
}

fn locate(poly: &Polygon, p: Point) -> Location {
    let mut inside = false;
    for ring in poly.rings() {
        match point_in_ring(ring, p) {
            Location::Boundary => return Location::Boundary,
            Location::Inside => inside = !inside,
            Location::Outside => {}
        }
    }
    if inside {
        Location::Inside
    } else {
        Location::Outside
    }
}

fn point_in_ring(ring: &[Point], p: Point) -> Location {
    let mut inside = false;
    for (a, b) in edges(ring) {
        if point_segment_distance(p, a, b) <= DEDUP_TOLERANCE {
            return Location::Boundary;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    if inside {
        Location::Inside
    } else {
        Location::Outside
    }
}

fn edges(ring: &[Point]) -> impl Iterator<Item = (Point, Point)> + '_ {
    let n = ring.len();
    (0..n).map(move |i| (ring[i], ring[(i + 1) % n]))
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = b.sub(a);
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (p.sub(a).dot(d) / len2).clamp(0.0, 1.0);
    p.dist(Point::new(a.x + d.x * t, a.y + d.y * t))
}

fn segment_distance(p: Point, q: Point, r: Point, s: Point) -> f64 {
    if proper_cross(p, q, r, s) {
        return 0.0;
    }
    point_segment_distance(p, r, s)
        .min(point_segment_distance(q, r, s))
        .min(point_segment_distance(r, p, q))
        .min(point_segment_distance(s, p, q))
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    b.sub(a).cross(c.sub(a))
}

/// Segments cross at a single interior point of both.
fn proper_cross(p: Point, q: Point, r: Point, s: Point) -> bool {
    let o1 = orient(p, q, r);
    let o2 = orient(p, q, s);
    let o3 = orient(r, s, p);
    let o4 = orient(r, s, q);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

fn ring_self_crosses(ring: &[Point]) -> bool {
    let n = ring.len();
    if n < 4 {
        return false;
    }
    for i in 0..n {
        let (p, q) = (ring[i], ring[(i + 1) % n]);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (r, s) = (ring[j], ring[(j + 1) % n]);
            if proper_cross(p, q, r, s) {
                return true;
            }
        }
    }
    false
}

fn rings_cross(a: &[Point], b: &[Point]) -> bool {
    edges(a).any(|(p, q)| edges(b).any(|(r, s)| proper_cross(p, q, r, s)))
}

fn signed_area(ring: &[Point]) -> f64 {
    let o = ring[0];
    let mut s = 0.0;
    for (a, b) in edges(ring) {
        s += a.sub(o).cross(b.sub(o));
    }
    0.5 * s
}

fn ring_area(ring: &[Point]) -> f64 {
    signed_area(ring).abs()
}

fn clean_ring(mut ring: Vec<Point>) -> Vec<Point> {
    ring.dedup_by(|b, a| a.dist(*b) < DEDUP_TOLERANCE);
    while ring.len() > 1 && ring[0].dist(ring[ring.len() - 1]) < DEDUP_TOLERANCE {
        ring.pop();
    }
    ring
}

/// Rotates the ring to the lexicographically smallest rotation (by vertex).
fn canonical_rotation(ring: &mut [Point]) {
    let n = ring.len();
    let min = ring.iter().min_by(|a, b| a.lex_cmp(b)).copied().unwrap();
    let mut best: Option<usize> = None;
    for start in (0..n).filter(|&i| ring[i] == min) {
        best = match best {
            None => Some(start),
            Some(b) => {
                let ord = (0..n)
                    .map(|k| ring[(start + k) % n].lex_cmp(&ring[(b + k) % n]))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal);
                if ord == Ordering::Less {
                    Some(start)
                } else {
                    Some(b)
                }
            }
        };
    }
    ring.rotate_left(best.unwrap_or(0));
}
