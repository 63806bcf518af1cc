use std::collections::HashMap;

use super::{LabelRaster, Raster, Transform};
use crate::geometry::{Point, Polygon};

/// Directed pixel-boundary edge between grid corners. Edges run clockwise
/// on screen (y down) around each foreground pixel, so the region is on
/// the right of the direction of travel.
#[derive(Clone, Copy)]
struct Edge {
    from: (i64, i64),
    to: (i64, i64),
}

fn dir(e: &Edge) -> (i64, i64) {
    (e.to.0 - e.from.0, e.to.1 - e.from.1)
}

/// Turn preference at a corner: left, straight, right (screen coordinates).
/// Taking the left turn at pinch corners joins diagonal neighbors.
fn turn_rank(din: (i64, i64), dout: (i64, i64)) -> u8 {
    // Screen coordinates: facing +y, left is +x.
    let cross = din.0 * dout.1 - din.1 * dout.0;
    match cross.signum() {
        -1 => 0,
        0 => 1,
        _ => 2,
    }
}

fn trace_rings(edges: &[Edge]) -> Vec<Vec<(i64, i64)>> {
    let mut out_at: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (k, e) in edges.iter().enumerate() {
        out_at.entry(e.from).or_default().push(k);
    }
    let mut used = vec![false; edges.len()];
    let mut rings = Vec::new();
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        let mut ring = Vec::new();
        let mut cur = start;
        loop {
            used[cur] = true;
            let e = edges[cur];
            ring.push(e.from);
            let din = dir(&e);
            let next = out_at[&e.to]
                .iter()
                .copied()
                .filter(|&k| !used[k])
                .min_by_key(|&k| turn_rank(din, dir(&edges[k])));
            match next {
                Some(k) => cur = k,
                None => break,
            }
        }
        rings.push(simplify(ring));
    }
    rings
}

/// Drops vertices where the boundary continues straight.
fn simplify(ring: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    let n = ring.len();
    (0..n)
        .filter(|&i| {
            let a = ring[(i + n - 1) % n];
            let b = ring[i];
            let c = ring[(i + 1) % n];
            (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0) != 0
        })
        .map(|i| ring[i])
        .collect()
}

fn shoelace(ring: &[(i64, i64)]) -> i64 {
    let n = ring.len();
    (0..n).map(|i| ring[i].0 * ring[(i + 1) % n].1 - ring[(i + 1) % n].0 * ring[i].1).sum()
}

/// Converts instance labels to polygons, one per 8-connected outer ring,
/// with holes. Coordinates are pixel corners mapped through `transform`.
/// Output is ordered by label, then by the first vertex of each ring.
pub fn polygonize(labels: &LabelRaster, transform: &Transform) -> Vec<(u32, Polygon)> {
    let lr = &labels.labels;
    let (w, h) = (lr.width as i64, lr.height as i64);
    let at = |x: i64, y: i64| -> u32 {
        if x < 0 || y < 0 || x >= w || y >= h {
            0
        } else {
            lr.data[(y * w + x) as usize]
        }
    };
    let mut edges: Vec<Vec<Edge>> = vec![Vec::new(); labels.count as usize + 1];
    for y in 0..h {
        for x in 0..w {
            let l = at(x, y);
            if l == 0 {
                continue;
            }
            let list = &mut edges[l as usize];
            if at(x, y - 1) != l {
                list.push(Edge { from: (x, y), to: (x + 1, y) });
            }
            if at(x + 1, y) != l {
                list.push(Edge { from: (x + 1, y), to: (x + 1, y + 1) });
            }
            if at(x, y + 1) != l {
                list.push(Edge { from: (x + 1, y + 1), to: (x, y + 1) });
            }
            if at(x - 1, y) != l {
                list.push(Edge { from: (x, y + 1), to: (x, y) });
            }
        }
    }
    let to_world = |ring: &[(i64, i64)]| -> Vec<Point> {
        ring.iter().map(|&(x, y)| transform.to_world(x as f64, y as f64)).collect()
    };
    let mut out = Vec::new();
    for (label, list) in edges.iter().enumerate().skip(1) {
        if list.is_empty() {
            continue;
        }
        let rings = trace_rings(list);
        let (outer, inner): (Vec<_>, Vec<_>) = rings.into_iter().partition(|r| shoelace(r) > 0);
        let outer_polys: Vec<Polygon> = outer
            .iter()
            .filter_map(|r| Polygon::new(to_world(r), vec![]).ok())
            .collect();
        let mut holes: Vec<Vec<Vec<Point>>> = vec![Vec::new(); outer_polys.len()];
        for r in &inner {
            let pts = to_world(r);
            // A hole belongs to the smallest outer ring containing its
            // vertices (all on or inside that ring).
            let owner = outer_polys
                .iter()
                .enumerate()
                .filter(|(_, o)| {
                    let c = Polygon::new(pts.clone(), vec![]);
                    c.map_or(false, |c| crate::geometry::intersection_area(o, &c) >= c.area() * (1.0 - 1e-9))
                })
                .min_by(|a, b| a.1.area().total_cmp(&b.1.area()))
                .map(|(i, _)| i);
            if let Some(i) = owner {
                holes[i].push(pts);
            }
        }
        for (o, hs) in outer_polys.into_iter().zip(holes) {
            let poly = if hs.is_empty() { Ok(o) } else { Polygon::new(o.exterior().to_vec(), hs) };
            if let Ok(p) = poly {
                out.push((label as u32, p));
            }
        }
    }
    out
}

/// Pixels whose centers lie inside `poly` (even-odd over all rings),
/// as indices into a `width × height` grid.
pub fn rasterize_polygon(poly: &Polygon, width: usize, height: usize, transform: &Transform) -> Vec<usize> {
    let rings: Vec<Vec<(f64, f64)>> = std::iter::once(poly.exterior())
        .chain(poly.holes().iter().map(|h| h.as_slice()))
        .map(|r| r.iter().map(|&p| transform.to_pixel(p)).collect())
        .collect();
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in &rings {
        for &(_, y) in r {
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !ymin.is_finite() || width == 0 {
        return Vec::new();
    }
    let r0 = (ymin - 0.5).ceil().max(0.0) as usize;
    let r1 = ((ymax - 0.5).floor()).min(height as f64 - 1.0);
    if r1 < 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut xs = Vec::new();
    for row in r0..=r1 as usize {
        let yc = row as f64 + 0.5;
        xs.clear();
        for r in &rings {
            let n = r.len();
            for i in 0..n {
                let (a, b) = (r[i], r[(i + 1) % n]);
                if (a.1 <= yc) != (b.1 <= yc) {
                    xs.push(a.0 + (yc - a.1) * (b.0 - a.0) / (b.1 - a.1));
                }
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            // Centers c + 0.5 in [x0, x1).
            let c0 = (pair[0] - 0.5).ceil().max(0.0);
            let c1 = (pair[1] - 0.5).ceil().min(width as f64);
            let (c0, c1) = (c0 as usize, c1.max(0.0) as usize);
            for col in c0..c1.max(c0) {
                out.push(row * width + col);
            }
        }
    }
    out
}

/// Burns polygons into a label raster; later polygons overwrite earlier
/// ones. Labels are `index + 1`.
pub fn rasterize_polygons(polys: &[Polygon], width: usize, height: usize, transform: &Transform) -> Raster<u32> {
    let mut r = Raster::filled(width, height, 0u32);
    for (k, p) in polys.iter().enumerate() {
        for i in rasterize_polygon(p, width, height, transform) {
            r.data[i] = k as u32 + 1;
        }
    }
    r
}
