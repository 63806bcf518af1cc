//! Independent oracles and fixture builders shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scot_core::geometry::{Point, Polygon};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Convex polygon: `k` points on a rotated ellipse at sorted random angles.
pub fn random_convex(r: &mut ChaCha8Rng, span: f64) -> Polygon {
    loop {
        let k = r.gen_range(3..=12);
        let (cx, cy) = (r.gen_range(0.0..span), r.gen_range(0.0..span));
        let (rx, ry) = (r.gen_range(0.05..0.4) * span, r.gen_range(0.05..0.4) * span);
        let rot: f64 = r.gen_range(0.0..std::f64::consts::TAU);
        let mut angles: Vec<f64> = (0..k).map(|_| r.gen_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let pts: Vec<Point> = angles
            .iter()
            .map(|a| {
                let (x, y) = (rx * a.cos(), ry * a.sin());
                Point::new(cx + x * rot.cos() - y * rot.sin(), cy + x * rot.sin() + y * rot.cos())
            })
            .collect();
        if let Ok(p) = Polygon::new(pts, vec![]) {
            if p.area() > 1e-3 * span * span {
                return p;
            }
        }
    }
}

/// Star-shaped polygon with alternating radii, concave for `k >= 4`.
pub fn random_star(r: &mut ChaCha8Rng, span: f64) -> Polygon {
    loop {
        let k = r.gen_range(5..=14);
        let (cx, cy) = (r.gen_range(0.2 * span..0.8 * span), r.gen_range(0.2 * span..0.8 * span));
        let outer = r.gen_range(0.15..0.35) * span;
        let phase: f64 = r.gen_range(0.0..std::f64::consts::TAU);
        let pts: Vec<Point> = (0..2 * k)
            .map(|i| {
                let a = phase + std::f64::consts::PI * i as f64 / k as f64;
                let rad = if i % 2 == 0 { outer } else { outer * r.gen_range(0.3..0.7) };
                Point::new(cx + rad * a.cos(), cy + rad * a.sin())
            })
            .collect();
        if let Ok(p) = Polygon::new(pts, vec![]) {
            return p;
        }
    }
}

/// Concave fixtures: stars, L and U shapes, and a frame with a hole.
pub fn concave_fixtures(n: usize, seed: u64) -> Vec<(Polygon, Polygon)> {
    let mut r = rng(seed);
    let pt = |x: f64, y: f64| Point::new(x, y);
    let l_shape = |x: f64, y: f64, s: f64| {
        Polygon::new(
            vec![pt(x, y), pt(x + 2.0 * s, y), pt(x + 2.0 * s, y + s), pt(x + s, y + s), pt(x + s, y + 2.0 * s), pt(x, y + 2.0 * s)],
            vec![],
        )
        .unwrap()
    };
    let u_shape = |x: f64, y: f64, s: f64| {
        Polygon::new(
            vec![
                pt(x, y),
                pt(x + 3.0 * s, y),
                pt(x + 3.0 * s, y + 3.0 * s),
                pt(x + 2.0 * s, y + 3.0 * s),
                pt(x + 2.0 * s, y + s),
                pt(x + s, y + s),
                pt(x + s, y + 3.0 * s),
                pt(x, y + 3.0 * s),
            ],
            vec![],
        )
        .unwrap()
    };
    let framed = |x: f64, y: f64, s: f64| {
        Polygon::new(
            vec![pt(x, y), pt(x + 4.0 * s, y), pt(x + 4.0 * s, y + 4.0 * s), pt(x, y + 4.0 * s)],
            vec![vec![pt(x + s, y + s), pt(x + s, y + 3.0 * s), pt(x + 3.0 * s, y + 3.0 * s), pt(x + 3.0 * s, y + s)]],
        )
        .unwrap()
    };
    (0..n)
        .map(|i| {
            let s = r.gen_range(5.0..20.0);
            let (x, y) = (r.gen_range(0.0..30.0), r.gen_range(0.0..30.0));
            let a = match i % 4 {
                0 => random_star(&mut r, 100.0),
                1 => l_shape(x, y, s),
                2 => u_shape(x, y, s),
                _ => framed(x, y, s),
            };
            let b = if i % 3 == 0 { random_star(&mut r, 100.0) } else { random_convex(&mut r, 100.0) };
            (a, b)
        })
        .collect()
}

/// Even-odd crossings of every ring with the horizontal line `y`, sorted.
fn crossings(p: &Polygon, y: f64) -> Vec<f64> {
    let mut xs = Vec::new();
    let rings = std::iter::once(p.exterior()).chain(p.holes().iter().map(|h| h.as_slice()));
    for ring in rings {
        let n = ring.len();
        for i in 0..n {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            if (a.y > y) != (b.y > y) {
                xs.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
    }
    xs.sort_by(f64::total_cmp);
    xs
}

fn intervals(xs: &[f64]) -> Vec<(f64, f64)> {
    xs.chunks_exact(2).map(|c| (c[0], c[1])).collect()
}

/// Number of sample centres `x0 + (c + 0.5)·dx`, `0 <= c < n`, in `[lo, hi)`.
fn centres_in(lo: f64, hi: f64, x0: f64, dx: f64, n: usize) -> u64 {
    let first = ((lo - x0) / dx - 0.5).ceil().max(0.0);
    let end = ((hi - x0) / dx - 0.5).ceil().min(n as f64);
    if end > first {
        (end - first) as u64
    } else {
        0
    }
}

/// IoU estimated by sampling an `n × n` grid of cell centres over the
/// union bounding box.
pub fn raster_iou(a: &Polygon, b: &Polygon, n: usize) -> f64 {
    let (ba, bb) = (a.bbox(), b.bbox());
    let (x0, y0) = (ba.min_x.min(bb.min_x), ba.min_y.min(bb.min_y));
    let (x1, y1) = (ba.max_x.max(bb.max_x), ba.max_y.max(bb.max_y));
    let (dx, dy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
    let (mut inter, mut ca, mut cb) = (0u64, 0u64, 0u64);
    for row in 0..n {
        let y = y0 + (row as f64 + 0.5) * dy;
        let ia = intervals(&crossings(a, y));
        let ib = intervals(&crossings(b, y));
        ca += ia.iter().map(|&(l, h)| centres_in(l, h, x0, dx, n)).sum::<u64>();
        cb += ib.iter().map(|&(l, h)| centres_in(l, h, x0, dx, n)).sum::<u64>();
        for &(la, ha) in &ia {
            for &(lb, hb) in &ib {
                let (l, h) = (la.max(lb), ha.min(hb));
                if l < h {
                    inter += centres_in(l, h, x0, dx, n);
                }
            }
        }
    }
    let union = ca + cb - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Largest matching in a bipartite graph given as an adjacency matrix, by
/// exhaustive search over the ground-truth side.
pub fn brute_force_max_matching(adj: &[Vec<bool>]) -> usize {
    fn go(i: usize, adj: &[Vec<bool>], used: &mut Vec<bool>) -> usize {
        if i == adj.len() {
            return 0;
        }
        let mut best = go(i + 1, adj, used);
        for j in 0..used.len() {
            if adj[i][j] && !used[j] {
                used[j] = true;
                best = best.max(1 + go(i + 1, adj, used));
                used[j] = false;
            }
        }
        best
    }
    let m = adj.first().map_or(0, Vec::len);
    go(0, adj, &mut vec![false; m])
}

/// Step-model fit by direct enumeration: for each origin `k` the model is
/// 0 before `k` and the mean of the valid samples from `k` on; the SSE is
/// summed over valid samples. Returns the smallest `k` whose SSE is within
/// `1e-12 · max(best, 1)` of the minimum, or `None` when no origin has a
/// valid sample after it, the post mean is below `keep`, or it is zero.
pub fn brute_force_origin(series: &[Option<f64>], keep: f64) -> Option<usize> {
    let mut fits: Vec<(usize, f64, f64)> = Vec::new();
    for k in 0..series.len() {
        let post: Vec<f64> = series[k..].iter().flatten().copied().collect();
        if post.is_empty() {
            continue;
        }
        let mean = post.iter().sum::<f64>() / post.len() as f64;
        let mut sse = 0.0;
        for (t, v) in series.iter().enumerate() {
            if let Some(v) = v {
                let m = if t < k { 0.0 } else { mean };
                sse += (v - m) * (v - m);
            }
        }
        fits.push((k, sse, mean));
    }
    let best = fits.iter().map(|f| f.1).fold(f64::INFINITY, f64::min);
    let eps = 1e-12 * best.max(1.0);
    let &(k, _, mean) = fits.iter().find(|f| f.1 <= best + eps)?;
    (mean >= keep && mean > 0.0).then_some(k)
}
