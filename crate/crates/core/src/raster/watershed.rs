use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Connectivity, LabelRaster, ProbMap, Raster};
use crate::error::{Error, Result};

/// Seeded watershed on a probability map.
///
/// Seeds are local maxima of the smoothed map. The flood runs over pixels
/// whose raw value is at least `t_min`. Two basins merge when the level at
/// which they meet is at least `merge_ratio` times the lower of their peaks.
/// Each basin is then cut at `max(t_min, alpha · peak)` of the raw map and
/// reduced to the connected part that contains its peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WatershedParams {
    pub smooth_sigma: f64,
    pub seed_threshold: f32,
    pub t_min: f32,
    pub alpha: f32,
    pub merge_ratio: f32,
    /// Maxima closer than this (Chebyshev, px) form one seed.
    pub seed_merge_px: usize,
    pub min_region_px: usize,
    pub connectivity: Connectivity,
}

impl Default for WatershedParams {
    fn default() -> Self {
        Self {
            smooth_sigma: 1.5,
            seed_threshold: 0.2,
            t_min: 0.4,
            alpha: 0.5,
            merge_ratio: 0.8,
            seed_merge_px: 2,
            min_region_px: 4,
            connectivity: Connectivity::Four,
        }
    }
}

impl WatershedParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f32| (0.0..=1.0).contains(&v);
        if !(self.smooth_sigma >= 0.0 && self.smooth_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("smooth_sigma {} must be >= 0", self.smooth_sigma)));
        }
        for (name, v) in [
            ("seed_threshold", self.seed_threshold),
            ("t_min", self.t_min),
            ("alpha", self.alpha),
            ("merge_ratio", self.merge_ratio),
        ] {
            if !unit(v) {
                return Err(Error::InvalidParameter(format!("{name} {v} outside [0, 1]")));
            }
        }
        if self.alpha <= 0.0 {
            return Err(Error::InvalidParameter("alpha must be in (0, 1]".into()));
        }
        if self.min_region_px < 1 {
            return Err(Error::InvalidParameter("min_region_px must be >= 1".into()));
        }
        Ok(())
    }
}

/// Separable Gaussian blur, kernel truncated at 3σ, edges clamped.
pub fn gaussian_smooth(image: &ProbMap, sigma: f64) -> ProbMap {
    if sigma <= 0.0 || image.data.is_empty() {
        return image.clone();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    let (w, h) = (image.width as isize, image.height as isize);
    let mut tmp = vec![0f32; image.data.len()];
    tmp.par_chunks_mut(w as usize).enumerate().for_each(|(y, row)| {
        let src = &image.data[y * w as usize..(y + 1) * w as usize];
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0f64;
            for (j, kv) in k.iter().enumerate() {
                let xx = (x as isize + j as isize - r).clamp(0, w - 1);
                acc += kv * src[xx as usize] as f64;
            }
            *out = acc as f32;
        }
    });
    let mut out = vec![0f32; image.data.len()];
    out.par_chunks_mut(w as usize).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = 0f64;
            for (j, kv) in k.iter().enumerate() {
                let yy = (y as isize + j as isize - r).clamp(0, h - 1);
                acc += kv * tmp[yy as usize * w as usize + x] as f64;
            }
            *o = acc as f32;
        }
    });
    Raster { width: image.width, height: image.height, data: out }
}

struct UnionFind {
    parent: Vec<u32>,
    peak: Vec<f32>,
}

impl UnionFind {
    fn find(&mut self, mut a: u32) -> u32 {
        while self.parent[a as usize] != a {
            let g = self.parent[self.parent[a as usize] as usize];
            self.parent[a as usize] = g;
            a = g;
        }
        a
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        self.peak[lo as usize] = self.peak[lo as usize].max(self.peak[hi as usize]);
    }
}

pub fn watershed_instances(prob: &ProbMap, params: &WatershedParams) -> Result<LabelRaster> {
    params.validate()?;
    let (w, h) = (prob.width, prob.height);
    let n = w * h;
    let conn = params.connectivity;
    let smooth = gaussian_smooth(prob, params.smooth_sigma);
    let s = &smooth.data;
    let p = &prob.data;
    let domain: Vec<bool> = p.iter().map(|&v| v >= params.t_min).collect();

    // Local maxima of the smoothed map, restricted to the flood domain.
    let mut seed_id = vec![u32::MAX; n];
    let mut seeds: Vec<usize> = Vec::new();
    for i in 0..n {
        if !domain[i] || s[i] < params.seed_threshold {
            continue;
        }
        if conn.neighbors(i, w, h).all(|j| !domain[j] || s[j] <= s[i]) {
            seed_id[i] = seeds.len() as u32;
            seeds.push(i);
        }
    }
    let mut uf = UnionFind { parent: (0..seeds.len() as u32).collect(), peak: seeds.iter().map(|&i| s[i]).collect() };
    let reach = params.seed_merge_px as isize;
    for (k, &i) in seeds.iter().enumerate() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if seed_id[j] != u32::MAX && seed_id[j] != k as u32 {
                    uf.union(k as u32, seed_id[j]);
                }
            }
        }
    }

    // Priority flood, highest smoothed value first, ties by pixel index.
    const NONE: u32 = u32::MAX;
    let mut basin = vec![NONE; n];
    let mut heap = BinaryHeap::new();
    for (k, &i) in seeds.iter().enumerate() {
        basin[i] = k as u32;
        heap.push((s[i].to_bits(), Reverse(i)));
    }
    while let Some((_, Reverse(i))) = heap.pop() {
        let b = basin[i];
        for j in conn.neighbors(i, w, h) {
            if !domain[j] {
                continue;
            }
            if basin[j] == NONE {
                basin[j] = b;
                heap.push((s[j].to_bits(), Reverse(j)));
            } else {
                let (ra, rb) = (uf.find(b), uf.find(basin[j]));
                if ra != rb {
                    let level = s[i].min(s[j]);
                    if level >= params.merge_ratio * uf.peak[ra as usize].min(uf.peak[rb as usize]) {
                        uf.union(ra, rb);
                    }
                }
            }
        }
    }
    for b in basin.iter_mut() {
        if *b != NONE {
            *b = uf.find(*b);
        }
    }

    // Raw peak per basin, then the alpha cut kept connected to the peak.
    let mut peak_px: Vec<Option<usize>> = vec![None; seeds.len()];
    for i in 0..n {
        let b = basin[i];
        if b == NONE {
            continue;
        }
        let slot = &mut peak_px[b as usize];
        if slot.map_or(true, |q| p[i] > p[q]) {
            *slot = Some(i);
        }
    }
    let mut out = vec![0u32; n];
    let mut queue = VecDeque::new();
    for (b, pk) in peak_px.iter().enumerate() {
        let Some(start) = *pk else { continue };
        let thr = params.t_min.max(params.alpha * p[start]);
        let label = b as u32 + 1;
        out[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for j in conn.neighbors(i, w, h) {
                if out[j] == 0 && basin[j] == b as u32 && p[j] >= thr {
                    out[j] = label;
                    queue.push_back(j);
                }
            }
        }
    }
    let mut sizes = vec![0usize; seeds.len() + 1];
    for &l in &out {
        sizes[l as usize] += 1;
    }
    let min = params.min_region_px;
    Ok(LabelRaster::canonicalize(Raster { width: w, height: h, data: out }, |l| sizes[l as usize] >= min))
}
