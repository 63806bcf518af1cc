//! Per-frame matching of proposal footprints to ground truth.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::ingest::Footprint;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Greedy,
    Optimal,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Strategy::Greedy),
            "optimal" => Ok(Strategy::Optimal),
            _ => Err(Error::InvalidParameter(format!("unknown matching strategy {s:?}"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Greedy => "greedy",
            Strategy::Optimal => "optimal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub iou_threshold: f64,
    pub strategy: Strategy,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { iou_threshold: DEFAULT_IOU_THRESHOLD, strategy: Strategy::Greedy }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "iou_threshold must be in (0, 1], got {}",
                self.iou_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub gt_id: u64,
    pub prop_id: u64,
    pub iou: f64,
}

/// Result of matching one frame. Pairs are sorted by `gt_id`; unmatched id
/// lists are sorted ascending.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchTable {
    pub frame: usize,
    pub pairs: Vec<MatchPair>,
    pub unmatched_gt: Vec<u64>,
    pub unmatched_prop: Vec<u64>,
}

/// `2·tp / (2·tp + fp + fn)`, or 0 for an empty denominator.
pub fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Uniform grid over bounding boxes; yields each candidate at most once.
pub struct GridIndex {
    cell: f64,
    origin_x: f64,
    origin_y: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
    boxes: Vec<BBox>,
}

impl GridIndex {
    pub fn new(boxes: Vec<BBox>) -> Self {
        let (mut ox, mut oy, mut size) = (f64::INFINITY, f64::INFINITY, 0.0);
        for b in &boxes {
            ox = ox.min(b.min_x);
            oy = oy.min(b.min_y);
            size += b.width().max(b.height());
        }
        let cell = if boxes.is_empty() { 1.0 } else { (2.0 * size / boxes.len() as f64).max(1e-9) };
        let mut idx = GridIndex { cell, origin_x: ox, origin_y: oy, cells: HashMap::new(), boxes: Vec::new() };
        for (i, b) in boxes.iter().enumerate() {
            let (x0, y0, x1, y1) = idx.cell_range(b);
            for cx in x0..=x1 {
                for cy in y0..=y1 {
                    idx.cells.entry((cx, cy)).or_default().push(i);
                }
            }
        }
        idx.boxes = boxes;
        idx
    }

    fn cell_range(&self, b: &BBox) -> (i64, i64, i64, i64) {
        let c = |v: f64, o: f64| ((v - o) / self.cell).floor() as i64;
        (c(b.min_x, self.origin_x), c(b.min_y, self.origin_y), c(b.max_x, self.origin_x), c(b.max_y, self.origin_y))
    }

    /// Indices of boxes intersecting `b`, ascending.
    pub fn query(&self, b: &BBox) -> Vec<usize> {
        if self.boxes.is_empty() {
            return Vec::new();
        }
        let (x0, y0, x1, y1) = self.cell_range(b);
        let mut out = Vec::new();
        // Clamp the scan to occupied cells for very large query boxes.
        if ((x1 - x0 + 1) as f64) * ((y1 - y0 + 1) as f64) > self.cells.len() as f64 {
            for ids in self.cells.values() {
                out.extend(ids.iter().copied().filter(|&i| self.boxes[i].intersects(b)));
            }
        } else {
            for cx in x0..=x1 {
                for cy in y0..=y1 {
                    if let Some(ids) = self.cells.get(&(cx, cy)) {
                        out.extend(ids.iter().copied().filter(|&i| self.boxes[i].intersects(b)));
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// All (gt index, prop index, iou) with `iou >= threshold`.
pub fn candidate_pairs(gt: &[&Footprint], props: &[&Footprint], threshold: f64) -> Vec<(usize, usize, f64)> {
    if gt.is_empty() || props.is_empty() {
        return Vec::new();
    }
    let index = GridIndex::new(gt.iter().map(|f| f.polygon.bbox()).collect());
    let mut out = Vec::new();
    for (j, p) in props.iter().enumerate() {
        for i in index.query(&p.polygon.bbox()) {
            let v = iou(&gt[i].polygon, &p.polygon);
            if v >= threshold {
                out.push((i, j, v));
            }
        }
    }
    out
}

/// Matches one frame. Inputs are re-sorted by id internally, so the result
/// does not depend on input order.
pub fn match_frame(frame: usize, gt: &[Footprint], props: &[Footprint], cfg: &MatchConfig) -> MatchTable {
    let mut gt: Vec<&Footprint> = gt.iter().collect();
    let mut props: Vec<&Footprint> = props.iter().collect();
    gt.sort_by_key(|f| f.building_id);
    props.sort_by_key(|f| f.building_id);
    let cands = candidate_pairs(&gt, &props, cfg.iou_threshold);
    let chosen = match cfg.strategy {
        Strategy::Greedy => greedy_assign(cands),
        Strategy::Optimal => optimal_assign(&cands),
    };
    build_table(frame, &gt, &props, chosen)
}

fn build_table(frame: usize, gt: &[&Footprint], props: &[&Footprint], chosen: Vec<(usize, usize, f64)>) -> MatchTable {
    let mut gt_used = vec![false; gt.len()];
    let mut prop_used = vec![false; props.len()];
    let mut pairs: Vec<MatchPair> = chosen
        .into_iter()
        .map(|(i, j, v)| {
            gt_used[i] = true;
            prop_used[j] = true;
            MatchPair { gt_id: gt[i].building_id, prop_id: props[j].building_id, iou: v }
        })
        .collect();
    pairs.sort_by_key(|p| p.gt_id);
    MatchTable {
        frame,
        pairs,
        unmatched_gt: gt.iter().zip(&gt_used).filter(|(_, u)| !**u).map(|(f, _)| f.building_id).collect(),
        unmatched_prop: props.iter().zip(&prop_used).filter(|(_, u)| !**u).map(|(f, _)| f.building_id).collect(),
    }
}

/// Accepts candidates by descending IoU, ties broken by lower gt then lower
/// prop position. Positions must follow ascending id for the documented
/// tie-break.
pub fn greedy_assign(mut cands: Vec<(usize, usize, f64)>) -> Vec<(usize, usize, f64)> {
    cands.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let rows = cands.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let cols = cands.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    let mut gt_used = vec![false; rows];
    let mut prop_used = vec![false; cols];
    let mut out = Vec::new();
    for (i, j, v) in cands {
        if gt_used[i] || prop_used[j] {
            continue;
        }
        gt_used[i] = true;
        prop_used[j] = true;
        out.push((i, j, v));
    }
    out
}

/// Maximum-cardinality assignment, ties broken by maximum total IoU.
/// Solved independently on each connected component of the candidate graph.
pub fn optimal_assign(cands: &[(usize, usize, f64)]) -> Vec<(usize, usize, f64)> {
    if cands.is_empty() {
        return Vec::new();
    }
    // Union-find over gt nodes (0..) and prop nodes (offset).
    let max_gt = cands.iter().map(|c| c.0).max().unwrap() + 1;
    let max_prop = cands.iter().map(|c| c.1).max().unwrap() + 1;
    let mut parent: Vec<usize> = (0..max_gt + max_prop).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(i, j, _) in cands {
        let (a, b) = (find(&mut parent, i), find(&mut parent, max_gt + j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>> = Default::default();
    for &c in cands {
        let root = find(&mut parent, c.0);
        groups.entry(root).or_default().push(c);
    }
    let mut out = Vec::new();
    for (_, group) in groups {
        if group.len() == 1 {
            out.push(group[0]);
            continue;
        }
        let mut rows: Vec<usize> = group.iter().map(|c| c.0).collect();
        let mut cols: Vec<usize> = group.iter().map(|c| c.1).collect();
        rows.sort_unstable();
        rows.dedup();
        cols.sort_unstable();
        cols.dedup();
        let n = rows.len().max(cols.len());
        // Each matched pair earns `bonus + iou`; bonus > n ≥ Σ iou, so
        // cardinality always dominates.
        let bonus = (n + 1) as f64;
        let mut cost = vec![vec![0.0; n]; n];
        let mut allowed = vec![vec![None; n]; n];
        for &(i, j, v) in &group {
            let r = rows.binary_search(&i).unwrap();
            let c = cols.binary_search(&j).unwrap();
            cost[r][c] = -(bonus + v);
            allowed[r][c] = Some(v);
        }
        for (r, c) in hungarian_min(&cost).into_iter().enumerate() {
            if r < rows.len() && c < cols.len() {
                if let Some(v) = allowed[r][c] {
                    out.push((rows[r], cols[c], v));
                }
            }
        }
    }
    out
}

/// Square min-cost assignment (Kuhn–Munkres with potentials, O(n³)).
/// Returns the column assigned to each row.
pub fn hungarian_min(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j].total_cmp(&delta) == Ordering::Less {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;

    fn fp(id: u64, x: f64, y: f64, w: f64, h: f64) -> Footprint {
        Footprint::new(0, id, Polygon::rect(x, y, x + w, y + h).unwrap())
    }

    #[test]
    fn f1_values() {
        assert_eq!(f1(5, 5, 5), 0.5);
        assert_eq!(f1(0, 0, 0), 0.0);
        assert_eq!(f1(10, 0, 0), 1.0);
    }

    #[test]
    fn identical_sets_all_match() {
        let gt = vec![fp(1, 0.0, 0.0, 2.0, 2.0), fp(2, 5.0, 5.0, 3.0, 3.0)];
        for strategy in [Strategy::Greedy, Strategy::Optimal] {
            let t = match_frame(0, &gt, &gt, &MatchConfig { strategy, ..Default::default() });
            assert_eq!(t.pairs.len(), 2);
            assert!(t.pairs.iter().all(|p| p.iou == 1.0 && p.gt_id == p.prop_id));
            assert!(t.unmatched_gt.is_empty() && t.unmatched_prop.is_empty());
        }
    }

    #[test]
    fn empty_proposals() {
        let gt = vec![fp(1, 0.0, 0.0, 2.0, 2.0), fp(4, 5.0, 5.0, 3.0, 3.0)];
        let t = match_frame(3, &gt, &[], &MatchConfig::default());
        assert_eq!(t.frame, 3);
        assert!(t.pairs.is_empty());
        assert_eq!(t.unmatched_gt, vec![1, 4]);
    }

    #[test]
    fn greedy_vs_optimal_on_chain() {
        // prop 10 overlaps gt 1 strongly and gt 2 a bit; prop 11 only gt 1.
        let gt = vec![fp(1, 0.0, 0.0, 10.0, 10.0), fp(2, 10.0, 0.0, 10.0, 10.0)];
        let props = vec![fp(10, 2.0, 0.0, 10.0, 10.0), fp(11, -3.0, 0.0, 10.0, 10.0)];
        let cfg = MatchConfig { iou_threshold: 0.1, strategy: Strategy::Greedy };
        let g = match_frame(0, &gt, &props, &cfg);
        let o = match_frame(0, &gt, &props, &MatchConfig { strategy: Strategy::Optimal, ..cfg });
        assert_eq!(g.pairs.len(), 1);
        assert_eq!(o.pairs.len(), 2);
        assert_eq!(o.pairs[0].prop_id, 11);
        assert_eq!(o.pairs[1].prop_id, 10);
    }

    #[test]
    fn grid_finds_all_overlaps() {
        let boxes: Vec<BBox> = (0..50)
            .map(|i| {
                let x = (i % 10) as f64 * 3.0;
                let y = (i / 10) as f64 * 3.0;
                BBox { min_x: x, min_y: y, max_x: x + 4.0, max_y: y + 4.0 }
            })
            .collect();
        let idx = GridIndex::new(boxes.clone());
        let q = BBox { min_x: 5.0, min_y: 5.0, max_x: 12.0, max_y: 7.0 };
        let brute: Vec<usize> = (0..boxes.len()).filter(|&i| boxes[i].intersects(&q)).collect();
        assert_eq!(idx.query(&q), brute);
        let huge = BBox { min_x: -1e6, min_y: -1e6, max_x: 1e6, max_y: 1e6 };
        assert_eq!(idx.query(&huge).len(), 50);
    }

    #[test]
    fn hungarian_small() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = hungarian_min(&cost);
        let total: f64 = a.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
        assert_eq!(total, 5.0);
    }
}
