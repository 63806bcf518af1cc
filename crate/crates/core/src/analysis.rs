//! Diagnostics over scored AOIs: recall by building area, feature
//! correlations and change-versus-track tables.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{AoiMetadata, FootprintSeries};
use crate::matching::MatchTable;
use crate::scot::{Combiner, ScoreReport};

/// Logarithmically spaced edges from `lo` to `hi` (both included).
pub fn log_bins(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && n >= 1) {
        return Err(Error::InvalidParameter(format!("log bins need 0 < lo < hi and n >= 1, got {lo}, {hi}, {n}")));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..=n)
        .map(|i| match i {
            0 => lo,
            i if i == n => hi,
            _ => (a + (b - a) * i as f64 / n as f64).exp(),
        })
        .collect())
}

/// Default edges: 16 log bins over [10, 10⁴] m².
pub fn default_area_bins() -> Vec<f64> {
    log_bins(10.0, 1e4, 16).expect("constant arguments are valid")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaBin {
    pub lo_m2: f64,
    pub hi_m2: f64,
    pub lo_px2: f64,
    pub hi_px2: f64,
    pub count: u64,
    pub matched: u64,
    /// `None` for an empty bin.
    pub recall: Option<f64>,
}

/// Recall per area bin. The first and last bins catch everything below
/// and above the given edges, so counts always sum to the total.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaCurve {
    pub bins: Vec<AreaBin>,
    pub total: u64,
}

impl AreaCurve {
    pub const CSV_HEADER: &'static str = "lo_m2,hi_m2,lo_px2,hi_px2,count,matched,recall";

    pub fn merge(&mut self, other: &AreaCurve) -> Result<()> {
        if self.bins.len() != other.bins.len() {
            return Err(Error::LengthMismatch(self.bins.len(), other.bins.len()));
        }
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.count += b.count;
            a.matched += b.matched;
            a.recall = (a.count > 0).then(|| a.matched as f64 / a.count as f64);
        }
        self.total += other.total;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for b in &self.bins {
            let recall = b.recall.map_or_else(|| "NA".to_string(), |r| format!("{r}"));
            let _ = writeln!(s, "{},{},{},{},{},{},{}", b.lo_m2, b.hi_m2, b.lo_px2, b.hi_px2, b.count, b.matched, recall);
        }
        s
    }
}

/// Bins every ground-truth footprint (one instance per frame) by area in m²
/// (`px² · gsd²`) and counts how many were matched in that frame's table.
pub fn recall_by_area(gt: &FootprintSeries, tables: &[MatchTable], edges_m2: &[f64]) -> Result<AreaCurve> {
    if edges_m2.is_empty() {
        return Err(Error::InvalidParameter("no area bins".into()));
    }
    if edges_m2.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter("area bin edges must be strictly increasing".into()));
    }
    let gsd2 = gt.metadata.gsd * gt.metadata.gsd;
    let mut bounds = vec![0.0];
    bounds.extend_from_slice(edges_m2);
    bounds.push(f64::INFINITY);
    let mut bins: Vec<AreaBin> = bounds
        .windows(2)
        .map(|w| AreaBin { lo_m2: w[0], hi_m2: w[1], lo_px2: w[0] / gsd2, hi_px2: w[1] / gsd2, count: 0, matched: 0, recall: None })
        .collect();
    let mut total = 0;
    for (t, frame) in gt.frames().iter().enumerate() {
        let matched: HashSet<u64> = tables
            .iter()
            .filter(|tb| tb.frame == t)
            .flat_map(|tb| tb.pairs.iter().map(|p| p.gt_id))
            .collect();
        for fp in frame {
            let a = fp.area() * gsd2;
            // Bin i covers [lo, hi).
            let i = edges_m2.partition_point(|&e| e <= a);
            bins[i].count += 1;
            if matched.contains(&fp.building_id) {
                bins[i].matched += 1;
            }
            total += 1;
        }
    }
    for b in &mut bins {
        b.recall = (b.count > 0).then(|| b.matched as f64 / b.count as f64);
    }
    Ok(AreaCurve { bins, total })
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::InvalidParameter("pearson needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("x".into()));
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance("y".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub const FEATURE_COLUMNS: [&str; 8] =
    ["gsd", "abs_latitude", "cos_latitude", "buildings", "track_f1", "change_f1", "scot", "detection_f1"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureRow {
    pub aoi_id: String,
    pub values: [f64; 8],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    /// Sorted by `aoi_id`.
    pub rows: Vec<FeatureRow>,
    /// Pairwise Pearson matrix; `None` entries involve a constant column.
    pub correlations: Option<Vec<Vec<Option<f64>>>>,
    /// Rows whose gsd departs from the latitude model by more than 1e-6.
    pub gsd_mismatches: Vec<String>,
    pub notices: Vec<String>,
}

/// Minimum rows for a correlation matrix.
pub const MIN_CORRELATION_ROWS: usize = 3;

pub fn feature_table(reports: &[ScoreReport]) -> FeatureTable {
    let mut rows: Vec<FeatureRow> = reports
        .iter()
        .map(|r| FeatureRow {
            aoi_id: r.aoi_id.clone(),
            values: [
                r.gsd,
                r.latitude.abs(),
                r.latitude.to_radians().cos(),
                r.gt_buildings as f64,
                r.track_f1,
                r.change_f1,
                r.scot,
                r.detection_f1,
            ],
        })
        .collect();
    rows.sort_by(|a, b| a.aoi_id.cmp(&b.aoi_id));
    let mut notices = Vec::new();
    let gsd_mismatches = rows
        .iter()
        .filter(|r| (r.values[0] - AoiMetadata::gsd_for_latitude(r.values[1])).abs() > 1e-6)
        .map(|r| r.aoi_id.clone())
        .collect();
    let correlations = if rows.len() < MIN_CORRELATION_ROWS {
        notices.push(format!("{} AOIs; correlations need at least {}", rows.len(), MIN_CORRELATION_ROWS));
        None
    } else {
        let cols: Vec<Vec<f64>> = (0..FEATURE_COLUMNS.len()).map(|j| rows.iter().map(|r| r.values[j]).collect()).collect();
        let mut constant = HashSet::new();
        let m = (0..cols.len())
            .map(|i| {
                (0..cols.len())
                    .map(|j| match pearson(&cols[i], &cols[j]) {
                        Ok(r) => Some(r),
                        Err(_) => {
                            for k in [i, j] {
                                if cols[k].iter().all(|v| *v == cols[k][0]) {
                                    constant.insert(k);
                                }
                            }
                            None
                        }
                    })
                    .collect()
            })
            .collect();
        let mut constant: Vec<usize> = constant.into_iter().collect();
        constant.sort_unstable();
        for k in constant {
            notices.push(format!("column {} has zero variance; its correlations are omitted", FEATURE_COLUMNS[k]));
        }
        Some(m)
    };
    FeatureTable { columns: FEATURE_COLUMNS.iter().map(|s| s.to_string()).collect(), rows, correlations, gsd_mismatches, notices }
}

impl FeatureTable {
    pub fn to_csv(&self) -> String {
        let mut s = format!("aoi_id,{}\n", self.columns.join(","));
        for r in &self.rows {
            let vals: Vec<String> = r.values.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{},{}", r.aoi_id, vals.join(","));
        }
        s
    }

    pub fn correlation_csv(&self) -> Option<String> {
        let m = self.correlations.as_ref()?;
        let mut s = format!("column,{}\n", self.columns.join(","));
        for (name, row) in self.columns.iter().zip(m) {
            let vals: Vec<String> = row.iter().map(|v| v.map_or_else(|| "NA".into(), |r| r.to_string())).collect();
            let _ = writeln!(s, "{},{}", name, vals.join(","));
        }
        Some(s)
    }

    pub fn correlation(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.columns.iter().position(|c| c == a)?;
        let j = self.columns.iter().position(|c| c == b)?;
        self.correlations.as_ref()?[i][j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangeTrackRow {
    pub model: String,
    pub aoi_id: String,
    pub track_f1: f64,
    pub change_f1: f64,
    pub scot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangeTrackTable {
    pub rows: Vec<ChangeTrackRow>,
    /// `(track, change, combined)` on an 11 × 11 grid over [0, 1]².
    pub contour: Vec<(f64, f64, f64)>,
    pub combiner: String,
}

/// Rows are sorted by model, then AOI.
pub fn change_vs_track_table(entries: &[(String, ScoreReport)], combiner: Combiner) -> ChangeTrackTable {
    let mut rows: Vec<ChangeTrackRow> = entries
        .iter()
        .map(|(model, r)| ChangeTrackRow {
            model: model.clone(),
            aoi_id: r.aoi_id.clone(),
            track_f1: r.track_f1,
            change_f1: r.change_f1,
            scot: r.scot,
        })
        .collect();
    rows.sort_by(|a, b| (&a.model, &a.aoi_id).cmp(&(&b.model, &b.aoi_id)));
    let mut contour = Vec::with_capacity(121);
    for i in 0..=10 {
        for j in 0..=10 {
            let (t, c) = (i as f64 / 10.0, j as f64 / 10.0);
            contour.push((t, c, combiner.combine(t, c)));
        }
    }
    ChangeTrackTable { rows, contour, combiner: combiner.to_string() }
}

impl ChangeTrackTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,aoi_id,track_f1,change_f1,scot\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.model, r.aoi_id, r.track_f1, r.change_f1, r.scot);
        }
        s
    }

    pub fn contour_csv(&self) -> String {
        let mut s = String::from("track_f1,change_f1,scot\n");
        for (t, c, v) in &self.contour {
            let _ = writeln!(s, "{t},{c},{v}");
        }
        s
    }
}

/// Minimal SVG plots with no dependencies.
pub mod svg {
    use std::fmt::Write as _;

    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const M: f64 = 48.0;

    fn escape(s: &str) -> String {
        s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
    }

    fn frame(title: &str, xlabel: &str, ylabel: &str, x: (f64, f64), y: (f64, f64), log_x: bool) -> String {
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
            W / 2.0,
            escape(title)
        );
        let _ = writeln!(
            s,
            "<line x1=\"{M}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/><line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{b}\" stroke=\"black\"/>",
            b = H - M,
            r = W - M
        );
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>", W / 2.0, H - 10.0, escape(xlabel));
        let _ = writeln!(
            s,
            "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 {})\">{}</text>",
            H / 2.0,
            H / 2.0,
            escape(ylabel)
        );
        let fmt = |v: f64| if log_x { format!("{v:.0}") } else { format!("{v:.2}") };
        let _ = writeln!(s, "<text x=\"{M}\" y=\"{}\" font-size=\"10\">{}</text>", H - M + 14.0, fmt(x.0));
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{}</text>", W - M, H - M + 14.0, fmt(x.1));
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{:.2}</text>", M - 4.0, H - M, y.0);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{:.2}</text>", M - 4.0, M + 4.0, y.1);
        s
    }

    fn project(v: (f64, f64), x: (f64, f64), y: (f64, f64), log_x: bool) -> (f64, f64) {
        let fx = if log_x { (v.0.ln() - x.0.ln()) / (x.1.ln() - x.0.ln()) } else { (v.0 - x.0) / (x.1 - x.0) };
        let fy = (v.1 - y.0) / (y.1 - y.0);
        (M + fx * (W - 2.0 * M), H - M - fy * (H - 2.0 * M))
    }

    fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if lo == hi {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    }

    /// Polyline through `points`, x optionally on a log axis.
    pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64)], log_x: bool) -> String {
        let x = range(points.iter().map(|p| p.0));
        let y = (0.0, 1.0);
        let mut s = frame(title, xlabel, ylabel, x, y, log_x);
        let path: Vec<String> = points
            .iter()
            .map(|&p| {
                let (px, py) = project(p, x, y, log_x);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>", path.join(" "));
        s.push_str("</svg>\n");
        s
    }

    /// Scatter on the unit square.
    pub fn scatter(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64)]) -> String {
        let (x, y) = ((0.0, 1.0), (0.0, 1.0));
        let mut s = frame(title, xlabel, ylabel, x, y, false);
        for &p in points {
            let (px, py) = project(p, x, y, false);
            let _ = writeln!(s, "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"3\" fill=\"darkorange\"/>");
        }
        s.push_str("</svg>\n");
        s
    }
}
