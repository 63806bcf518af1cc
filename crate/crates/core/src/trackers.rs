//! Turning probability cubes into identifier-tagged footprint series.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Polygon;
use crate::ingest::{AoiMetadata, Footprint, FootprintSeries};
use crate::matching::{candidate_pairs, greedy_assign};
use crate::raster::{
    collapse_time_upsampled, connected_components, polygonize, watershed_instances, CollapseOp, Connectivity,
    ProbabilityCube, Raster, Resample, WatershedParams,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerParams {
    pub upsample_factor: usize,
    pub resample: Resample,
    pub collapse_op: CollapseOp,
    /// Baseline per-frame threshold.
    pub mask_threshold: f32,
    /// Baseline cross-frame link threshold.
    pub link_iou: f64,
    pub baseline_connectivity: Connectivity,
    pub watershed: WatershedParams,
    /// Buildings whose fitted post-origin mean falls below this are dropped.
    pub keep_min_prob: f64,
    /// A frame counts toward a building's series when at least this share
    /// of its pixels is unobscured.
    pub min_valid_frac: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            upsample_factor: 3,
            resample: Resample::Nearest,
            collapse_op: CollapseOp::Mean,
            mask_threshold: 0.5,
            link_iou: 0.25,
            baseline_connectivity: Connectivity::Four,
            watershed: WatershedParams::default(),
            keep_min_prob: 0.3,
            min_valid_frac: 0.5,
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<()> {
        if self.upsample_factor < 1 {
            return Err(Error::InvalidParameter("upsample_factor must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mask_threshold) {
            return Err(Error::InvalidParameter(format!("mask_threshold {} outside [0, 1]", self.mask_threshold)));
        }
        if !(self.link_iou > 0.0 && self.link_iou <= 1.0) {
            return Err(Error::InvalidParameter(format!("link_iou {} outside (0, 1]", self.link_iou)));
        }
        if !(0.0..=1.0).contains(&self.keep_min_prob) || !(0.0..=1.0).contains(&self.min_valid_frac) {
            return Err(Error::InvalidParameter("keep_min_prob and min_valid_frac must lie in [0, 1]".into()));
        }
        self.watershed.validate()
    }
}

/// Per-frame threshold, connected components and polygons; footprints
/// inherit the ID of the previous frame's footprint they overlap most
/// (one-to-one, greedy by IoU) when that IoU reaches `link_iou`, otherwise
/// they get a fresh ID. Obscured pixels count as background.
pub fn baseline_track(
    cube: &ProbabilityCube,
    params: &TrackerParams,
    aoi_id: &str,
    metadata: AoiMetadata,
) -> Result<FootprintSeries> {
    params.validate()?;
    let per_frame: Vec<Vec<Polygon>> = (0..cube.frames)
        .into_par_iter()
        .map(|t| {
            let values = cube.frame(t);
            let valid = cube.frame_valid(t);
            let mask = Raster {
                width: cube.width,
                height: cube.height,
                data: values.iter().zip(valid).map(|(&v, &ok)| ok && v >= params.mask_threshold).collect(),
            };
            let labels = connected_components(&mask, params.baseline_connectivity);
            polygonize(&labels, &cube.transform).into_iter().map(|(_, p)| p).collect()
        })
        .collect();

    let mut next_id = 1u64;
    let mut frames: Vec<Vec<Footprint>> = Vec::with_capacity(cube.frames);
    for (t, polys) in per_frame.into_iter().enumerate() {
        let current: Vec<Footprint> = polys.into_iter().map(|p| Footprint::new(t, 0, p)).collect();
        let mut ids = vec![None; current.len()];
        if let Some(prev) = frames.last() {
            let prev_refs: Vec<&Footprint> = prev.iter().collect();
            let cur_refs: Vec<&Footprint> = current.iter().collect();
            for (pi, ci, _) in greedy_assign(candidate_pairs(&prev_refs, &cur_refs, params.link_iou)) {
                ids[ci] = Some(prev[pi].building_id);
            }
        }
        let frame = current
            .into_iter()
            .zip(ids)
            .map(|(mut fp, id)| {
                fp.building_id = id.unwrap_or_else(|| {
                    next_id += 1;
                    next_id - 1
                });
                fp
            })
            .collect();
        frames.push(frame);
    }
    FootprintSeries::from_frames(aoi_id, frames, metadata)
}

/// Fitted construction frame of one building.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OriginEstimate {
    /// `None` means the building never appears.
    pub origin: Option<usize>,
    /// Mean interior probability per frame, `None` where obscured.
    pub series: Vec<Option<f64>>,
    /// Mean of the valid frames from the origin on (0 for never).
    pub post_mean: f64,
    pub fit_error: f64,
}

const TIE_EPS: f64 = 1e-12;

/// Least-squares step fit. Candidate `k` models the series as 0 before `k`
/// and as the mean of valid frames from `k` on; "never" models all zeros
/// and loses every tie. Candidates with no valid frame at or after `k` are
/// skipped. Obscured frames contribute no residual. A fit whose post-origin
/// mean is below `keep_min_prob` becomes "never".
pub fn step_fit(series: &[Option<f64>], keep_min_prob: f64) -> OriginEstimate {
    let total_sq: f64 = series.iter().flatten().map(|p| p * p).sum();
    let t_len = series.len();
    let mut suffix_sum = vec![0f64; t_len + 1];
    let mut suffix_n = vec![0usize; t_len + 1];
    for t in (0..t_len).rev() {
        suffix_sum[t] = suffix_sum[t + 1] + series[t].unwrap_or(0.0);
        suffix_n[t] = suffix_n[t + 1] + usize::from(series[t].is_some());
    }
    let sse: Vec<f64> = (0..t_len)
        .take_while(|&k| suffix_n[k] > 0)
        .map(|k| (total_sq - suffix_sum[k] * suffix_sum[k] / suffix_n[k] as f64).max(0.0))
        .collect();
    match pick_origin(&sse) {
        Some(k) if suffix_sum[k] / suffix_n[k] as f64 >= keep_min_prob && suffix_sum[k] > 0.0 => OriginEstimate {
            origin: Some(k),
            series: series.to_vec(),
            post_mean: suffix_sum[k] / suffix_n[k] as f64,
            fit_error: sse[k],
        },
        _ => OriginEstimate { origin: None, series: series.to_vec(), post_mean: 0.0, fit_error: total_sq },
    }
}

/// Smallest `k` whose error is within a relative epsilon of the minimum.
fn pick_origin(sse: &[f64]) -> Option<usize> {
    let min = sse.iter().copied().fold(f64::INFINITY, f64::min);
    sse.iter().position(|&e| e <= min + TIE_EPS * min.max(1.0))
}

/// Reference step fit computing every candidate's residuals directly.
#[cfg(test)]
fn step_fit_brute_force(series: &[Option<f64>], keep_min_prob: f64) -> OriginEstimate {
    let sse_of = |k: Option<usize>| -> (f64, f64) {
        let post: Vec<f64> = match k {
            Some(k) => series[k..].iter().flatten().copied().collect(),
            None => vec![],
        };
        let mean = if post.is_empty() { 0.0 } else { post.iter().sum::<f64>() / post.len() as f64 };
        let sse = series
            .iter()
            .enumerate()
            .filter_map(|(t, p)| p.map(|p| (t, p)))
            .map(|(t, p)| {
                let model = match k {
                    Some(k) if t >= k => mean,
                    _ => 0.0,
                };
                (p - model) * (p - model)
            })
            .sum();
        (sse, mean)
    };
    let (never_sse, _) = sse_of(None);
    // Candidates stop at the last valid frame; "never" only wins when no
    // candidate exists or the fitted level is too dim.
    let last = series.iter().rposition(Option::is_some).map_or(0, |i| i + 1);
    let fits: Vec<(f64, f64)> = (0..last).map(|k| sse_of(Some(k))).collect();
    let errors: Vec<f64> = fits.iter().map(|f| f.0).collect();
    match pick_origin(&errors) {
        Some(k) if fits[k].1 >= keep_min_prob && fits[k].1 > 0.0 => {
            OriginEstimate { origin: Some(k), series: series.to_vec(), post_mean: fits[k].1, fit_error: fits[k].0 }
        }
        _ => OriginEstimate { origin: None, series: series.to_vec(), post_mean: 0.0, fit_error: never_sse },
    }
}

#[derive(Debug, Clone)]
pub struct CollapseBuilding {
    pub id: u64,
    pub polygon: Polygon,
    pub pixels: usize,
    pub estimate: OriginEstimate,
}

#[derive(Debug, Clone)]
pub struct CollapseOutput {
    pub series: FootprintSeries,
    /// Every extracted building, including those fitted as never.
    pub buildings: Vec<CollapseBuilding>,
    pub collapsed: Raster<f32>,
}

/// Upsample, collapse time, extract instances once, then fit each
/// instance's construction frame from its per-frame mean probability.
pub fn temporal_collapse_track(
    cube: &ProbabilityCube,
    params: &TrackerParams,
    aoi_id: &str,
    metadata: AoiMetadata,
) -> Result<CollapseOutput> {
    params.validate()?;
    let f = params.upsample_factor;
    let collapsed = collapse_time_upsampled(cube, f, params.resample, params.collapse_op);
    let labels = watershed_instances(&collapsed, &params.watershed)?;
    let polys = polygonize(&labels, &cube.transform.upsampled(f));

    // Pixel lists per label.
    let count = labels.count as usize;
    let mut pixels: Vec<Vec<usize>> = vec![Vec::new(); count + 1];
    for (i, &l) in labels.labels.data.iter().enumerate() {
        if l != 0 {
            pixels[l as usize].push(i);
        }
    }
    let w = labels.width();
    let mut by_label: Vec<Option<Polygon>> = vec![None; count + 1];
    for (l, p) in polys {
        // A label yields one ring unless watershed output is fragmented;
        // keep the largest piece.
        let slot = &mut by_label[l as usize];
        if slot.as_ref().map_or(true, |q| p.area() > q.area()) {
            *slot = Some(p);
        }
    }

    let buildings: Vec<CollapseBuilding> = (1..=count)
        .into_par_iter()
        .filter_map(|l| {
            let polygon = by_label[l].clone()?;
            let px = &pixels[l];
            let series: Vec<Option<f64>> = (0..cube.frames)
                .map(|t| {
                    let mut sum = 0f64;
                    let mut n = 0usize;
                    for &i in px {
                        let (x, y) = (i % w, i / w);
                        if cube.sample_valid(t, x, y, f) {
                            sum += cube.sample(t, x, y, f, params.resample) as f64;
                            n += 1;
                        }
                    }
                    (n > 0 && n as f64 >= params.min_valid_frac * px.len() as f64).then(|| sum / n as f64)
                })
                .collect();
            let estimate = step_fit(&series, params.keep_min_prob);
            Some(CollapseBuilding { id: l as u64, polygon, pixels: px.len(), estimate })
        })
        .collect();

    let mut footprints = Vec::new();
    for b in &buildings {
        if let Some(k) = b.estimate.origin {
            for t in k..cube.frames {
                footprints.push(Footprint::new(t, b.id, b.polygon.clone()));
            }
        }
    }
    let series = FootprintSeries::new(aoi_id, cube.frames, footprints, metadata)?;
    Ok(CollapseOutput { series, buildings, collapsed })
}
