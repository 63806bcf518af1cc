//! Synthetic urban growth: ground-truth scenes, rendered probability cubes
//! and perturbed proposals.
//!
//! Coordinates are native pixels. `min_gap` is expressed at the tracker's
//! working scale (`working_scale` times finer than native).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{polygon_distance, Point, Polygon};
use crate::ingest::{month_stem, write_aoi, AoiLayout, AoiMetadata, Footprint, FootprintSeries, UdmMask};
use crate::raster::{rasterize_polygon, write_cube, CubeHeader, ProbabilityCube, Transform};
use crate::rng::{stream, substream, StreamRng};

/// Attempts per building before placement is declared infeasible.
pub const PLACEMENT_ATTEMPTS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub frames: usize,
    pub n_buildings: usize,
    /// Side length range in native pixels, inclusive.
    pub size_range: [u32; 2],
    /// Minimum boundary distance between buildings, working-scale pixels.
    pub min_gap: f64,
    pub working_scale: u32,
    pub frac_preexisting: f64,
    /// Inclusive frame range for new construction. Defaults to
    /// `[1, max(1, frames / 2)]`.
    pub construction_window: Option<[usize; 2]>,
    pub latitude: f64,
    /// Rotate rectangles by a random angle. Off by default so that
    /// footprints stay pixel-aligned.
    pub rotate: bool,
    /// First month, `YYYY_MM`.
    pub start_month: String,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            width: 256,
            height: 256,
            frames: 24,
            n_buildings: 100,
            size_range: [2, 6],
            min_gap: 2.0,
            working_scale: 3,
            frac_preexisting: 0.5,
            construction_window: None,
            latitude: 0.0,
            rotate: false,
            start_month: "2018_01".into(),
        }
    }
}

impl SceneConfig {
    pub fn window(&self) -> [usize; 2] {
        self.construction_window.unwrap_or([1.min(self.frames.saturating_sub(1)), (self.frames / 2).max(1)])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.frames == 0 {
            return bad("frames must be >= 1".into());
        }
        if !(self.min_gap >= 1.0) {
            return bad(format!("min_gap {} must be >= 1 working pixel", self.min_gap));
        }
        if self.working_scale == 0 {
            return bad("working_scale must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.frac_preexisting) {
            return bad(format!("frac_preexisting {} outside [0, 1]", self.frac_preexisting));
        }
        let [lo, hi] = self.size_range;
        if lo == 0 || lo > hi || hi > self.width.min(self.height) {
            return bad(format!("size_range {:?} invalid for a {}x{} scene", self.size_range, self.width, self.height));
        }
        let [a, b] = self.window();
        if self.frames > 1 && (a == 0 || a > b || b >= self.frames) {
            return bad(format!("construction_window [{a}, {b}] must lie within [1, {}]", self.frames - 1));
        }
        if !(self.latitude.abs() < 90.0) {
            return bad(format!("latitude {} outside (-90, 90)", self.latitude));
        }
        Ok(())
    }

    pub fn metadata(&self) -> AoiMetadata {
        AoiMetadata {
            gsd: AoiMetadata::gsd_for_latitude(self.latitude),
            latitude: self.latitude,
            width: self.width,
            height: self.height,
            start_month: Some(self.start_month.clone()),
        }
    }
}

/// Ground truth of one synthetic AOI.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub series: FootprintSeries,
    /// Construction frame per building id.
    pub origins: BTreeMap<u64, usize>,
}

struct Placer {
    cell: f64,
    grid: HashMap<(i64, i64), Vec<usize>>,
    polys: Vec<Polygon>,
}

impl Placer {
    fn new(cell: f64) -> Self {
        Self { cell, grid: HashMap::new(), polys: Vec::new() }
    }

    fn cells(&self, p: &Polygon, pad: f64) -> impl Iterator<Item = (i64, i64)> {
        let b = p.bbox();
        let c = self.cell;
        let (x0, x1) = (((b.min_x - pad) / c).floor() as i64, ((b.max_x + pad) / c).floor() as i64);
        let (y0, y1) = (((b.min_y - pad) / c).floor() as i64, ((b.max_y + pad) / c).floor() as i64);
        (y0..=y1).flat_map(move |y| (x0..=x1).map(move |x| (x, y)))
    }

    /// True if `p` keeps at least `gap` from every placed polygon.
    fn fits(&self, p: &Polygon, gap: f64, exact: bool) -> bool {
        let mut seen = Vec::new();
        for cell in self.cells(p, gap) {
            let Some(list) = self.grid.get(&cell) else { continue };
            for &i in list {
                if seen.contains(&i) {
                    continue;
                }
                seen.push(i);
                let q = &self.polys[i];
                let d = if exact { polygon_distance(p, q) } else { p.bbox().distance(&q.bbox()) };
                if d < gap - 1e-9 {
                    return false;
                }
            }
        }
        true
    }

    fn insert(&mut self, p: Polygon) {
        let k = self.polys.len();
        let cells: Vec<_> = self.cells(&p, 0.0).collect();
        for c in cells {
            self.grid.entry(c).or_default().push(k);
        }
        self.polys.push(p);
    }
}

fn random_rect(rng: &mut StreamRng, cfg: &SceneConfig) -> Polygon {
    let [lo, hi] = cfg.size_range;
    let w = rng.int_in(lo as i64, hi as i64) as f64;
    let h = rng.int_in(lo as i64, hi as i64) as f64;
    if !cfg.rotate {
        let x = rng.int_in(0, cfg.width as i64 - w as i64) as f64;
        let y = rng.int_in(0, cfg.height as i64 - h as i64) as f64;
        return Polygon::rect(x, y, x + w, y + h).expect("positive size");
    }
    let angle = rng.uniform() * std::f64::consts::FRAC_PI_2;
    let (s, c) = angle.sin_cos();
    // Half extents of the rotated box.
    let ex = 0.5 * (w * c + h * s);
    let ey = 0.5 * (w * s + h * c);
    let cx = rng.uniform_in(ex, cfg.width as f64 - ex);
    let cy = rng.uniform_in(ey, cfg.height as f64 - ey);
    let corners = [(-w, -h), (w, -h), (w, h), (-w, h)]
        .iter()
        .map(|&(dx, dy)| Point::new(cx + 0.5 * (dx * c - dy * s), cy + 0.5 * (dx * s + dy * c)))
        .collect();
    Polygon::new(corners, vec![]).expect("rotated rectangle is simple")
}

/// Places `n_buildings` rectangles with the configured gap and assigns
/// construction frames. Ids are `1..=n` in placement order.
pub fn generate_scene(cfg: &SceneConfig, aoi_id: &str) -> Result<Scene> {
    cfg.validate()?;
    let gap = cfg.min_gap / cfg.working_scale as f64;
    let mut rng = StreamRng::new(cfg.seed, stream::PLACEMENT);
    let mut placer = Placer::new((cfg.size_range[1] as f64 * 2.0).max(8.0));
    let mut attempts = 0usize;
    for placed in 0..cfg.n_buildings {
        let mut ok = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            attempts += 1;
            let p = random_rect(&mut rng, cfg);
            if placer.fits(&p, gap, cfg.rotate) {
                placer.insert(p);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::InfeasiblePlacement { placed, requested: cfg.n_buildings, attempts });
        }
    }

    let mut timing = StreamRng::new(cfg.seed, stream::TIMING);
    let [a, b] = cfg.window();
    let mut origins = BTreeMap::new();
    let mut footprints = Vec::new();
    for (i, poly) in placer.polys.into_iter().enumerate() {
        let id = i as u64 + 1;
        let pre = timing.bernoulli(cfg.frac_preexisting);
        let k = if pre || cfg.frames == 1 { 0 } else { timing.int_in(a as i64, b as i64) as usize };
        origins.insert(id, k);
        for t in k..cfg.frames {
            footprints.push(Footprint::new(t, id, poly.clone()));
        }
    }
    let series = FootprintSeries::new(aoi_id, cfg.frames, footprints, cfg.metadata())?;
    Ok(Scene { series, origins })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub interior_mean: f64,
    pub background_mean: f64,
    pub sigma: f64,
    /// Amplitude of a sinusoidal per-frame offset added to every pixel.
    pub seasonal_amplitude: f64,
    pub seasonal_period: f64,
    pub cloud_count: usize,
    /// Cloud radius range, native pixels.
    pub cloud_radius: [f64; 2],
    /// Chance that a present building reads as background in one frame,
    /// a stand-in for per-frame missed detections.
    pub flicker_rate: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            interior_mean: 0.9,
            background_mean: 0.05,
            sigma: 0.0,
            seasonal_amplitude: 0.0,
            seasonal_period: 12.0,
            cloud_count: 0,
            cloud_radius: [8.0, 24.0],
            flicker_rate: 0.0,
        }
    }
}

impl NoiseConfig {
    /// The noisy setting used to compare trackers.
    pub fn standard_noisy() -> Self {
        Self { sigma: 0.1, seasonal_amplitude: 0.1, cloud_count: 2, flicker_rate: 0.1, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit(self.interior_mean) && unit(self.background_mean) && self.interior_mean > self.background_mean) {
            return bad("need 0 <= background_mean < interior_mean <= 1".into());
        }
        if !(self.sigma >= 0.0) || !(self.seasonal_amplitude >= 0.0) || !(self.seasonal_period > 0.0) {
            return bad("sigma and seasonal_amplitude must be >= 0, seasonal_period > 0".into());
        }
        if !(self.cloud_radius[0] > 0.0 && self.cloud_radius[0] <= self.cloud_radius[1]) {
            return bad(format!("cloud_radius {:?} invalid", self.cloud_radius));
        }
        if !unit(self.flicker_rate) {
            return bad(format!("flicker_rate {} outside [0, 1]", self.flicker_rate));
        }
        Ok(())
    }

    pub fn offset(&self, t: usize) -> f64 {
        self.seasonal_amplitude * (2.0 * std::f64::consts::PI * t as f64 / self.seasonal_period).sin()
    }
}

#[derive(Debug, Clone)]
pub struct Rendered {
    pub cube: ProbabilityCube,
    /// One mask per frame.
    pub udms: Vec<UdmMask>,
}

fn cloud_polygon(cx: f64, cy: f64, r: f64) -> Polygon {
    let pts = (0..16)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / 16.0;
            Point::new(cx + r * a.cos(), cy + r * a.sin())
        })
        .collect();
    Polygon::new(pts, vec![]).expect("regular polygon")
}

fn frame_clouds(noise: &NoiseConfig, seed: u64, t: usize, w: u32, h: u32) -> Vec<Polygon> {
    let mut rng = StreamRng::new(seed, substream(stream::CLOUDS, t));
    let mut clouds: Vec<Polygon> = Vec::new();
    for _ in 0..noise.cloud_count {
        // Clouds of one frame are kept disjoint; a few tries, then skip.
        for _ in 0..20 {
            let r = rng.uniform_in(noise.cloud_radius[0], noise.cloud_radius[1]);
            let c = cloud_polygon(rng.uniform_in(0.0, w as f64), rng.uniform_in(0.0, h as f64), r);
            if clouds.iter().all(|o| polygon_distance(o, &c) > 0.0) {
                clouds.push(c);
                break;
            }
        }
    }
    clouds
}

/// Renders per-frame probabilities: `clamp(base + N(0, σ) + offset_t)` with
/// `base` the interior mean inside any footprint present at `t` (unless
/// that building flickers off in that frame) and the background mean
/// elsewhere. Pixels under a cloud render as background and are invalid.
pub fn render_cube(gt: &FootprintSeries, noise: &NoiseConfig, seed: u64) -> Result<Rendered> {
    noise.validate()?;
    let frames = gt.frame_count();
    if frames == 0 {
        return Err(Error::InvalidParameter("cannot render a series with no frames".into()));
    }
    let (w, h) = (gt.metadata.width, gt.metadata.height);
    let plane = w as usize * h as usize;

    // Interior pixels once per building.
    let firsts = gt.first_appearances();
    let interiors: BTreeMap<u64, Vec<usize>> = firsts
        .iter()
        .map(|(&id, fp)| (id, rasterize_polygon(&fp.polygon, w as usize, h as usize, &Transform::IDENTITY)))
        .collect();

    let mut flicker = StreamRng::new(seed, stream::FLICKER);
    let mut lit: Vec<Vec<u64>> = Vec::with_capacity(frames);
    for t in 0..frames {
        let mut ids = Vec::new();
        for fp in gt.frame(t) {
            let off = noise.flicker_rate > 0.0 && flicker.bernoulli(noise.flicker_rate);
            if !off {
                ids.push(fp.building_id);
            }
        }
        lit.push(ids);
    }

    let per_frame: Vec<(Vec<f32>, Vec<bool>, Vec<Polygon>)> = (0..frames)
        .into_par_iter()
        .map(|t| {
            let mut base = vec![noise.background_mean; plane];
            for id in &lit[t] {
                if gt.frame(t).binary_search_by_key(id, |f| f.building_id).is_ok() {
                    for &i in &interiors[id] {
                        base[i] = noise.interior_mean;
                    }
                }
            }
            let clouds = frame_clouds(noise, seed, t, w, h);
            let mut valid = vec![true; plane];
            for c in &clouds {
                for i in rasterize_polygon(c, w as usize, h as usize, &Transform::IDENTITY) {
                    valid[i] = false;
                    base[i] = noise.background_mean;
                }
            }
            let offset = noise.offset(t);
            let mut rng = StreamRng::new(seed, substream(stream::RENDER, t));
            let values = base
                .iter()
                .map(|&b| {
                    let n = if noise.sigma > 0.0 { noise.sigma * rng.normal() } else { 0.0 };
                    (b + n + offset).clamp(0.0, 1.0) as f32
                })
                .collect();
            (values, valid, clouds)
        })
        .collect();

    let mut values = Vec::with_capacity(frames * plane);
    let mut valid = Vec::with_capacity(frames * plane);
    let mut udms = Vec::with_capacity(frames);
    for (t, (v, ok, clouds)) in per_frame.into_iter().enumerate() {
        values.extend(v);
        valid.extend(ok);
        udms.push(UdmMask { frame: t, obscured: clouds });
    }
    let cube = ProbabilityCube::new(frames, h as usize, w as usize, values, Some(valid), Transform::IDENTITY)?;
    Ok(Rendered { cube, udms })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OriginShift {
    #[default]
    None,
    /// Every new building moves by `frames`.
    Fixed { frames: i64 },
    /// Each new building moves, with probability `rate`, by a uniform
    /// nonzero amount in `[-max, max]`.
    Uniform { rate: f64, max: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    pub drop_rate: f64,
    pub id_swap_rate: f64,
    /// Per-vertex uniform displacement bound, pixels.
    pub vertex_jitter: f64,
    pub origin_shift: OriginShift,
    /// Expected spurious buildings per ground-truth building.
    pub spurious_rate: f64,
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("drop_rate", self.drop_rate), ("id_swap_rate", self.id_swap_rate), ("spurious_rate", self.spurious_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} {v} outside [0, 1]")));
            }
        }
        if !(self.vertex_jitter >= 0.0) {
            return Err(Error::InvalidParameter("vertex_jitter must be >= 0".into()));
        }
        if let OriginShift::Uniform { rate, max } = self.origin_shift {
            if !(0.0..=1.0).contains(&rate) || max < 1 {
                return Err(Error::InvalidParameter("uniform origin shift needs rate in [0, 1] and max >= 1".into()));
            }
        }
        Ok(())
    }
}

/// What `perturb_proposals` did, for computing expected scores.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PerturbLog {
    pub dropped: Vec<u64>,
    /// `(old id, new id, first frame under the new id)`.
    pub swapped: Vec<(u64, u64, usize)>,
    pub jittered: Vec<u64>,
    /// `(id, old origin, new origin)` for buildings whose origin moved.
    pub shifted: Vec<(u64, usize, usize)>,
    /// `(id, origin)` of added buildings.
    pub spurious: Vec<(u64, usize)>,
}

fn jitter_polygon(p: &Polygon, amount: f64, rng: &mut StreamRng) -> Option<Polygon> {
    let ext = p
        .exterior()
        .iter()
        .map(|q| Point::new(q.x + rng.uniform_in(-amount, amount), q.y + rng.uniform_in(-amount, amount)))
        .collect();
    Polygon::new(ext, vec![]).ok()
}

/// Derives proposals from ground truth by controlled edits. Buildings are
/// visited in id order and every random draw comes from one stream, so the
/// result is a pure function of `(gt, cfg, seed)`.
pub fn perturb_proposals(gt: &FootprintSeries, cfg: &PerturbConfig, seed: u64) -> Result<(FootprintSeries, PerturbLog)> {
    cfg.validate()?;
    let frames = gt.frame_count();
    let mut rng = StreamRng::new(seed, stream::PERTURB);
    let mut log = PerturbLog::default();
    let firsts = gt.first_appearances();
    let mut next_id = firsts.keys().next_back().map_or(1, |m| m + 1);
    let mut out: Vec<Footprint> = Vec::new();
    let mut kept_polys: Vec<Polygon> = Vec::new();
    let mut frames_of: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for f in gt.footprints() {
        frames_of.entry(f.building_id).or_default().push(f.frame);
    }

    for (&id, first) in &firsts {
        if cfg.drop_rate > 0.0 && rng.bernoulli(cfg.drop_rate) {
            log.dropped.push(id);
            continue;
        }
        let present = &frames_of[&id];
        let mut origin = first.frame;
        let last = present.last().copied().unwrap_or(origin);
        if origin > 0 {
            let shift = match cfg.origin_shift {
                OriginShift::None => 0,
                OriginShift::Fixed { frames } => frames,
                OriginShift::Uniform { rate, max } => {
                    if rng.bernoulli(rate) {
                        let mut s = rng.int_in(-max, max - 1);
                        if s >= 0 {
                            s += 1;
                        }
                        s
                    } else {
                        0
                    }
                }
            };
            let moved = (origin as i64 + shift).clamp(0, frames as i64 - 1) as usize;
            if moved != origin {
                log.shifted.push((id, origin, moved));
                origin = moved;
            }
        }
        let swap_at = if cfg.id_swap_rate > 0.0 && rng.bernoulli(cfg.id_swap_rate) && last > origin {
            Some(rng.int_in(origin as i64 + 1, last as i64) as usize)
        } else {
            None
        };
        let polygon = if cfg.vertex_jitter > 0.0 {
            match jitter_polygon(&first.polygon, cfg.vertex_jitter, &mut rng) {
                Some(p) => {
                    log.jittered.push(id);
                    p
                }
                None => first.polygon.clone(),
            }
        } else {
            first.polygon.clone()
        };
        let new_id = swap_at.map(|s| {
            let n = next_id;
            next_id += 1;
            log.swapped.push((id, n, s));
            n
        });
        // Frames where the building is present, shifted to the new origin:
        // before the original origin it persists from `origin` on.
        let present_frames: Vec<usize> = if origin < first.frame {
            (origin..first.frame).chain(present.iter().copied()).collect()
        } else {
            present.iter().copied().filter(|&t| t >= origin).collect()
        };
        for t in present_frames {
            let pid = match (new_id, swap_at) {
                (Some(n), Some(s)) if t >= s => n,
                _ => id,
            };
            let poly = if cfg.vertex_jitter > 0.0 {
                polygon.clone()
            } else {
                let frame = gt.frame(t);
                frame
                    .binary_search_by_key(&id, |f| f.building_id)
                    .map_or_else(|_| polygon.clone(), |i| frame[i].polygon.clone())
            };
            out.push(Footprint::new(t, pid, poly));
        }
        kept_polys.push(polygon);
    }

    if cfg.spurious_rate > 0.0 {
        let all: Vec<Polygon> = firsts.values().map(|f| f.polygon.clone()).chain(kept_polys).collect();
        let mut placer = Placer::new(16.0);
        for p in all {
            placer.insert(p);
        }
        let scene = SceneConfig {
            width: gt.metadata.width,
            height: gt.metadata.height,
            ..SceneConfig::default()
        };
        for _ in 0..firsts.len() {
            if !rng.bernoulli(cfg.spurious_rate) {
                continue;
            }
            for _ in 0..100 {
                let p = random_rect(&mut rng, &scene);
                if placer.fits(&p, 1.0, false) {
                    let origin = rng.below(frames as u64) as usize;
                    let id = next_id;
                    next_id += 1;
                    for t in origin..frames {
                        out.push(Footprint::new(t, id, p.clone()));
                    }
                    placer.insert(p);
                    log.spurious.push((id, origin));
                    break;
                }
            }
        }
    }
    let series = FootprintSeries::new(gt.aoi_id.clone(), frames, out, gt.metadata.clone())?;
    Ok((series, log))
}

/// A complete synthetic AOI as written to disk.
#[derive(Debug, Clone)]
pub struct SynthAoi {
    pub scene: Scene,
    pub rendered: Option<Rendered>,
    pub stems: Vec<String>,
}

impl SynthAoi {
    pub fn aoi_id(&self) -> &str {
        &self.scene.series.aoi_id
    }

    pub fn udms(&self) -> Vec<UdmMask> {
        match &self.rendered {
            Some(r) => r.udms.clone(),
            None => (0..self.scene.series.frame_count()).map(|frame| UdmMask { frame, obscured: vec![] }).collect(),
        }
    }
}

pub fn build_aoi(scene_cfg: &SceneConfig, noise: Option<&NoiseConfig>, aoi_id: &str) -> Result<SynthAoi> {
    let scene = generate_scene(scene_cfg, aoi_id)?;
    let rendered = noise.map(|n| render_cube(&scene.series, n, scene_cfg.seed)).transpose()?;
    let stems = (0..scene_cfg.frames).map(|t| month_stem(&scene_cfg.start_month, t, aoi_id)).collect();
    Ok(SynthAoi { scene, rendered, stems })
}

pub const CUBE_HEADER_FILE: &str = "cube.json";
pub const CUBE_DATA_FILE: &str = "cube.bin";

/// Writes labels, UDMs, metadata and (when rendered) the cube under `dir`.
pub fn write_synth_aoi(dir: &Path, aoi: &SynthAoi, layout: &AoiLayout) -> Result<()> {
    write_aoi(dir, &aoi.scene.series, &aoi.udms(), &aoi.stems, layout)?;
    if let Some(r) = &aoi.rendered {
        let header = CubeHeader::for_cube(&r.cube, CUBE_DATA_FILE, Some(&layout.udm_dir), aoi.stems.clone());
        write_cube(&dir.join(CUBE_HEADER_FILE), &r.cube, &header)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub seed: u64,
    pub n_aois: usize,
    pub aoi_prefix: String,
    pub scene: SceneConfig,
    /// Render probability cubes when present.
    pub noise: Option<NoiseConfig>,
    /// Per-AOI latitudes; when empty, drawn uniformly from `latitude_range`.
    pub latitudes: Vec<f64>,
    pub latitude_range: [f64; 2],
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_aois: 3,
            aoi_prefix: "synth".into(),
            scene: SceneConfig::default(),
            noise: Some(NoiseConfig::default()),
            latitudes: vec![],
            latitude_range: [-60.0, 60.0],
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        self.scene_configs().map(|_| ())
    }

    /// Per-AOI scene configs: seeds and latitudes derived from the dataset
    /// seed on a dedicated stream, so AOI `i` never depends on `n_aois`.
    pub fn scene_configs(&self) -> Result<Vec<(String, SceneConfig)>> {
        if !self.latitudes.is_empty() && self.latitudes.len() != self.n_aois {
            return Err(Error::InvalidParameter(format!(
                "{} latitudes for {} AOIs",
                self.latitudes.len(),
                self.n_aois
            )));
        }
        let [lo, hi] = self.latitude_range;
        if !(lo <= hi && lo > -90.0 && hi < 90.0) {
            return Err(Error::InvalidParameter(format!("latitude_range {:?} invalid", self.latitude_range)));
        }
        Ok((0..self.n_aois)
            .map(|i| {
                let mut rng = StreamRng::new(self.seed, substream(stream::PLACEMENT, 1_000_000 + i));
                let seed = rng.next_u64();
                let latitude = self.latitudes.get(i).copied().unwrap_or_else(|| rng.uniform_in(lo, hi));
                let id = format!("{}_{:04}", self.aoi_prefix, i);
                (id, SceneConfig { seed, latitude, ..self.scene.clone() })
            })
            .collect())
    }
}

/// Builds every AOI of a dataset; scenes are generated concurrently and
/// returned in AOI order.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Vec<SynthAoi>> {
    let configs = cfg.scene_configs()?;
    configs.par_iter().map(|(id, sc)| build_aoi(sc, cfg.noise.as_ref(), id)).collect()
}
