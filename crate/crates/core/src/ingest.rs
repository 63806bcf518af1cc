//! Footprint time series and the on-disk AOI layout.
//!
//! ```text
//! <aoi>/labels/<stem>.geojson   one FeatureCollection per month
//! <aoi>/udm/<stem>.geojson      optional cloud polygons per month
//! <aoi>/metadata.json           {"gsd", "latitude", "width", "height"}
//! ```
//!
//! Frames are ordered by file name; the `YYYY_MM` key found in each name is
//! only used to pair UDM files with label files and to detect gaps.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use geojson::{Feature, FeatureCollection, GeoJson, Geometry, JsonObject, JsonValue, Value};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{intersection_area, Point, Polygon};

pub const DEFAULT_ID_KEY: &str = "Id";
pub const DEFAULT_MONTH_PATTERN: &str = r"(\d{4})_(\d{2})";
pub const DEFAULT_OCCLUSION_FRAC: f64 = 0.5;

/// One building outline in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Footprint {
    pub frame: usize,
    pub building_id: u64,
    pub polygon: Polygon,
}

impl Footprint {
    pub fn new(frame: usize, building_id: u64, polygon: Polygon) -> Self {
        Self { frame, building_id, polygon }
    }

    pub fn area(&self) -> f64 {
        self.polygon.area()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoiMetadata {
    /// Meters per pixel.
    pub gsd: f64,
    pub latitude: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_month: Option<String>,
}

impl Default for AoiMetadata {
    fn default() -> Self {
        Self { gsd: 4.8, latitude: 0.0, width: 1024, height: 1024, start_month: None }
    }
}

impl AoiMetadata {
    /// Planet mosaic resolution model: `gsd = 4.8 m × cos(latitude)`.
    pub fn gsd_for_latitude(latitude: f64) -> f64 {
        4.8 * latitude.to_radians().cos()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gsd > 0.0) {
            return Err(Error::InvalidParameter(format!("gsd must be positive, got {}", self.gsd)));
        }
        if !(self.latitude.abs() <= 90.0) {
            return Err(Error::InvalidParameter(format!("latitude out of range: {}", self.latitude)));
        }
        Ok(())
    }
}

/// Cloud-obscured regions of one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UdmMask {
    pub frame: usize,
    pub obscured: Vec<Polygon>,
}

/// All footprints of one AOI, grouped by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FootprintSeries {
    pub aoi_id: String,
    frames: Vec<Vec<Footprint>>,
    pub metadata: AoiMetadata,
}

impl FootprintSeries {
    /// Groups footprints by frame. Every frame index must be `< frames` and
    /// ids must be unique within a frame.
    pub fn new(
        aoi_id: impl Into<String>,
        frames: usize,
        footprints: impl IntoIterator<Item = Footprint>,
        metadata: AoiMetadata,
    ) -> Result<Self> {
        let mut grouped: Vec<Vec<Footprint>> = vec![Vec::new(); frames];
        for fp in footprints {
            if fp.frame >= frames {
                return Err(Error::InvalidParameter(format!(
                    "footprint frame {} outside series of {} frames",
                    fp.frame, frames
                )));
            }
            grouped[fp.frame].push(fp);
        }
        Self::from_frames(aoi_id, grouped, metadata)
    }

    pub fn from_frames(aoi_id: impl Into<String>, mut frames: Vec<Vec<Footprint>>, metadata: AoiMetadata) -> Result<Self> {
        for (t, frame) in frames.iter_mut().enumerate() {
            frame.sort_by_key(|f| f.building_id);
            for w in frame.windows(2) {
                if w[0].building_id == w[1].building_id {
                    return Err(Error::DuplicateId { id: w[0].building_id, frame: t });
                }
            }
            for f in frame.iter_mut() {
                f.frame = t;
            }
        }
        Ok(Self { aoi_id: aoi_id.into(), frames, metadata })
    }

    pub fn empty(aoi_id: impl Into<String>, frames: usize, metadata: AoiMetadata) -> Self {
        Self { aoi_id: aoi_id.into(), frames: vec![Vec::new(); frames], metadata }
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Footprints of frame `t`, sorted by id.
    pub fn frame(&self, t: usize) -> &[Footprint] {
        &self.frames[t]
    }

    pub fn frames(&self) -> &[Vec<Footprint>] {
        &self.frames
    }

    pub fn footprints(&self) -> impl Iterator<Item = &Footprint> {
        self.frames.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Distinct building ids.
    pub fn building_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.footprints().map(|f| f.building_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// First frame at which each building id appears, with its footprint.
    pub fn first_appearances(&self) -> BTreeMap<u64, &Footprint> {
        let mut first = BTreeMap::new();
        for fp in self.footprints() {
            first.entry(fp.building_id).or_insert(fp);
        }
        first
    }

    /// Applies `f` to every id. `f` must be injective.
    pub fn relabel(&self, f: impl Fn(u64) -> u64) -> Result<Self> {
        let frames = self
            .frames
            .iter()
            .map(|fr| fr.iter().map(|fp| Footprint { building_id: f(fp.building_id), ..fp.clone() }).collect())
            .collect();
        Self::from_frames(self.aoi_id.clone(), frames, self.metadata.clone())
    }

    pub fn with_aoi_id(mut self, aoi_id: impl Into<String>) -> Self {
        self.aoi_id = aoi_id.into();
        self
    }
}

/// Parses a FeatureCollection of polygon footprints. Ids are read from the
/// `id_key` property and must be non-negative integers (numeric strings are
/// accepted). A MultiPolygon with exactly one member is treated as a Polygon.
pub fn parse_footprints(document: &str, id_key: &str, frame: usize) -> Result<Vec<Footprint>> {
    let collection = parse_collection(document)?;
    let mut out = Vec::with_capacity(collection.features.len());
    let mut seen = HashSet::new();
    for (index, feature) in collection.features.iter().enumerate() {
        let building_id = read_id(feature, id_key, index)?;
        let polygon = feature_polygon(feature, index)?;
        if !seen.insert(building_id) {
            return Err(Error::DuplicateId { id: building_id, frame });
        }
        out.push(Footprint { frame, building_id, polygon });
    }
    Ok(out)
}

/// Parses UDM polygons. Multi-polygons are split; ids are ignored.
pub fn parse_udm(document: &str) -> Result<Vec<Polygon>> {
    let collection = parse_collection(document)?;
    let mut out = Vec::new();
    for (index, feature) in collection.features.iter().enumerate() {
        let geometry = feature
            .geometry
            .as_ref()
            .ok_or_else(|| Error::UnsupportedGeometry { index, kind: "null".into() })?;
        match &geometry.value {
            Value::Polygon(rings) => out.push(rings_to_polygon(rings, index)?),
            Value::MultiPolygon(polys) => {
                for rings in polys {
                    out.push(rings_to_polygon(rings, index)?);
                }
            }
            other => return Err(Error::UnsupportedGeometry { index, kind: other.type_name().to_string() }),
        }
    }
    Ok(out)
}

fn parse_collection(document: &str) -> Result<FeatureCollection> {
    let gj: GeoJson = document.parse().map_err(|e: geojson::Error| Error::GeoJson(e.to_string()))?;
    match gj {
        GeoJson::FeatureCollection(fc) => Ok(fc),
        _ => Err(Error::GeoJson("expected a FeatureCollection".into())),
    }
}

fn read_id(feature: &Feature, id_key: &str, index: usize) -> Result<u64> {
    let value = feature.property(id_key).ok_or(Error::MissingId { index })?;
    let invalid = |reason: &str| Error::InvalidId { index, reason: reason.to_string() };
    match value {
        JsonValue::Number(n) => {
            if let Some(v) = n.as_u64() {
                Ok(v)
            } else if let Some(f) = n.as_f64() {
                if f >= 0.0 && f.fract() == 0.0 && f <= u64::MAX as f64 {
                    Ok(f as u64)
                } else {
                    Err(invalid(&format!("{f} is not a non-negative integer")))
                }
            } else {
                Err(invalid("negative id"))
            }
        }
        JsonValue::String(s) => s.trim().parse::<u64>().map_err(|_| invalid(&format!("{s:?} is not an integer"))),
        other => Err(invalid(&format!("unexpected value {other}"))),
    }
}

fn feature_polygon(feature: &Feature, index: usize) -> Result<Polygon> {
    let geometry = feature
        .geometry
        .as_ref()
        .ok_or_else(|| Error::UnsupportedGeometry { index, kind: "null".into() })?;
    match &geometry.value {
        Value::Polygon(rings) => rings_to_polygon(rings, index),
        Value::MultiPolygon(polys) if polys.len() == 1 => rings_to_polygon(&polys[0], index),
        other => Err(Error::UnsupportedGeometry { index, kind: other.type_name().to_string() }),
    }
}

fn rings_to_polygon(rings: &[Vec<Vec<f64>>], index: usize) -> Result<Polygon> {
    let to_ring = |ring: &Vec<Vec<f64>>| -> Result<Vec<Point>> {
        ring.iter()
            .map(|pos| {
                if pos.len() < 2 {
                    Err(Error::GeoJson(format!("position with {} coordinates at feature {index}", pos.len())))
                } else {
                    Ok(Point::new(pos[0], pos[1]))
                }
            })
            .collect()
    };
    let (exterior, holes) = rings
        .split_first()
        .ok_or_else(|| Error::GeoJson(format!("polygon without rings at feature {index}")))?;
    let exterior = to_ring(exterior)?;
    let holes = holes.iter().map(to_ring).collect::<Result<Vec<_>>>()?;
    Polygon::new(exterior, holes).map_err(|source| Error::FeatureGeometry { index, source })
}

fn polygon_rings(p: &Polygon) -> Vec<Vec<Vec<f64>>> {
    let close = |ring: &[Point]| -> Vec<Vec<f64>> {
        ring.iter().chain(ring.first()).map(|q| vec![q.x, q.y]).collect()
    };
    std::iter::once(close(p.exterior())).chain(p.holes().iter().map(|h| close(h))).collect()
}

/// Serializes one frame of footprints as a FeatureCollection.
pub fn footprints_to_geojson(footprints: &[Footprint], id_key: &str) -> String {
    let features = footprints
        .iter()
        .map(|fp| {
            let mut props = JsonObject::new();
            props.insert(id_key.to_string(), JsonValue::from(fp.building_id));
            Feature {
                bbox: None,
                geometry: Some(Geometry::new(Value::Polygon(polygon_rings(&fp.polygon)))),
                id: None,
                properties: Some(props),
                foreign_members: None,
            }
        })
        .collect();
    GeoJson::FeatureCollection(FeatureCollection { bbox: None, features, foreign_members: None }).to_string()
}

pub fn udm_to_geojson(polygons: &[Polygon]) -> String {
    let features = polygons
        .iter()
        .map(|p| Feature {
            bbox: None,
            geometry: Some(Geometry::new(Value::Polygon(polygon_rings(p)))),
            id: None,
            properties: None,
            foreign_members: None,
        })
        .collect();
    GeoJson::FeatureCollection(FeatureCollection { bbox: None, features, foreign_members: None }).to_string()
}

/// Where things live inside an AOI directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AoiLayout {
    pub labels_dir: String,
    pub udm_dir: String,
    pub metadata_file: String,
    /// Regex whose first two capture groups are year and month.
    pub month_pattern: String,
    pub id_key: String,
}

impl Default for AoiLayout {
    fn default() -> Self {
        Self {
            labels_dir: "labels".into(),
            udm_dir: "udm".into(),
            metadata_file: "metadata.json".into(),
            month_pattern: DEFAULT_MONTH_PATTERN.into(),
            id_key: DEFAULT_ID_KEY.into(),
        }
    }
}

impl AoiLayout {
    pub fn validate(&self) -> Result<()> {
        let re = Regex::new(&self.month_pattern)
            .map_err(|e| Error::InvalidParameter(format!("month pattern: {e}")))?;
        if re.captures_len() < 3 {
            return Err(Error::InvalidParameter("month pattern needs year and month capture groups".into()));
        }
        if self.labels_dir.is_empty() || self.id_key.is_empty() {
            return Err(Error::InvalidParameter("labels_dir and id_key must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LoadedAoi {
    pub series: FootprintSeries,
    /// One mask per frame, possibly empty.
    pub udms: Vec<UdmMask>,
    /// File stem of each frame's label file.
    pub stems: Vec<String>,
    pub warnings: Vec<String>,
}

impl LoadedAoi {
    pub fn metadata(&self) -> &AoiMetadata {
        &self.series.metadata
    }
}

fn month_key(re: &Regex, name: &str) -> Option<i64> {
    let caps = re.captures(name)?;
    let year: i64 = caps.get(1)?.as_str().parse().ok()?;
    let month: i64 = caps.get(2)?.as_str().parse().ok()?;
    Some(year * 12 + month - 1)
}

fn geojson_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(Error::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "geojson" || e == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(Error::io(path))
}

/// Loads one AOI directory.
pub fn load_aoi(dir: &Path, layout: &AoiLayout) -> Result<LoadedAoi> {
    let re = Regex::new(&layout.month_pattern)
        .map_err(|e| Error::InvalidParameter(format!("month pattern: {e}")))?;
    let label_files = geojson_files(&dir.join(&layout.labels_dir))?;
    if label_files.is_empty() {
        return Err(Error::NoLabels(dir.join(&layout.labels_dir)));
    }
    let aoi_id = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "aoi".to_string());
    let mut warnings = Vec::new();

    let stems: Vec<String> = label_files
        .iter()
        .map(|p| p.file_stem().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    let keys: Vec<Option<i64>> = stems.iter().map(|s| month_key(&re, s)).collect();
    for (i, w) in keys.windows(2).enumerate() {
        match (w[0], w[1]) {
            (Some(a), Some(b)) if b != a + 1 => warnings.push(format!(
                "non-contiguous months between {} and {}; frames re-indexed densely",
                stems[i],
                stems[i + 1]
            )),
            _ => {}
        }
    }
    if keys.iter().any(Option::is_none) {
        warnings.push("some label files carry no YYYY_MM month key; ordered by file name".into());
    }

    let mut frames = Vec::with_capacity(label_files.len());
    for (t, path) in label_files.iter().enumerate() {
        let text = read_to_string(path)?;
        let fps = parse_footprints(&text, &layout.id_key, t).map_err(|e| match e {
            Error::Io { .. } | Error::Json { .. } => e,
            other => Error::GeoJson(format!("{}: {other}", path.display())),
        })?;
        frames.push(fps);
    }

    let udm_files = geojson_files(&dir.join(&layout.udm_dir))?;
    let mut udms: Vec<UdmMask> = (0..frames.len()).map(|frame| UdmMask { frame, obscured: vec![] }).collect();
    for path in udm_files {
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let target = match month_key(&re, &stem) {
            Some(k) => keys.iter().position(|key| *key == Some(k)),
            None => stems.iter().position(|s| *s == stem),
        };
        match target {
            Some(t) => {
                let text = read_to_string(&path)?;
                udms[t].obscured.extend(
                    parse_udm(&text).map_err(|e| Error::GeoJson(format!("{}: {e}", path.display())))?,
                );
            }
            None => warnings.push(format!("UDM file {} matches no label frame", path.display())),
        }
    }

    let meta_path = dir.join(&layout.metadata_file);
    let metadata = if meta_path.is_file() {
        let text = read_to_string(&meta_path)?;
        serde_json::from_str::<AoiMetadata>(&text).map_err(Error::json(&meta_path))?
    } else {
        warnings.push(format!("no {} found; using default metadata", layout.metadata_file));
        AoiMetadata::default()
    };
    metadata.validate()?;

    let series = FootprintSeries::from_frames(aoi_id, frames, metadata)?;
    Ok(LoadedAoi { series, udms, stems, warnings })
}

/// Loads every AOI subdirectory of `root` (directories that contain the
/// labels folder), sorted by name.
pub fn load_aoi_set(root: &Path, layout: &AoiLayout) -> Result<Vec<LoadedAoi>> {
    aoi_dirs(root, layout)?.iter().map(|d| load_aoi(d, layout)).collect()
}

pub fn aoi_dirs(root: &Path, layout: &AoiLayout) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(Error::io(root))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(&layout.labels_dir).is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Default frame stem for month `t` of a series starting at `start`
/// (`YYYY_MM`).
pub fn month_stem(start: &str, t: usize, aoi_id: &str) -> String {
    let (y, m) = start
        .split_once('_')
        .and_then(|(y, m)| Some((y.parse::<i64>().ok()?, m.parse::<i64>().ok()?)))
        .unwrap_or((2018, 1));
    let k = y * 12 + (m - 1) + t as i64;
    format!("global_monthly_{:04}_{:02}_mosaic_{}", k / 12, k % 12 + 1, aoi_id)
}

/// Writes a series (and optional UDMs) in the AOI layout under `dir`.
pub fn write_aoi(
    dir: &Path,
    series: &FootprintSeries,
    udms: &[UdmMask],
    stems: &[String],
    layout: &AoiLayout,
) -> Result<()> {
    if stems.len() != series.frame_count() {
        return Err(Error::InvalidParameter(format!(
            "{} stems for {} frames",
            stems.len(),
            series.frame_count()
        )));
    }
    let labels = dir.join(&layout.labels_dir);
    fs::create_dir_all(&labels).map_err(Error::io(&labels))?;
    for (t, stem) in stems.iter().enumerate() {
        let path = labels.join(format!("{stem}.geojson"));
        fs::write(&path, footprints_to_geojson(series.frame(t), &layout.id_key)).map_err(Error::io(&path))?;
    }
    if udms.iter().any(|u| !u.obscured.is_empty()) {
        let udm_dir = dir.join(&layout.udm_dir);
        fs::create_dir_all(&udm_dir).map_err(Error::io(&udm_dir))?;
        for u in udms {
            let path = udm_dir.join(format!("{}.geojson", stems[u.frame]));
            fs::write(&path, udm_to_geojson(&u.obscured)).map_err(Error::io(&path))?;
        }
    }
    let meta_path = dir.join(&layout.metadata_file);
    let text = serde_json::to_string_pretty(&series.metadata).map_err(Error::json(&meta_path))?;
    fs::write(&meta_path, text).map_err(Error::io(&meta_path))?;
    Ok(())
}

/// Drops, frame by frame, footprints whose area under that frame's UDM
/// polygons exceeds `occlusion_frac` of their own area. UDM polygons of one
/// frame are assumed pairwise disjoint.
pub fn apply_udm(series: &FootprintSeries, udms: &[UdmMask], occlusion_frac: f64) -> FootprintSeries {
    let mut by_frame: Vec<Vec<&Polygon>> = vec![Vec::new(); series.frame_count()];
    for u in udms {
        if u.frame < by_frame.len() {
            by_frame[u.frame].extend(u.obscured.iter());
        }
    }
    let frames = series
        .frames()
        .iter()
        .zip(&by_frame)
        .map(|(fps, clouds)| {
            fps.iter()
                .filter(|fp| {
                    if clouds.is_empty() {
                        return true;
                    }
                    let covered: f64 = clouds.iter().map(|c| intersection_area(&fp.polygon, c)).sum();
                    covered.min(fp.area()) <= occlusion_frac * fp.area()
                })
                .cloned()
                .collect()
        })
        .collect();
    FootprintSeries { aoi_id: series.aoi_id.clone(), frames, metadata: series.metadata.clone() }
}
