//! Probability rasters: upsampling, temporal collapse, instance extraction
//! and conversion between pixels and polygons.

mod components;
mod cube_io;
mod fbc;
mod polygonize;
mod watershed;

pub use components::{connected_components, Connectivity};
pub use cube_io::{read_cube, write_cube, CubeHeader, CUBE_FORMAT};
pub use fbc::{fbc_masks, read_fbc, write_fbc, FbcMask, FbcParams};
pub use polygonize::{polygonize, rasterize_polygon, rasterize_polygons};
pub use watershed::{gaussian_smooth, watershed_instances, WatershedParams};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Row-major 2-D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }
}

impl<T: Copy> Raster<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "raster data has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }
}

pub type ProbMap = Raster<f32>;

/// Instance labels: 0 is background, instances are `1..=count`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRaster {
    pub labels: Raster<u32>,
    pub count: u32,
}

impl LabelRaster {
    pub fn width(&self) -> usize {
        self.labels.width
    }

    pub fn height(&self) -> usize {
        self.labels.height
    }

    /// Pixel count per label, index 0 is background.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0usize; self.count as usize + 1];
        for &l in &self.labels.data {
            s[l as usize] += 1;
        }
        s
    }

    /// Relabels so that labels are contiguous and ordered by their first
    /// pixel in row-major order. Labels mapped to 0 by `keep` are dropped.
    pub(crate) fn canonicalize(mut labels: Raster<u32>, keep: impl Fn(u32) -> bool) -> LabelRaster {
        let mut map: std::collections::HashMap<u32, u32> = std::collections::HashMap::new();
        let mut next = 0u32;
        for l in labels.data.iter_mut() {
            if *l == 0 {
                continue;
            }
            if !keep(*l) {
                *l = 0;
                continue;
            }
            *l = *map.entry(*l).or_insert_with(|| {
                next += 1;
                next
            });
        }
        LabelRaster { labels, count: next }
    }
}

/// Affine pixel → world mapping without rotation:
/// `x = origin_x + col · pixel_width`, `y = origin_y + row · pixel_height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_width: f64,
    pub pixel_height: f64,
}

impl Default for Transform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Transform {
    pub const IDENTITY: Transform = Transform { origin_x: 0.0, origin_y: 0.0, pixel_width: 1.0, pixel_height: 1.0 };

    pub fn to_world(&self, col: f64, row: f64) -> Point {
        Point::new(self.origin_x + col * self.pixel_width, self.origin_y + row * self.pixel_height)
    }

    pub fn to_pixel(&self, p: Point) -> (f64, f64) {
        ((p.x - self.origin_x) / self.pixel_width, (p.y - self.origin_y) / self.pixel_height)
    }

    /// The transform of the same area sampled `factor` times finer.
    pub fn upsampled(&self, factor: usize) -> Transform {
        Transform {
            pixel_width: self.pixel_width / factor as f64,
            pixel_height: self.pixel_height / factor as f64,
            ..*self
        }
    }

    pub fn pixel_area(&self) -> f64 {
        (self.pixel_width * self.pixel_height).abs()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.origin_x, self.origin_y, self.pixel_width, self.pixel_height].iter().all(|v| v.is_finite())
            && self.pixel_width != 0.0
            && self.pixel_height != 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("degenerate transform {self:?}")))
        }
    }
}

/// `T × H × W` probabilities with per-pixel validity (false under clouds).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityCube {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    values: Vec<f32>,
    valid: Vec<bool>,
    pub transform: Transform,
}

impl ProbabilityCube {
    pub fn new(
        frames: usize,
        height: usize,
        width: usize,
        values: Vec<f32>,
        valid: Option<Vec<bool>>,
        transform: Transform,
    ) -> Result<Self> {
        let n = frames * height * width;
        if values.len() != n {
            return Err(Error::Cube(format!("{} values for {}x{}x{}", values.len(), frames, height, width)));
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Cube(format!("value {} at index {} outside [0, 1]", values[i], i)));
        }
        let valid = valid.unwrap_or_else(|| vec![true; n]);
        if valid.len() != n {
            return Err(Error::Cube(format!("validity mask has {} entries, expected {}", valid.len(), n)));
        }
        transform.validate()?;
        Ok(Self { frames, height, width, values, valid, transform })
    }

    pub fn zeros(frames: usize, height: usize, width: usize) -> Self {
        let n = frames * height * width;
        Self { frames, height, width, values: vec![0.0; n], valid: vec![true; n], transform: Transform::IDENTITY }
    }

    fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.values[t * self.plane()..(t + 1) * self.plane()]
    }

    pub fn frame_valid(&self, t: usize) -> &[bool] {
        &self.valid[t * self.plane()..(t + 1) * self.plane()]
    }

    pub fn frame_map(&self, t: usize) -> ProbMap {
        Raster { width: self.width, height: self.height, data: self.frame(t).to_vec() }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn value(&self, t: usize, y: usize, x: usize) -> f32 {
        self.values[(t * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, t: usize, y: usize, x: usize) -> bool {
        self.valid[(t * self.height + y) * self.width + x]
    }

    /// Sample frame `t` at pixel `(x, y)` of a grid `factor` times finer.
    #[inline]
    pub fn sample(&self, t: usize, x: usize, y: usize, factor: usize, mode: Resample) -> f32 {
        sample_plane(self.frame(t), self.width, self.height, x, y, factor, mode)
    }

    /// Validity at a finer grid pixel (always nearest).
    #[inline]
    pub fn sample_valid(&self, t: usize, x: usize, y: usize, factor: usize) -> bool {
        self.is_valid(t, y / factor, x / factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Resample {
    #[default]
    Nearest,
    Bilinear,
}

#[inline]
fn sample_plane(plane: &[f32], w: usize, h: usize, x: usize, y: usize, factor: usize, mode: Resample) -> f32 {
    match mode {
        Resample::Nearest => plane[(y / factor) * w + x / factor],
        Resample::Bilinear => {
            let f = factor as f64;
            let u = ((x as f64 + 0.5) / f - 0.5).clamp(0.0, (w - 1) as f64);
            let v = ((y as f64 + 0.5) / f - 0.5).clamp(0.0, (h - 1) as f64);
            let (x0, y0) = (u.floor() as usize, v.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (u - x0 as f64, v - y0 as f64);
            let at = |xx: usize, yy: usize| plane[yy * w + xx] as f64;
            let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
            let bot = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
            (top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0) as f32
        }
    }
}

/// Upsamples by an integer factor. Bilinear samples at pixel centers with
/// edge clamping.
pub fn upsample(image: &ProbMap, factor: usize, mode: Resample) -> Result<ProbMap> {
    if factor < 1 {
        return Err(Error::InvalidParameter("upsample factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(image.clone());
    }
    let (w, h) = (image.width * factor, image.height * factor);
    let mut data = vec![0f32; w * h];
    data.par_chunks_mut(w.max(1)).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            *out = sample_plane(&image.data, image.width, image.height, x, y, factor, mode);
        }
    });
    Ok(Raster { width: w, height: h, data })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CollapseOp {
    /// Mean over valid frames.
    #[default]
    Mean,
    /// Max over valid frames.
    Max,
}

/// Collapses the time axis, per pixel, over valid frames. Pixels with no
/// valid frame are 0.
pub fn collapse_time(cube: &ProbabilityCube) -> ProbMap {
    collapse_time_upsampled(cube, 1, Resample::Nearest, CollapseOp::Mean)
}

/// Upsamples each frame by `factor` and collapses time at that scale. The
/// full-size upsampled cube is never materialized.
pub fn collapse_time_upsampled(cube: &ProbabilityCube, factor: usize, mode: Resample, op: CollapseOp) -> ProbMap {
    let factor = factor.max(1);
    let (w, h) = (cube.width * factor, cube.height * factor);
    let mut data = vec![0f32; w * h];
    if cube.frames == 0 || w == 0 {
        return Raster { width: w, height: h, data };
    }
    data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let mut sum = 0f64;
            let mut max = 0f32;
            let mut n = 0u32;
            for t in 0..cube.frames {
                if !cube.sample_valid(t, x, y, factor) {
                    continue;
                }
                let v = cube.sample(t, x, y, factor, mode);
                sum += v as f64;
                max = max.max(v);
                n += 1;
            }
            *out = match (n, op) {
                (0, _) => 0.0,
                (_, CollapseOp::Mean) => (sum / n as f64) as f32,
                (_, CollapseOp::Max) => max,
            };
        }
    });
    Raster { width: w, height: h, data }
}
