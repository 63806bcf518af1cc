use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{rasterize_polygon, Raster, Transform};
use crate::error::{Error, Result};
use crate::geometry::Polygon;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FbcParams {
    /// Footprint pixels within this distance (px, center to center) of a
    /// pixel outside the same footprint are boundary.
    pub boundary_px: f64,
    /// Pixels within this distance of two or more distinct footprints are
    /// contact.
    pub contact_px: f64,
}

impl Default for FbcParams {
    fn default() -> Self {
        Self { boundary_px: 1.0, contact_px: 2.0 }
    }
}

impl FbcParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.boundary_px >= 1.0 && self.contact_px >= 1.0) {
            return Err(Error::InvalidParameter("boundary_px and contact_px must be >= 1".into()));
        }
        Ok(())
    }
}

/// Footprint / boundary / contact channels, each 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FbcMask {
    pub width: usize,
    pub height: usize,
    pub footprint: Vec<u8>,
    pub boundary: Vec<u8>,
    pub contact: Vec<u8>,
}

fn disk(radius: f64) -> Vec<(isize, isize)> {
    let r = radius.floor() as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if ((dx * dx + dy * dy) as f64) <= radius * radius {
                out.push((dx, dy));
            }
        }
    }
    out
}

pub fn fbc_masks(
    polys: &[Polygon],
    width: usize,
    height: usize,
    transform: &Transform,
    params: &FbcParams,
) -> Result<FbcMask> {
    params.validate()?;
    let n = width * height;
    let mut footprint = vec![0u8; n];
    let mut boundary = vec![0u8; n];
    let mut contact_count = vec![0u8; n];
    let mut stamp = vec![u32::MAX; n];
    let mut member = vec![u32::MAX; n];
    let bdisk = disk(params.boundary_px);
    let cdisk = disk(params.contact_px);
    let (w, h) = (width as isize, height as isize);
    for (k, poly) in polys.iter().enumerate() {
        let k = k as u32;
        let px = rasterize_polygon(poly, width, height, transform);
        for &i in &px {
            footprint[i] = 1;
            member[i] = k;
        }
        for &i in &px {
            let (x, y) = ((i % width) as isize, (i / width) as isize);
            let near_outside = bdisk.iter().any(|&(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                nx < 0 || ny < 0 || nx >= w || ny >= h || member[(ny * w + nx) as usize] != k
            });
            if near_outside {
                boundary[i] = 1;
            }
            for &(dx, dy) in &cdisk {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let j = (ny * w + nx) as usize;
                if stamp[j] != k {
                    stamp[j] = k;
                    contact_count[j] = contact_count[j].saturating_add(1);
                }
            }
        }
        // Ownership is per polygon; clear so overlaps do not leak.
        for &i in &px {
            member[i] = u32::MAX;
        }
    }
    let contact = contact_count.iter().map(|&c| u8::from(c >= 2)).collect();
    Ok(FbcMask { width, height, footprint, boundary, contact })
}

impl FbcMask {
    pub fn channels(&self) -> [&[u8]; 3] {
        [&self.footprint, &self.boundary, &self.contact]
    }

    pub fn as_rasters(&self) -> [Raster<u8>; 3] {
        self.channels().map(|c| Raster { width: self.width, height: self.height, data: c.to_vec() })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FbcHeader {
    format: String,
    width: usize,
    height: usize,
    channels: Vec<String>,
    on_value: u8,
    data: String,
}

const FBC_FORMAT: &str = "scot-fbc/1";

/// Writes `<stem>.bin` (three planes of u8, 0 or 255, channel-major) and
/// `<stem>.json`.
pub fn write_fbc(dir: &Path, stem: &str, mask: &FbcMask) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut bytes = Vec::with_capacity(3 * mask.footprint.len());
    for c in mask.channels() {
        bytes.extend(c.iter().map(|&v| if v != 0 { 255u8 } else { 0 }));
    }
    let bin = dir.join(format!("{stem}.bin"));
    fs::write(&bin, bytes).map_err(Error::io(&bin))?;
    let header = FbcHeader {
        format: FBC_FORMAT.into(),
        width: mask.width,
        height: mask.height,
        channels: vec!["footprint".into(), "boundary".into(), "contact".into()],
        on_value: 255,
        data: format!("{stem}.bin"),
    };
    let json = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&header).map_err(Error::json(&json))?;
    fs::write(&json, text + "\n").map_err(Error::io(&json))
}

pub fn read_fbc(header_path: &Path) -> Result<FbcMask> {
    let text = fs::read_to_string(header_path).map_err(Error::io(header_path))?;
    let header: FbcHeader = serde_json::from_str(&text).map_err(Error::json(header_path))?;
    if header.format != FBC_FORMAT {
        return Err(Error::Cube(format!("unknown mask format {:?}", header.format)));
    }
    let bin = header_path.parent().unwrap_or(Path::new(".")).join(&header.data);
    let bytes = fs::read(&bin).map_err(Error::io(&bin))?;
    let n = header.width * header.height;
    if bytes.len() != 3 * n {
        return Err(Error::Cube(format!("{} holds {} bytes, expected {}", bin.display(), bytes.len(), 3 * n)));
    }
    let plane = |k: usize| bytes[k * n..(k + 1) * n].iter().map(|&v| u8::from(v != 0)).collect();
    Ok(FbcMask { width: header.width, height: header.height, footprint: plane(0), boundary: plane(1), contact: plane(2) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(mask: &[u8], w: usize) -> Vec<String> {
        mask.chunks(w).map(|r| r.iter().map(|&v| if v == 1 { '#' } else { '.' }).collect()).collect()
    }

    #[test]
    fn single_square_boundary_ring() {
        let p = Polygon::rect(1.0, 1.0, 6.0, 6.0).unwrap();
        let m = fbc_masks(&[p], 7, 7, &Transform::IDENTITY, &FbcParams { boundary_px: 1.0, contact_px: 2.0 }).unwrap();
        assert_eq!(m.footprint.iter().filter(|&&v| v == 1).count(), 25);
        assert_eq!(m.boundary.iter().filter(|&&v| v == 1).count(), 16);
        assert!(m.contact.iter().all(|&v| v == 0));
        assert!(m.boundary.iter().zip(&m.footprint).all(|(b, f)| b <= f));
    }

    #[test]
    fn contact_between_neighbors() {
        // Two squares with a one-pixel gap at column 4.
        let a = Polygon::rect(1.0, 1.0, 4.0, 4.0).unwrap();
        let b = Polygon::rect(5.0, 1.0, 8.0, 4.0).unwrap();
        let m = fbc_masks(&[a, b], 9, 5, &Transform::IDENTITY, &FbcParams { boundary_px: 1.0, contact_px: 2.0 }).unwrap();
        let g = grid(&m.contact, 9);
        assert_eq!(g, vec!["....#....", "...###...", "...###...", "...###...", "....#...."]);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = fbc_masks(&[Polygon::rect(0.0, 0.0, 2.0, 3.0).unwrap()], 4, 4, &Transform::IDENTITY, &FbcParams::default()).unwrap();
        write_fbc(dir.path(), "m", &m).unwrap();
        assert_eq!(read_fbc(&dir.path().join("m.json")).unwrap(), m);
    }
}
