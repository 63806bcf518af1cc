//! On-disk probability cubes: a JSON header next to a flat little-endian
//! `f32` file in `(t, y, x)` order. Validity is not stored; it is rebuilt
//! from per-frame UDM GeoJSON files (pixel centers inside an obscured
//! polygon are invalid).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{rasterize_polygon, ProbabilityCube, Transform};
use crate::error::{Error, Result};
use crate::ingest::parse_udm;

pub const CUBE_FORMAT: &str = "scot-cube/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeHeader {
    pub format: String,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    #[serde(default)]
    pub transform: Transform,
    /// Data file, relative to the header.
    pub data: String,
    /// UDM directory relative to the header, holding `<stem>.geojson`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub udm_dir: Option<String>,
    #[serde(default)]
    pub frame_stems: Vec<String>,
}

impl CubeHeader {
    pub fn for_cube(cube: &ProbabilityCube, data: &str, udm_dir: Option<&str>, frame_stems: Vec<String>) -> Self {
        Self {
            format: CUBE_FORMAT.into(),
            frames: cube.frames,
            height: cube.height,
            width: cube.width,
            transform: cube.transform,
            data: data.into(),
            udm_dir: udm_dir.map(str::to_string),
            frame_stems,
        }
    }
}

/// Writes the header to `header_path` and the values next to it.
pub fn write_cube(header_path: &Path, cube: &ProbabilityCube, header: &CubeHeader) -> Result<()> {
    let dir = header_path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let bin = dir.join(&header.data);
    let mut bytes = Vec::with_capacity(cube.values().len() * 4);
    for v in cube.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&bin, bytes).map_err(Error::io(&bin))?;
    let text = serde_json::to_string_pretty(header).map_err(Error::json(header_path))?;
    fs::write(header_path, text + "\n").map_err(Error::io(header_path))
}

pub fn read_cube(header_path: &Path) -> Result<(ProbabilityCube, CubeHeader)> {
    let text = fs::read_to_string(header_path).map_err(Error::io(header_path))?;
    let header: CubeHeader = serde_json::from_str(&text).map_err(Error::json(header_path))?;
    if header.format != CUBE_FORMAT {
        return Err(Error::Cube(format!("unknown cube format {:?}", header.format)));
    }
    if !header.frame_stems.is_empty() && header.frame_stems.len() != header.frames {
        return Err(Error::Cube(format!("{} frame stems for {} frames", header.frame_stems.len(), header.frames)));
    }
    let dir = header_path.parent().unwrap_or(Path::new("."));
    let bin = dir.join(&header.data);
    let bytes = fs::read(&bin).map_err(Error::io(&bin))?;
    let n = header.frames * header.height * header.width;
    if bytes.len() != n * 4 {
        return Err(Error::Cube(format!(
            "{} holds {} bytes, expected {} for {}x{}x{} f32",
            bin.display(),
            bytes.len(),
            n * 4,
            header.frames,
            header.height,
            header.width
        )));
    }
    let values: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();

    let plane = header.height * header.width;
    let mut valid = vec![true; n];
    if let Some(udm_dir) = &header.udm_dir {
        let udm_dir = dir.join(udm_dir);
        for (t, stem) in header.frame_stems.iter().enumerate() {
            let path = udm_dir.join(format!("{stem}.geojson"));
            if !path.is_file() {
                continue;
            }
            let doc = fs::read_to_string(&path).map_err(Error::io(&path))?;
            let polys = parse_udm(&doc).map_err(|e| Error::GeoJson(format!("{}: {e}", path.display())))?;
            for p in &polys {
                for i in rasterize_polygon(p, header.width, header.height, &header.transform) {
                    valid[t * plane + i] = false;
                }
            }
        }
    }
    let cube = ProbabilityCube::new(header.frames, header.height, header.width, values, Some(valid), header.transform)?;
    Ok((cube, header))
}
