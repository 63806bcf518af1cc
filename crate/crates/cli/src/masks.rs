use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use scot_core::geometry::Polygon;
use scot_core::ingest::load_aoi;
use scot_core::raster::{fbc_masks, write_fbc, CubeHeader, FbcParams, Transform};
use scot_core::synth::CUBE_HEADER_FILE;

use crate::config::RunConfig;
use crate::output::{aoi_inputs, write_json};

#[derive(Serialize)]
struct MaskedAoi {
    aoi_id: String,
    width: usize,
    height: usize,
    frames: usize,
    size_source: &'static str,
}

#[derive(Serialize)]
struct MasksManifest<'a> {
    command: &'static str,
    labels: String,
    masks: &'a FbcParams,
    aois: Vec<MaskedAoi>,
}

/// Raster size and transform for an AOI: its cube header when present,
/// else the flags, else the footprint extent in pixel units.
fn grid_for(dir: &Path, size: Option<(usize, usize)>, polys: &[&Polygon]) -> Result<(usize, usize, Transform, &'static str)> {
    let header_path = dir.join(CUBE_HEADER_FILE);
    if header_path.is_file() {
        let text = std::fs::read_to_string(&header_path)?;
        let h: CubeHeader = serde_json::from_str(&text).with_context(|| format!("parsing {}", header_path.display()))?;
        return Ok((h.width, h.height, h.transform, "cube"));
    }
    if let Some((w, h)) = size {
        return Ok((w, h, Transform::default(), "flags"));
    }
    let (mut w, mut h) = (1usize, 1usize);
    for p in polys {
        let b = p.bbox();
        if b.min_x < 0.0 || b.min_y < 0.0 {
            bail!("footprints with negative pixel coordinates need --width/--height or a cube header");
        }
        w = w.max(b.max_x.ceil() as usize);
        h = h.max(b.max_y.ceil() as usize);
    }
    Ok((w, h, Transform::default(), "extent"))
}

pub fn run(cfg: &RunConfig, labels: &Path, out: &Path, size: Option<(usize, usize)>) -> Result<()> {
    let dirs = aoi_inputs(labels, &cfg.layout, &cfg.layout.labels_dir)?;
    if dirs.is_empty() {
        bail!("no AOIs found under {}", labels.display());
    }
    let aois = dirs
        .par_iter()
        .map(|dir| -> Result<MaskedAoi> {
            let aoi = load_aoi(dir, &cfg.layout).with_context(|| format!("loading {}", dir.display()))?;
            let all: Vec<&Polygon> = aoi.series.footprints().map(|f| &f.polygon).collect();
            let (width, height, transform, size_source) = grid_for(dir, size, &all)?;
            let target = out.join(&aoi.series.aoi_id);
            for (t, frame) in aoi.series.frames().iter().enumerate() {
                let polys: Vec<Polygon> = frame.iter().map(|f| f.polygon.clone()).collect();
                let mask = fbc_masks(&polys, width, height, &transform, &cfg.masks)?;
                write_fbc(&target, &aoi.stems[t], &mask)?;
            }
            Ok(MaskedAoi { aoi_id: aoi.series.aoi_id.clone(), width, height, frames: aoi.series.frame_count(), size_source })
        })
        .collect::<Result<Vec<_>>>()?;
    for a in &aois {
        println!("{}: {} masks of {}x{}", a.aoi_id, a.frames, a.width, a.height);
    }
    write_json(
        &out.join("masks_manifest.json"),
        &MasksManifest { command: "masks", labels: labels.display().to_string(), masks: &cfg.masks, aois },
    )
}
