use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use scot_core::ingest::{month_stem, write_aoi, AoiMetadata, UdmMask};
use scot_core::raster::read_cube;
use scot_core::synth::CUBE_HEADER_FILE;
use scot_core::trackers::{baseline_track, temporal_collapse_track, OriginEstimate, TrackerParams};

use crate::config::RunConfig;
use crate::output::{aoi_inputs, dir_name, write_json};
use crate::Method;

#[derive(Serialize)]
struct TrackedAoi {
    aoi_id: String,
    frames: usize,
    buildings: usize,
    footprints: usize,
}

#[derive(Serialize)]
struct TrackManifest<'a> {
    command: &'static str,
    method: String,
    input: String,
    tracker: &'a TrackerParams,
    aois: Vec<TrackedAoi>,
}

#[derive(Serialize)]
struct OriginRecord<'a> {
    id: u64,
    pixels: usize,
    #[serde(flatten)]
    estimate: &'a OriginEstimate,
}

fn track_one(cfg: &RunConfig, dir: &Path, method: Method, out: &Path) -> Result<TrackedAoi> {
    let (cube, header) = read_cube(&dir.join(CUBE_HEADER_FILE)).with_context(|| format!("reading cube in {}", dir.display()))?;
    let aoi_id = dir_name(dir);
    let meta_path = dir.join(&cfg.layout.metadata_file);
    let metadata = if meta_path.is_file() {
        let text = std::fs::read_to_string(&meta_path)?;
        serde_json::from_str::<AoiMetadata>(&text).with_context(|| format!("parsing {}", meta_path.display()))?
    } else {
        AoiMetadata::default()
    };
    let stems: Vec<String> = if header.frame_stems.is_empty() {
        (0..cube.frames).map(|t| month_stem("2018_01", t, &aoi_id)).collect()
    } else {
        header.frame_stems.clone()
    };
    let target = out.join(&aoi_id);
    let series = match method {
        Method::Baseline => baseline_track(&cube, &cfg.tracker, &aoi_id, metadata)?,
        Method::Collapse => {
            let output = temporal_collapse_track(&cube, &cfg.tracker, &aoi_id, metadata)?;
            let origins: Vec<OriginRecord> = output
                .buildings
                .iter()
                .map(|b| OriginRecord { id: b.id, pixels: b.pixels, estimate: &b.estimate })
                .collect();
            write_json(&target.join("origins.json"), &origins)?;
            output.series
        }
    };
    let udms: Vec<UdmMask> = (0..series.frame_count()).map(|frame| UdmMask { frame, obscured: vec![] }).collect();
    write_aoi(&target, &series, &udms, &stems, &cfg.layout)?;
    Ok(TrackedAoi {
        aoi_id,
        frames: series.frame_count(),
        buildings: series.building_ids().len(),
        footprints: series.len(),
    })
}

pub fn run(cfg: &RunConfig, input: &Path, method: Method, out: &Path) -> Result<()> {
    let dirs = aoi_inputs(input, &cfg.layout, CUBE_HEADER_FILE)?;
    if dirs.is_empty() {
        bail!("no {} found under {}", CUBE_HEADER_FILE, input.display());
    }
    let aois = dirs.par_iter().map(|d| track_one(cfg, d, method, out)).collect::<Result<Vec<_>>>()?;
    for a in &aois {
        println!("{}: {} buildings, {} footprints over {} frames", a.aoi_id, a.buildings, a.footprints, a.frames);
    }
    write_json(
        &out.join("track_manifest.json"),
        &TrackManifest {
            command: "track",
            method: method.to_string(),
            input: input.display().to_string(),
            tracker: &cfg.tracker,
            aois,
        },
    )
}
