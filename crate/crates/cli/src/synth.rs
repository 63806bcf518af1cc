use std::path::Path;

use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::Serialize;

use scot_core::ingest::UdmMask;
use scot_core::rng::{stream, substream, StreamRng};
use scot_core::synth::{generate_dataset, perturb_proposals, write_synth_aoi, DatasetConfig, PerturbConfig, PerturbLog};
use scot_core::ingest::write_aoi;

use crate::config::RunConfig;
use crate::output::write_json;

#[derive(Serialize)]
struct SynthAoiEntry {
    aoi_id: String,
    seed: u64,
    latitude: f64,
    gsd: f64,
    buildings: usize,
    new_buildings: usize,
}

#[derive(Serialize)]
struct SynthManifest<'a> {
    command: &'static str,
    synth: &'a DatasetConfig,
    perturb: Option<&'a PerturbConfig>,
    aois: Vec<SynthAoiEntry>,
}

/// Seed of the perturbation applied to AOI `i`.
pub fn perturb_seed(dataset_seed: u64, i: usize) -> u64 {
    StreamRng::new(dataset_seed, substream(stream::PERTURB, 1_000_000 + i)).next_u64()
}

pub fn run(cfg: &RunConfig, out: &Path, proposals_out: Option<&Path>) -> Result<()> {
    let perturb = match (proposals_out, &cfg.perturb) {
        (Some(_), None) => bail!("--proposals-out needs a `perturb` group in the config"),
        (Some(p), Some(c)) => Some((p, c)),
        (None, _) => None,
    };
    let aois = generate_dataset(&cfg.synth)?;
    aois.par_iter().try_for_each(|a| write_synth_aoi(&out.join(a.aoi_id()), a, &cfg.layout))?;

    if let Some((dir, pcfg)) = perturb {
        let logs = aois
            .par_iter()
            .enumerate()
            .map(|(i, a)| -> Result<(String, PerturbLog)> {
                let (props, log) = perturb_proposals(&a.scene.series, pcfg, perturb_seed(cfg.synth.seed, i))?;
                let udms: Vec<UdmMask> = (0..props.frame_count()).map(|frame| UdmMask { frame, obscured: vec![] }).collect();
                write_aoi(&dir.join(a.aoi_id()), &props, &udms, &a.stems, &cfg.layout)?;
                Ok((a.aoi_id().to_string(), log))
            })
            .collect::<Result<Vec<_>>>()?;
        for (id, log) in &logs {
            write_json(&dir.join(id).join("perturb_log.json"), log)?;
        }
    }

    let entries: Vec<SynthAoiEntry> = cfg
        .synth
        .scene_configs()?
        .into_iter()
        .zip(&aois)
        .map(|((id, sc), a)| SynthAoiEntry {
            aoi_id: id,
            seed: sc.seed,
            latitude: sc.latitude,
            gsd: a.scene.series.metadata.gsd,
            buildings: a.scene.origins.len(),
            new_buildings: a.scene.origins.values().filter(|&&o| o > 0).count(),
        })
        .collect();
    for e in &entries {
        println!("{}: {} buildings ({} new), latitude {:.3}", e.aoi_id, e.buildings, e.new_buildings, e.latitude);
    }
    write_json(
        &out.join("synth_manifest.json"),
        &SynthManifest { command: "synth", synth: &cfg.synth, perturb: cfg.perturb.as_ref(), aois: entries },
    )
}
