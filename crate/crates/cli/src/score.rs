use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use scot_core::ingest::{load_aoi, LoadedAoi};
use scot_core::scot::{score_dataset, AoiPair, DatasetScore, ScoreConfig};

use crate::config::RunConfig;
use crate::output::{aoi_inputs, write_json, write_text};

#[derive(Serialize)]
struct ScoreManifest<'a> {
    command: &'static str,
    gt: String,
    proposals: String,
    model: Option<&'a str>,
    score: &'a ScoreConfig,
    layout: &'a scot_core::ingest::AoiLayout,
    aois: Vec<&'a str>,
}

pub fn load_set(dir: &Path, cfg: &RunConfig) -> Result<Vec<LoadedAoi>> {
    use rayon::prelude::*;
    let dirs = aoi_inputs(dir, &cfg.layout, &cfg.layout.labels_dir)?;
    let loaded = dirs
        .par_iter()
        .map(|d| load_aoi(d, &cfg.layout).with_context(|| format!("loading {}", d.display())))
        .collect::<Result<Vec<_>>>()?;
    for a in &loaded {
        for w in &a.warnings {
            eprintln!("warning: {}: {w}", a.series.aoi_id);
        }
    }
    Ok(loaded)
}

/// Pairs ground truth with proposals by AOI id. Any AOI present on only
/// one side is an error naming it.
pub fn pair_sets(gt: Vec<LoadedAoi>, props: Vec<LoadedAoi>) -> Result<Vec<AoiPair>> {
    if gt.is_empty() {
        bail!("no ground-truth AOIs found");
    }
    let gt_ids: BTreeSet<String> = gt.iter().map(|a| a.series.aoi_id.clone()).collect();
    let prop_ids: BTreeSet<String> = props.iter().map(|a| a.series.aoi_id.clone()).collect();
    let missing: Vec<&String> = gt_ids.difference(&prop_ids).collect();
    let extra: Vec<&String> = prop_ids.difference(&gt_ids).collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut msg = String::from("AOI mismatch:");
        if !missing.is_empty() {
            msg.push_str(&format!(" missing proposals for {missing:?}"));
        }
        if !extra.is_empty() {
            msg.push_str(&format!(" proposals without ground truth {extra:?}"));
        }
        bail!(msg);
    }
    let mut props = props;
    props.sort_by(|a, b| a.series.aoi_id.cmp(&b.series.aoi_id));
    let mut gt = gt;
    gt.sort_by(|a, b| a.series.aoi_id.cmp(&b.series.aoi_id));
    gt.into_iter()
        .zip(props)
        .map(|(g, p)| {
            if g.series.frame_count() != p.series.frame_count() {
                bail!(
                    "AOI {}: {} ground-truth frames but {} proposal frames",
                    g.series.aoi_id,
                    g.series.frame_count(),
                    p.series.frame_count()
                );
            }
            Ok(AoiPair { gt: g.series, props: p.series, udms: g.udms })
        })
        .collect()
}

pub fn score_dirs(cfg: &RunConfig, gt: &Path, proposals: &Path) -> Result<DatasetScore> {
    let pairs = pair_sets(load_set(gt, cfg)?, load_set(proposals, cfg)?)?;
    Ok(score_dataset(&pairs, &cfg.score)?)
}

pub fn run(cfg: &RunConfig, gt: &Path, proposals: &Path, out: &Path, model: Option<String>) -> Result<()> {
    let mut scored = score_dirs(cfg, gt, proposals)?;
    scored.report.model = model.clone();
    let report = &scored.report;
    write_text(&out.join("report.json"), &report.to_json())?;
    write_text(&out.join("report.csv"), &report.to_csv())?;
    write_json(
        &out.join("score_manifest.json"),
        &ScoreManifest {
            command: "score",
            gt: gt.display().to_string(),
            proposals: proposals.display().to_string(),
            model: model.as_deref(),
            score: &cfg.score,
            layout: &cfg.layout,
            aois: report.aois.iter().map(|r| r.aoi_id.as_str()).collect(),
        },
    )?;
    let m = &report.aggregate.mean;
    println!(
        "aggregate over {} AOIs: track_f1={:.6} change_f1={:.6} scot={:.6}",
        report.aggregate.aois, m.track_f1, m.change_f1, m.scot
    );
    Ok(())
}
