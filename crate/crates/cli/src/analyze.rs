use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use scot_core::analysis::{
    change_vs_track_table, default_area_bins, feature_table, recall_by_area, svg, AreaCurve,
};
use scot_core::scot::{Combiner, DatasetReport};

use crate::config::RunConfig;
use crate::output::{dir_name, write_json, write_text};
use crate::score::score_dirs;

const REPORT_FILE: &str = "report.json";

#[derive(Serialize)]
struct ModelSummary {
    model: String,
    aois: usize,
    gsd_cos_latitude_r: Option<f64>,
    gsd_mismatches: Vec<String>,
}

#[derive(Serialize)]
struct AnalysisSummary {
    models: Vec<ModelSummary>,
    combiner: String,
    area_curve: bool,
    notices: Vec<String>,
}

fn report_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if path.join(REPORT_FILE).is_file() {
        return Ok(vec![path.join(REPORT_FILE)]);
    }
    if !path.is_dir() {
        bail!("{} is neither a report nor a directory", path.display());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path().join(REPORT_FILE)))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

fn model_name(report: &DatasetReport, file: &Path) -> String {
    report.model.clone().unwrap_or_else(|| match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => dir_name(p),
        _ => file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into()),
    })
}

fn file_safe(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

pub fn run(cfg: &RunConfig, inputs: &[PathBuf], out: &Path, area: Option<(&Path, &Path)>, with_svg: bool) -> Result<()> {
    let mut notices = Vec::new();
    let mut models: Vec<(String, DatasetReport)> = Vec::new();
    for input in inputs {
        let files = report_files(input)?;
        if files.is_empty() {
            notices.push(format!("no {REPORT_FILE} under {}; skipped", input.display()));
        }
        for f in files {
            let text = std::fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?;
            let report: DatasetReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", f.display()))?;
            let mut name = model_name(&report, &f);
            if models.iter().any(|(m, _)| *m == name) {
                let renamed = format!("{name}_{}", models.len());
                notices.push(format!("model name {name} repeated; {} renamed to {renamed}", f.display()));
                name = renamed;
            }
            models.push((name, report));
        }
    }
    if models.is_empty() {
        bail!("no reports to analyze");
    }

    let combiner: Combiner = models[0].1.header.combiner.parse()?;
    if models.iter().any(|(_, r)| r.header.combiner != models[0].1.header.combiner) {
        notices.push(format!("reports use different combiners; contour drawn for {combiner}"));
    }

    let mut summaries = Vec::new();
    for (model, report) in &models {
        let table = feature_table(&report.aois);
        let stem = file_safe(model);
        write_text(&out.join(format!("features_{stem}.csv")), &table.to_csv())?;
        if let Some(csv) = table.correlation_csv() {
            write_text(&out.join(format!("correlations_{stem}.csv")), &csv)?;
        }
        notices.extend(table.notices.iter().map(|n| format!("{model}: {n}")));
        if !table.gsd_mismatches.is_empty() {
            notices.push(format!("{model}: gsd departs from 4.8·cos(latitude) for {:?}", table.gsd_mismatches));
        }
        let r = table.correlation("gsd", "cos_latitude");
        match r {
            Some(r) => println!("{model}: pearson(gsd, cos_latitude) = {r}"),
            None => println!("{model}: pearson(gsd, cos_latitude) unavailable"),
        }
        summaries.push(ModelSummary {
            model: model.clone(),
            aois: report.aois.len(),
            gsd_cos_latitude_r: r,
            gsd_mismatches: table.gsd_mismatches.clone(),
        });
    }

    let entries: Vec<(String, _)> =
        models.iter().flat_map(|(m, r)| r.aois.iter().map(move |a| (m.clone(), a.clone()))).collect();
    let cvt = change_vs_track_table(&entries, combiner);
    write_text(&out.join("change_vs_track.csv"), &cvt.to_csv())?;
    write_text(&out.join("scot_contour.csv"), &cvt.contour_csv())?;
    if with_svg {
        let pts: Vec<(f64, f64)> = cvt.rows.iter().map(|r| (r.track_f1, r.change_f1)).collect();
        write_text(&out.join("change_vs_track.svg"), &svg::scatter("Change vs tracking", "track F1", "change F1", &pts))?;
    }

    let area_curve = match area {
        None => {
            notices.push("area recall curve skipped: --gt and --proposals not given".into());
            false
        }
        Some((gt, props)) => {
            let edges = cfg.area_bins_m2.clone().unwrap_or_else(default_area_bins);
            let scored = score_dirs(cfg, gt, props)?;
            let mut curve: Option<AreaCurve> = None;
            for d in &scored.details {
                let c = recall_by_area(&d.gt, &d.tables, &edges)?;
                match &mut curve {
                    None => curve = Some(c),
                    Some(acc) => acc.merge(&c)?,
                }
            }
            let curve = curve.expect("score_dirs yields at least one AOI");
            write_text(&out.join("area_recall.csv"), &curve.to_csv())?;
            if with_svg {
                let pts: Vec<(f64, f64)> = curve
                    .bins
                    .iter()
                    .filter(|b| b.lo_m2 > 0.0 && b.hi_m2.is_finite())
                    .filter_map(|b| b.recall.map(|r| ((b.lo_m2 * b.hi_m2).sqrt(), r)))
                    .collect();
                write_text(&out.join("area_recall.svg"), &svg::line_plot("Recall by area", "area (m²)", "recall", &pts, true))?;
            }
            true
        }
    };

    for n in &notices {
        eprintln!("notice: {n}");
    }
    write_json(
        &out.join("analysis.json"),
        &AnalysisSummary { models: summaries, combiner: combiner.to_string(), area_curve, notices },
    )
}
