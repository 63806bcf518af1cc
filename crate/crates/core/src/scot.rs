//! SCOT scoring: a tracking term, a change-detection term and their
//! combination, per AOI and across a dataset.
//!
//! Tracking: frames are matched in order. The first frame-level match
//! between two ids that are both still unassociated binds them for the rest
//! of the series. Later matches that agree with the binding are true
//! positives; matches that contradict it are penalized (by default as one
//! false positive and one false negative).
//!
//! Change: only buildings first seen after frame 0 count. A new ground-truth
//! building is recovered when a new proposal building overlaps it at first
//! appearance (IoU ≥ threshold) and appears within `tol_frames` of it.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::iou;
use crate::ingest::{apply_udm, FootprintSeries, UdmMask, DEFAULT_OCCLUSION_FRAC};
use crate::matching::{f1, greedy_assign, match_frame, MatchConfig, MatchTable};

pub const REPORT_SCHEMA: &str = "scot-report/1";
pub const EMPTY_CHANGE_NOTE: &str =
    "change_f1 is 0 for scenes with no buildings appearing after frame 0 (tp = fp = fn = 0)";

/// Serialized as `"harmonic"`, `"arithmetic"` or `"weighted:<w>"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(try_from = "String", into = "String")]
pub enum Combiner {
    /// `2ab / (a + b)`.
    #[default]
    Harmonic,
    /// `(a + b) / 2`.
    Arithmetic,
    /// `w·track + (1 − w)·change`.
    Weighted { w: f64 },
}

impl Combiner {
    pub fn combine(&self, track: f64, change: f64) -> f64 {
        match *self {
            Combiner::Harmonic => {
                if track + change == 0.0 {
                    0.0
                } else {
                    2.0 * track * change / (track + change)
                }
            }
            Combiner::Arithmetic => 0.5 * (track + change),
            Combiner::Weighted { w } => w * track + (1.0 - w) * change,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Combiner::Weighted { w } = self {
            if !(0.0..=1.0).contains(w) {
                return Err(Error::InvalidParameter(format!("combiner weight must be in [0, 1], got {w}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Combiner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Combiner::Harmonic => f.write_str("harmonic"),
            Combiner::Arithmetic => f.write_str("arithmetic"),
            Combiner::Weighted { w } => write!(f, "weighted:{w}"),
        }
    }
}

impl TryFrom<String> for Combiner {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Combiner> for String {
    fn from(c: Combiner) -> String {
        c.to_string()
    }
}

impl std::str::FromStr for Combiner {
    type Err = Error;

    /// `harmonic`, `arithmetic` or `weighted:<w>`.
    fn from_str(s: &str) -> Result<Self> {
        let c = match s {
            "harmonic" => Combiner::Harmonic,
            "arithmetic" => Combiner::Arithmetic,
            _ => match s.strip_prefix("weighted:") {
                Some(w) => Combiner::Weighted {
                    w: w.parse().map_err(|_| Error::InvalidParameter(format!("bad combiner weight {w:?}")))?,
                },
                None => return Err(Error::InvalidParameter(format!("unknown combiner {s:?}"))),
            },
        };
        c.validate()?;
        Ok(c)
    }
}

/// `scot_score`: combines the two terms.
pub fn scot_score(track_f1: f64, change_f1: f64, combiner: Combiner) -> f64 {
    combiner.combine(track_f1, change_f1)
}

/// How a match that contradicts an established association is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MismatchPenalty {
    /// One false positive and one false negative.
    #[default]
    FpAndFn,
    /// One false negative only.
    FnOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub matching: MatchConfig,
    pub combiner: Combiner,
    pub tol_frames: usize,
    pub occlusion_frac: f64,
    pub mismatch_penalty: MismatchPenalty,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            matching: MatchConfig::default(),
            combiner: Combiner::Harmonic,
            tol_frames: 0,
            occlusion_frac: DEFAULT_OCCLUSION_FRAC,
            mismatch_penalty: MismatchPenalty::FpAndFn,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        self.matching.validate()?;
        self.combiner.validate()?;
        if !(0.0..=1.0).contains(&self.occlusion_frac) {
            return Err(Error::InvalidParameter(format!(
                "occlusion_frac must be in [0, 1], got {}",
                self.occlusion_frac
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn f1(&self) -> f64 {
        f1(self.tp, self.fp, self.fn_)
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

/// Bijection between proposal and ground-truth ids, with the frame at which
/// each link was made.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Association {
    prop_to_gt: BTreeMap<u64, (u64, usize)>,
    gt_to_prop: BTreeMap<u64, u64>,
}

impl Association {
    pub fn gt_for(&self, prop_id: u64) -> Option<u64> {
        self.prop_to_gt.get(&prop_id).map(|x| x.0)
    }

    pub fn prop_for(&self, gt_id: u64) -> Option<u64> {
        self.gt_to_prop.get(&gt_id).copied()
    }

    pub fn established_frame(&self, prop_id: u64) -> Option<usize> {
        self.prop_to_gt.get(&prop_id).map(|x| x.1)
    }

    pub fn len(&self) -> usize {
        self.prop_to_gt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prop_to_gt.is_empty()
    }

    /// `(prop_id, gt_id, frame)` triples, by prop id.
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64, usize)> + '_ {
        self.prop_to_gt.iter().map(|(p, (g, f))| (*p, *g, *f))
    }

    fn link(&mut self, prop: u64, gt: u64, frame: usize) {
        self.prop_to_gt.insert(prop, (gt, frame));
        self.gt_to_prop.insert(gt, prop);
    }
}

fn check_frames(gt: &FootprintSeries, props: &FootprintSeries) -> Result<()> {
    if gt.frame_count() != props.frame_count() {
        return Err(Error::FrameMismatch { gt: gt.frame_count(), props: props.frame_count() });
    }
    Ok(())
}

/// Matches every frame.
pub fn match_series(gt: &FootprintSeries, props: &FootprintSeries, cfg: &MatchConfig) -> Result<Vec<MatchTable>> {
    check_frames(gt, props)?;
    Ok((0..gt.frame_count()).map(|t| match_frame(t, gt.frame(t), props.frame(t), cfg)).collect())
}

#[derive(Debug, Clone)]
pub struct TrackResult {
    pub f1: f64,
    pub counts: Counts,
    pub association: Association,
}

/// Tracking term from precomputed per-frame match tables.
pub fn track_from_tables(tables: &[MatchTable], penalty: MismatchPenalty) -> TrackResult {
    let mut assoc = Association::default();
    let mut c = Counts::default();
    for table in tables {
        for pair in &table.pairs {
            match (assoc.gt_for(pair.prop_id), assoc.prop_for(pair.gt_id)) {
                (None, None) => {
                    assoc.link(pair.prop_id, pair.gt_id, table.frame);
                    c.tp += 1;
                }
                (Some(g), Some(_)) if g == pair.gt_id => c.tp += 1,
                _ => match penalty {
                    MismatchPenalty::FpAndFn => {
                        c.fp += 1;
                        c.fn_ += 1;
                    }
                    MismatchPenalty::FnOnly => c.fn_ += 1,
                },
            }
        }
        c.fn_ += table.unmatched_gt.len() as u64;
        c.fp += table.unmatched_prop.len() as u64;
    }
    TrackResult { f1: c.f1(), counts: c, association: assoc }
}

pub fn track_score(gt: &FootprintSeries, props: &FootprintSeries, cfg: &MatchConfig) -> Result<TrackResult> {
    let tables = match_series(gt, props, cfg)?;
    Ok(track_from_tables(&tables, MismatchPenalty::default()))
}

/// Frame-level detection counts, ignoring ids.
pub fn detection_from_tables(tables: &[MatchTable]) -> Counts {
    let mut c = Counts::default();
    for t in tables {
        c.tp += t.pairs.len() as u64;
        c.fp += t.unmatched_prop.len() as u64;
        c.fn_ += t.unmatched_gt.len() as u64;
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChangeResult {
    pub f1: f64,
    pub counts: Counts,
    /// `(gt_id, prop_id)` of recovered constructions.
    pub matched: Vec<(u64, u64)>,
}

/// Change-detection term. Footprints are compared at each building's first
/// appearance.
pub fn change_score(
    gt: &FootprintSeries,
    props: &FootprintSeries,
    cfg: &MatchConfig,
    tol_frames: usize,
) -> Result<ChangeResult> {
    check_frames(gt, props)?;
    let new_gt: Vec<_> = gt.first_appearances().into_values().filter(|f| f.frame > 0).collect();
    let new_props: Vec<_> = props.first_appearances().into_values().filter(|f| f.frame > 0).collect();

    let mut cands = Vec::new();
    if !new_gt.is_empty() && !new_props.is_empty() {
        let index = crate::matching::GridIndex::new(new_gt.iter().map(|f| f.polygon.bbox()).collect());
        for (j, p) in new_props.iter().enumerate() {
            for i in index.query(&p.polygon.bbox()) {
                let g = new_gt[i];
                if g.frame.abs_diff(p.frame) > tol_frames {
                    continue;
                }
                let v = iou(&g.polygon, &p.polygon);
                if v >= cfg.iou_threshold {
                    cands.push((i, j, v));
                }
            }
        }
    }
    let chosen = greedy_assign(cands);
    let tp = chosen.len() as u64;
    let counts = Counts { tp, fp: new_props.len() as u64 - tp, fn_: new_gt.len() as u64 - tp };
    let mut matched: Vec<(u64, u64)> =
        chosen.iter().map(|&(i, j, _)| (new_gt[i].building_id, new_props[j].building_id)).collect();
    matched.sort_unstable();
    Ok(ChangeResult { f1: counts.f1(), counts, matched })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub f1: f64,
}

impl From<Counts> for Term {
    fn from(c: Counts) -> Self {
        Term { tp: c.tp, fp: c.fp, fn_: c.fn_, f1: c.f1() }
    }
}

/// Scores for one AOI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub aoi_id: String,
    pub track_f1: f64,
    pub change_f1: f64,
    pub scot: f64,
    pub detection_f1: f64,
    pub track: Term,
    pub change: Term,
    pub detection: Term,
    pub combiner: String,
    pub frames: usize,
    pub gt_buildings: usize,
    pub gt_new_buildings: usize,
    pub gsd: f64,
    pub latitude: f64,
}

/// A report together with the per-frame tables it was computed from.
#[derive(Debug, Clone)]
pub struct AoiScore {
    pub report: ScoreReport,
    pub tables: Vec<MatchTable>,
    /// Ground truth after UDM filtering.
    pub gt: FootprintSeries,
}

/// One AOI to score. UDMs apply identically to both sides.
#[derive(Debug, Clone)]
pub struct AoiPair {
    pub gt: FootprintSeries,
    pub props: FootprintSeries,
    pub udms: Vec<UdmMask>,
}

pub fn score_aoi(pair: &AoiPair, cfg: &ScoreConfig) -> Result<AoiScore> {
    cfg.validate()?;
    let gt = apply_udm(&pair.gt, &pair.udms, cfg.occlusion_frac);
    let props = apply_udm(&pair.props, &pair.udms, cfg.occlusion_frac);
    let tables = match_series(&gt, &props, &cfg.matching)?;
    let track = track_from_tables(&tables, cfg.mismatch_penalty);
    let detection = detection_from_tables(&tables);
    let change = change_score(&gt, &props, &cfg.matching, cfg.tol_frames)?;
    let firsts = gt.first_appearances();
    let report = ScoreReport {
        aoi_id: gt.aoi_id.clone(),
        track_f1: track.f1,
        change_f1: change.f1,
        scot: cfg.combiner.combine(track.f1, change.f1),
        detection_f1: detection.f1(),
        track: track.counts.into(),
        change: change.counts.into(),
        detection: detection.into(),
        combiner: cfg.combiner.to_string(),
        frames: gt.frame_count(),
        gt_buildings: firsts.len(),
        gt_new_buildings: firsts.values().filter(|f| f.frame > 0).count(),
        gsd: gt.metadata.gsd,
        latitude: gt.metadata.latitude,
    };
    Ok(AoiScore { report, tables, gt })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TermStats {
    pub track_f1: f64,
    pub change_f1: f64,
    pub scot: f64,
    pub detection_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub aois: usize,
    /// Unweighted mean across AOIs.
    pub mean: TermStats,
    /// Population standard deviation across AOIs.
    pub std: TermStats,
    pub track: Counts,
    pub change: Counts,
    pub detection: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub schema: String,
    pub iou_threshold: f64,
    pub strategy: String,
    pub combiner: String,
    pub tol_frames: usize,
    pub occlusion_frac: f64,
    pub mismatch_penalty: MismatchPenalty,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub header: ReportHeader,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub aggregate: Aggregate,
    pub aois: Vec<ScoreReport>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregates per-AOI reports (already sorted by id).
pub fn aggregate(reports: &[ScoreReport]) -> Aggregate {
    let col = |f: fn(&ScoreReport) -> f64| mean_std(&reports.iter().map(f).collect::<Vec<_>>());
    let (tm, ts) = col(|r| r.track_f1);
    let (cm, cs) = col(|r| r.change_f1);
    let (sm, ss) = col(|r| r.scot);
    let (dm, ds) = col(|r| r.detection_f1);
    let sum = |f: fn(&ScoreReport) -> Term| {
        let mut c = Counts::default();
        for r in reports {
            let t = f(r);
            c += Counts { tp: t.tp, fp: t.fp, fn_: t.fn_ };
        }
        c
    };
    Aggregate {
        aois: reports.len(),
        mean: TermStats { track_f1: tm, change_f1: cm, scot: sm, detection_f1: dm },
        std: TermStats { track_f1: ts, change_f1: cs, scot: ss, detection_f1: ds },
        track: sum(|r| r.track),
        change: sum(|r| r.change),
        detection: sum(|r| r.detection),
    }
}

pub fn report_header(cfg: &ScoreConfig) -> ReportHeader {
    ReportHeader {
        schema: REPORT_SCHEMA.to_string(),
        iou_threshold: cfg.matching.iou_threshold,
        strategy: cfg.matching.strategy.to_string(),
        combiner: cfg.combiner.to_string(),
        tol_frames: cfg.tol_frames,
        occlusion_frac: cfg.occlusion_frac,
        mismatch_penalty: cfg.mismatch_penalty,
        notes: vec![EMPTY_CHANGE_NOTE.to_string()],
    }
}

/// Full scoring output: the report plus per-AOI detail, both sorted by
/// `aoi_id`.
#[derive(Debug, Clone)]
pub struct DatasetScore {
    pub report: DatasetReport,
    pub details: Vec<AoiScore>,
}

/// Scores every AOI (in parallel on the current rayon pool) and aggregates.
pub fn score_dataset(pairs: &[AoiPair], cfg: &ScoreConfig) -> Result<DatasetScore> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate()?;
    let mut seen = HashMap::new();
    for p in pairs {
        if seen.insert(p.gt.aoi_id.as_str(), ()).is_some() {
            return Err(Error::InvalidParameter(format!("duplicate AOI id {}", p.gt.aoi_id)));
        }
    }
    let mut details = pairs.par_iter().map(|p| score_aoi(p, cfg)).collect::<Result<Vec<_>>>()?;
    details.sort_by(|a, b| a.report.aoi_id.cmp(&b.report.aoi_id));
    let aois: Vec<ScoreReport> = details.iter().map(|d| d.report.clone()).collect();
    let report = DatasetReport { header: report_header(cfg), model: None, aggregate: aggregate(&aois), aois };
    Ok(DatasetScore { report, details })
}

impl DatasetReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub const CSV_HEADER: &'static str = "aoi_id,track_tp,track_fp,track_fn,track_f1,change_tp,change_fp,change_fn,change_f1,detection_tp,detection_fp,detection_fn,detection_f1,scot";

    /// One row per AOI, then an `aggregate_mean` row (summed counts, mean
    /// scores) and an `aggregate_std` row (scores only).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.aois {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.aoi_id,
                r.track.tp,
                r.track.fp,
                r.track.fn_,
                r.track_f1,
                r.change.tp,
                r.change.fp,
                r.change.fn_,
                r.change_f1,
                r.detection.tp,
                r.detection.fp,
                r.detection.fn_,
                r.detection_f1,
                r.scot
            ));
        }
        let a = &self.aggregate;
        out.push_str(&format!(
            "aggregate_mean,{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            a.track.tp,
            a.track.fp,
            a.track.fn_,
            a.mean.track_f1,
            a.change.tp,
            a.change.fp,
            a.change.fn_,
            a.mean.change_f1,
            a.detection.tp,
            a.detection.fp,
            a.detection.fn_,
            a.mean.detection_f1,
            a.mean.scot
        ));
        out.push_str(&format!(
            "aggregate_std,,,,{},,,,{},,,,{},{}\n",
            a.std.track_f1, a.std.change_f1, a.std.detection_f1, a.std.scot
        ));
        out
    }
}
