use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use scot_core::ingest::AoiLayout;
use scot_core::raster::FbcParams;
use scot_core::scot::{Combiner, ScoreConfig};
use scot_core::synth::{DatasetConfig, PerturbConfig};
use scot_core::trackers::TrackerParams;

/// Everything a run can be configured with. Each group is optional in the
/// file; missing keys take their defaults and unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub layout: AoiLayout,
    pub score: ScoreConfig,
    pub tracker: TrackerParams,
    pub synth: DatasetConfig,
    /// When present, `synth --proposals-out` writes perturbed copies of the
    /// ground truth.
    pub perturb: Option<PerturbConfig>,
    pub masks: FbcParams,
    /// Area bin edges in m² for `analyze`; the default is 16 log bins over
    /// [10, 10⁴].
    pub area_bins_m2: Option<Vec<f64>>,
}

/// Flags shared by every subcommand that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub iou_threshold: Option<f64>,
    pub combiner: Option<Combiner>,
    pub tol_frames: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.synth.seed = seed;
        }
        if let Some(t) = o.iou_threshold {
            self.score.matching.iou_threshold = t;
        }
        if let Some(c) = o.combiner {
            self.score.combiner = c;
        }
        if let Some(t) = o.tol_frames {
            self.score.tol_frames = t;
        }
    }

    /// Checks every group, whichever command runs.
    pub fn validate(&self) -> Result<()> {
        self.layout.validate().context("layout")?;
        self.score.validate().context("score")?;
        self.tracker.validate().context("tracker")?;
        self.synth.validate().context("synth")?;
        if let Some(p) = &self.perturb {
            p.validate().context("perturb")?;
        }
        self.masks.validate().context("masks")?;
        if let Some(edges) = &self.area_bins_m2 {
            if edges.is_empty() || edges[0] <= 0.0 || edges.windows(2).any(|w| !(w[0] < w[1])) {
                bail!("area_bins_m2 must be positive and strictly increasing");
            }
        }
        Ok(())
    }
}
