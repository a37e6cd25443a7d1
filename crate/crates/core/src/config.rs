//! TOML settings shared by the command line tools.

use serde::{Deserialize, Serialize};

use crate::association::TrackerParams;
use crate::dtree::TrainConfig;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::pairs::LabelConfig;
use crate::pipeline::BACKGROUND_WINDOW;
use crate::segmentation::SegmentParams;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    pub threshold: u8,
    /// Pick the threshold per frame with Otsu's method instead.
    pub otsu: bool,
    pub min_area: usize,
    pub background_window: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        let p = SegmentParams::default();
        Self {
            threshold: p.threshold.unwrap_or(15),
            otsu: false,
            min_area: p.min_area,
            background_window: BACKGROUND_WINDOW,
        }
    }
}

impl SegmentConfig {
    pub fn params(&self) -> SegmentParams {
        SegmentParams {
            threshold: (!self.otsu).then_some(self.threshold),
            min_area: self.min_area,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub depths: [usize; 2],
    pub runs: usize,
    pub train_fraction: f64,
    pub seed: u64,
    /// Depth of the tree saved after the sweep.
    pub final_depth: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            depths: [5, 10],
            runs: 20,
            train_fraction: 0.7,
            seed: 7,
            final_depth: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub segment: SegmentConfig,
    pub tracker: TrackerParams,
    pub train: TrainConfig,
    pub protocol: ProtocolConfig,
    pub pairs: LabelConfig,
    pub synth: SynthConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.tracker.validate()?;
        self.train.validate()?;
        self.synth.validate()?;
        if self.segment.background_window == 0 {
            return Err(Error::InvalidConfig("background_window must be >= 1".into()));
        }
        let p = &self.protocol;
        if p.depths[0] == 0 || p.depths[0] > p.depths[1] || p.runs == 0 {
            return Err(Error::InvalidConfig("protocol depths must be ordered and runs >= 1".into()));
        }
        if !(0.0 < p.train_fraction && p.train_fraction < 1.0) {
            return Err(Error::InvalidConfig("train_fraction must lie in (0, 1)".into()));
        }
        if self.pairs.gap == 0 {
            return Err(Error::InvalidConfig("pairs.gap must be >= 1".into()));
        }
        Ok(())
    }
}
