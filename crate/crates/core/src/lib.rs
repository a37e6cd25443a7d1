//! Cell tracking by classifying feature differences with decision trees
//! and solving frame-to-frame association with a modified Hungarian step.

pub mod association;
pub mod config;
pub mod dtree;
pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod pairs;
pub mod pipeline;
pub mod segmentation;
pub mod synth;

pub use association::{CellStatus, Tracker, TrackerParams};
pub use config::PipelineConfig;
pub use dtree::{DecisionTree, TrainConfig, TrainingSet};
pub use error::{Error, Result};
pub use eval::{EvalConfig, EvalReport};
pub use features::{FeatureSet, Point};
pub use pipeline::{Detection, TrajectoryRow};
pub use segmentation::{GrayFrame, Region, SegmentParams};
pub use synth::{GroundTruth, SynthConfig};
