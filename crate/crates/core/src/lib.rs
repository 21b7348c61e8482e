//! Seed refinement for weakly supervised semantic segmentation.
//!
//! A class activation map is sharpened by self-correlation of frozen features
//! ([`scg`]), propagated along image affinities ([`pamr`]), thresholded into
//! pseudo labels ([`seedloop::certain_filter`]) and fed back as a training
//! target. Uncertain decoder pixels are relabeled inside edge-bounded
//! superpixels ([`edgepredict`]) and confident foreground is pasted across
//! images ([`mixer`]).

pub mod config;
pub mod edgepredict;
pub mod error;
pub mod eval;
pub mod io;
pub mod mixer;
pub mod norm;
pub mod pamr;
pub mod scg;
pub mod seedloop;
pub mod synth;
pub mod types;
pub mod validate;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use types::{BoolGrid, FeatureLayer, FeatureStack, Grid, LabelMask, RgbImage, ScoreMap};
pub use validate::{Validate, Violation};
