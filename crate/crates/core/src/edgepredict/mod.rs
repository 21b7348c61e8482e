//! Edge-predicted relabelling of uncertain pixels.
//!
//! The confidence grid (largest class probability, scaled to `[0, 255]`) is
//! cut into superpixels along its Canny edges. Within each superpixel the
//! certain pixels vote, and every uncertain pixel takes the winning class as a
//! one-hot score vector.

pub mod canny;
pub mod ccl;

pub use canny::{canny, EdgeMap};
pub use ccl::{connected_components, SuperpixelLabels, EDGE};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::types::{Grid, ScoreMap};

/// Certain-pixel class under the foreground/background thresholds, if any.
///
/// Background here is class 0 of a `C + 1` channel map.
pub fn certain_class(map: &ScoreMap, p: usize, cfg: &PipelineConfig) -> Option<usize> {
    let (c, v) = map.max_at(p);
    if v > cfg.delta_fg as f32 {
        Some(c)
    } else if v < cfg.delta_bg as f32 {
        Some(0)
    } else {
        None
    }
}

/// Largest class probability per pixel, times 255.
pub fn confidence_grid(map: &ScoreMap) -> Grid<f32> {
    let data = (0..map.pixels()).map(|p| map.max_at(p).1 * 255.0).collect();
    Grid::from_vec(map.height(), map.width(), data).expect("pixel count matches")
}

/// Replaces uncertain score vectors by the majority certain class of their superpixel.
///
/// Certain pixels, edge pixels, and superpixels without any certain pixel are
/// left untouched.
pub fn ep_refine(dec: &ScoreMap, cfg: &PipelineConfig) -> Result<ScoreMap> {
    if dec.classes() < 2 {
        return Err(Error::Invalid(
            "edge prediction expects background plus at least one class".into(),
        ));
    }
    let edges = canny(&confidence_grid(dec), cfg.canny_low, cfg.canny_high)?;
    let labels = connected_components(&edges, cfg.ccl_connectivity)?;
    let classes = dec.classes();
    let components = labels.as_slice().iter().max().map_or(0, |&m| (m + 1).max(0) as usize);
    let mut votes = vec![0usize; components * classes];
    let mut certain = Vec::with_capacity(dec.pixels());
    for p in 0..dec.pixels() {
        let cls = certain_class(dec, p, cfg);
        certain.push(cls.is_some());
        let id = labels.as_slice()[p];
        if let (Some(c), true) = (cls, id >= 0) {
            votes[id as usize * classes + c] += 1;
        }
    }
    let winners: Vec<Option<usize>> = votes
        .chunks(classes)
        .map(|v| {
            let (best, &count) = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("at least two classes");
            (count > 0).then_some(best)
        })
        .collect();
    let n = dec.pixels();
    let mut out = dec.as_slice().to_vec();
    for p in 0..n {
        let id = labels.as_slice()[p];
        if certain[p] || id < 0 {
            continue;
        }
        if let Some(win) = winners[id as usize] {
            for c in 0..classes {
                out[c * n + p] = if c == win { 1.0 } else { 0.0 };
            }
        }
    }
    ScoreMap::new(classes, dec.height(), dec.width(), out, dec.is_probabilistic())
}
