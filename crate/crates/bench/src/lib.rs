//! Benchmark fixtures built from the synthetic shapes data.

use recurseed::synth::shapes_dataset;
use recurseed::seedloop::TrainSample;
use recurseed::{PipelineConfig, ScoreMap};

/// One synthetic sample of `size × size` pixels.
pub fn sample(size: usize) -> TrainSample {
    shapes_dataset(1, size, 7).remove(0)
}

pub fn samples(count: usize, size: usize) -> Vec<TrainSample> {
    shapes_dataset(count, size, 7)
}

/// A soft CAM derived from the ground truth, blurred by a ramp so that SCG has
/// both high and low sets to work with.
pub fn cam_for(sample: &TrainSample, classes: usize) -> ScoreMap {
    let truth = sample.truth.as_ref().expect("synthetic samples carry truth");
    let (h, w) = (truth.height(), truth.width());
    let n = h * w;
    let mut data = vec![0.0f32; classes * n];
    for p in 0..n {
        let l = truth.as_slice()[p];
        if l > 0 {
            data[(l as usize - 1) * n + p] = 0.6 + 0.4 * ((p % w) as f32 / w as f32);
        }
    }
    ScoreMap::new(classes, h, w, data, true).expect("shape matches")
}

/// A softened decoder map with background first, half the pixels uncertain.
pub fn decoder_for(sample: &TrainSample, classes: usize) -> ScoreMap {
    let truth = sample.truth.as_ref().expect("synthetic samples carry truth");
    let (h, w) = (truth.height(), truth.width());
    let n = h * w;
    let k = classes + 1;
    let mut data = vec![0.0f32; k * n];
    for p in 0..n {
        let l = truth.as_slice()[p].max(0) as usize;
        let peak = if (p / w + p % w) % 2 == 0 { 0.9 } else { 0.4 };
        for c in 0..k {
            data[c * n + p] = if c == l { peak } else { (1.0 - peak) / (k - 1) as f32 };
        }
    }
    ScoreMap::new(k, h, w, data, true).expect("shape matches")
}

pub fn config() -> PipelineConfig {
    PipelineConfig::default()
}
