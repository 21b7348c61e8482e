#![allow(dead_code)]

use rand::Rng;
use recurseed::{FeatureLayer, FeatureStack, RgbImage, ScoreMap};

pub fn stack(rng: &mut impl Rng, h: usize, w: usize, layers: usize, channels: usize) -> FeatureStack {
    let layers = (0..layers)
        .map(|_| {
            let data = (0..channels * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
            FeatureLayer::new(channels, h, w, data).unwrap()
        })
        .collect();
    FeatureStack::new(layers, h, w).unwrap()
}

pub fn image(rng: &mut impl Rng, h: usize, w: usize) -> RgbImage {
    RgbImage::from_fn(h, w, |_, _| std::array::from_fn(|_| rng.gen_range(0.0..1.0)))
}

/// Softmax of random logits; `sharpness` scales the logits.
pub fn probs(rng: &mut impl Rng, classes: usize, h: usize, w: usize, sharpness: f64) -> ScoreMap {
    let n = h * w;
    let mut data = vec![0.0f64; classes * n];
    for p in 0..n {
        let e: Vec<f64> = (0..classes).map(|_| (rng.gen_range(-1.0..1.0) * sharpness).exp()).collect();
        let z: f64 = e.iter().sum();
        for c in 0..classes {
            data[c * n + p] = e[c] / z;
        }
    }
    ScoreMap::from_f64(classes, h, w, &data, true).unwrap()
}

/// Independent uniform scores in `[0, 1)`.
pub fn scores(rng: &mut impl Rng, classes: usize, h: usize, w: usize) -> ScoreMap {
    let data = (0..classes * h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
    ScoreMap::new(classes, h, w, data, false).unwrap()
}
