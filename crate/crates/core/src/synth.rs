//! Coloured shapes on textured backgrounds, with image-level labels and
//! hand-crafted frozen features.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::seedloop::TrainSample;
use crate::types::{FeatureLayer, FeatureStack, LabelMask, RgbImage};

/// Foreground classes: 1 red disk, 2 green rectangle, 3 blue triangle.
pub const CLASSES: usize = 3;

const COLOURS: [[f32; 3]; CLASSES] = [[0.80, 0.22, 0.20], [0.22, 0.74, 0.26], [0.22, 0.30, 0.84]];

/// Channels of the full-resolution feature layer.
pub const FINE_CHANNELS: usize = 6;

const FEATURE_NOISE: f32 = 0.25;

fn inside(class: usize, di: f32, dj: f32, r: f32, aspect: f32) -> bool {
    match class {
        0 => di * di + dj * dj <= r * r,
        1 => di.abs() <= r * aspect && dj.abs() <= r,
        _ => di >= -r && di <= r && dj.abs() <= (di + r) / 2.0,
    }
}

/// One image with 1 or 2 shapes, its truth mask and its class labels.
pub fn shapes_image(size: usize, rng: &mut impl Rng) -> (RgbImage, LabelMask, Vec<bool>) {
    let base: f32 = rng.gen_range(0.30..0.60);
    let tint: [f32; 3] = std::array::from_fn(|_| rng.gen_range(-0.06..0.06));
    let freq: f32 = rng.gen_range(0.2..0.6);
    let phase: f32 = rng.gen_range(0.0..6.3);
    let mut data = vec![0.0f32; size * size * 3];
    for i in 0..size {
        for j in 0..size {
            let stripe = 0.08 * ((i as f32 + 0.7 * j as f32) * freq + phase).sin();
            for (k, t) in tint.iter().enumerate() {
                data[(i * size + j) * 3 + k] = base + t + stripe + rng.gen_range(-0.08..0.08);
            }
        }
    }
    let mut labels = vec![0i32; size * size];
    let mut present = vec![false; CLASSES];
    let shapes = rng.gen_range(1..=2);
    for _ in 0..shapes {
        let class = rng.gen_range(0..CLASSES);
        let r: f32 = rng.gen_range(0.15..0.25) * size as f32;
        let aspect: f32 = rng.gen_range(0.5..1.0);
        let lo = r + 1.0;
        let hi = size as f32 - r - 1.0;
        let (ci, cj): (f32, f32) = (rng.gen_range(lo..hi), rng.gen_range(lo..hi));
        let jitter: [f32; 3] = std::array::from_fn(|_| rng.gen_range(-0.08..0.08));
        // lighting falls off linearly along a random direction
        let angle: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
        let (si, sj) = angle.sin_cos();
        let falloff: f32 = rng.gen_range(0.2..0.55);
        let mut any = false;
        for i in 0..size {
            for j in 0..size {
                if inside(class, i as f32 - ci, j as f32 - cj, r, aspect) {
                    any = true;
                    labels[i * size + j] = class as i32 + 1;
                    let t = ((i as f32 - ci) * si + (j as f32 - cj) * sj) / (2.0 * r) + 0.5;
                    let light = 1.0 - falloff * t.clamp(0.0, 1.0);
                    for k in 0..3 {
                        let v = COLOURS[class][k] + jitter[k];
                        data[(i * size + j) * 3 + k] = v * light + rng.gen_range(-0.08..0.08);
                    }
                }
            }
        }
        present[class] |= any;
    }
    // a later shape may hide an earlier one completely
    for (c, p) in present.iter_mut().enumerate() {
        *p = labels.contains(&(c as i32 + 1));
    }
    data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    let image = RgbImage::new(size, size, data).expect("sized buffer");
    let mask = LabelMask::new(CLASSES, size, size, labels).expect("labels within range");
    (image, mask, present)
}

/// Frozen features: a noisy colour/opponent-colour layer at full resolution
/// and a block-averaged copy at half resolution.
pub fn shapes_features(image: &RgbImage, rng: &mut impl Rng) -> FeatureStack {
    let (h, w) = (image.height(), image.width());
    let n = h * w;
    let mut fine = vec![0.0f32; FINE_CHANNELS * n];
    for i in 0..h {
        for j in 0..w {
            let [r, g, b] = image.pixel(i, j);
            let f = [r, g, b, r - (g + b) / 2.0, g - (r + b) / 2.0, b - (r + g) / 2.0];
            for (c, v) in f.iter().enumerate() {
                fine[c * n + i * w + j] = v + rng.gen_range(-FEATURE_NOISE..FEATURE_NOISE);
            }
        }
    }
    let (hc, wc) = (h.div_ceil(2), w.div_ceil(2));
    let mut coarse = vec![0.0f32; FINE_CHANNELS * hc * wc];
    for c in 0..FINE_CHANNELS {
        for i in 0..hc {
            for j in 0..wc {
                let (mut s, mut k) = (0.0, 0);
                for y in 2 * i..(2 * i + 2).min(h) {
                    for x in 2 * j..(2 * j + 2).min(w) {
                        s += fine[c * n + y * w + x];
                        k += 1;
                    }
                }
                coarse[c * hc * wc + i * wc + j] = s / k as f32;
            }
        }
    }
    let layers = vec![
        FeatureLayer::new(FINE_CHANNELS, h, w, fine).expect("sized buffer"),
        FeatureLayer::new(FINE_CHANNELS, hc, wc, coarse).expect("sized buffer"),
    ];
    FeatureStack::new(layers, h, w).expect("two layers")
}

/// `count` training samples of `size × size` pixels, reproducible per `seed`.
pub fn shapes_dataset(count: usize, size: usize, seed: u64) -> Vec<TrainSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let (image, truth, labels) = shapes_image(size, &mut rng);
            let stack = shapes_features(&image, &mut rng);
            TrainSample {
                stack,
                image,
                labels,
                truth: Some(truth),
            }
        })
        .collect()
}
