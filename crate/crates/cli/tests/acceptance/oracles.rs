//! Straight-line reference implementations, written from the definitions
//! without sharing code with the library.

use recurseed::{FeatureLayer, FeatureStack, RgbImage, ScoreMap};

pub type Matrix = Vec<Vec<f64>>;

fn vector(layer: &FeatureLayer, p: usize) -> Vec<f64> {
    let n = layer.pixels();
    (0..layer.channels())
        .map(|c| layer.as_slice()[c * n + p] as f64)
        .collect()
}

fn cosine(a: &[f64], b: &[f64], eps: f64) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(eps);
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt().max(eps);
    dot / (na * nb)
}

fn minmax_row(row: &mut [f64]) {
    let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for v in row.iter_mut() {
        // spreads within a few ulps of the values count as constant
        *v = if hi - lo > 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) { (*v - lo) / (hi - lo) } else { 0.0 };
    }
}

fn cos_matrix(layer: &FeatureLayer, eps: f64) -> Matrix {
    let n = layer.pixels();
    let vs: Vec<_> = (0..n).map(|p| vector(layer, p)).collect();
    let mut m = vec![vec![0.0; n]; n];
    for p in 0..n {
        for q in 0..n {
            m[p][q] = cosine(&vs[p], &vs[q], eps);
        }
    }
    m
}

pub fn first_order(layer: &FeatureLayer, eps: f64) -> Matrix {
    let mut m = cos_matrix(layer, eps);
    for row in m.iter_mut() {
        for v in row.iter_mut() {
            *v = v.max(0.0);
        }
    }
    m
}

pub fn second_order(layer: &FeatureLayer, eps: f64) -> Matrix {
    let cos = cos_matrix(layer, eps);
    let n = cos.len();
    let mut m = vec![vec![0.0; n]; n];
    for p in 0..n {
        for q in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += cos[p][k] * cos[k][q];
            }
            m[p][q] = s / n as f64;
        }
        minmax_row(&mut m[p]);
    }
    m
}

pub fn hsc(stack: &FeatureStack, eps: f64) -> Matrix {
    let n = stack.pixels();
    let mut out = vec![vec![0.0; n]; n];
    let layers = stack.layers();
    for layer in layers {
        let a = first_order(layer, eps);
        let b = second_order(layer, eps);
        for p in 0..n {
            for q in 0..n {
                out[p][q] += a[p][q].max(b[p][q]) / layers.len() as f64;
            }
        }
    }
    out
}

/// Thresholded high-minus-low refinement of a normalized CAM.
pub fn scg_refine(cam: &ScoreMap, volume: &Matrix, delta_h: f32, delta_l: f32) -> Vec<f64> {
    let n = cam.pixels();
    let mut out = Vec::with_capacity(cam.classes() * n);
    for c in 0..cam.classes() {
        let ch = cam.channel(c);
        let high: Vec<usize> = (0..n).filter(|&p| ch[p] > delta_h).collect();
        let low: Vec<usize> = (0..n).filter(|&p| ch[p] < delta_l).collect();
        let mean = |set: &[usize], q: usize| {
            if set.is_empty() {
                0.0
            } else {
                set.iter().map(|&p| volume[p][q]).sum::<f64>() / set.len() as f64
            }
        };
        let mut row: Vec<f64> = (0..n).map(|q| (mean(&high, q) - mean(&low, q)).max(0.0)).collect();
        minmax_row(&mut row);
        out.extend(row);
    }
    out
}

/// Per-pixel softmax weights keyed by neighbour pixel, in stencil order.
pub fn affinity(image: &RgbImage, dilations: &[usize], window: usize, eps: f64) -> Vec<Vec<(usize, f64)>> {
    let (h, w) = (image.height() as isize, image.width() as isize);
    let r = window as isize / 2;
    let px = |i: isize, j: isize| image.pixel(i.clamp(0, h - 1) as usize, j.clamp(0, w - 1) as usize);
    let mut out = Vec::new();
    for i in 0..h {
        for j in 0..w {
            let mut sigma = 0.0;
            for c in 0..3 {
                let vals: Vec<f64> = (-r..=r)
                    .flat_map(|di| (-r..=r).map(move |dj| (di, dj)))
                    .map(|(di, dj)| px(i + di, j + dj)[c] as f64)
                    .collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
                sigma += var.sqrt() / 3.0;
            }
            let sigma = sigma.max(eps);
            let centre = image.pixel(i as usize, j as usize);
            let mut logits = Vec::new();
            for &d in dilations {
                let d = d as isize;
                for (di, dj) in [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)] {
                    let (y, x) = (i + di * d, j + dj * d);
                    if y < 0 || x < 0 || y >= h || x >= w {
                        continue;
                    }
                    let other = image.pixel(y as usize, x as usize);
                    let k: f64 = (0..3)
                        .map(|c| -(centre[c] as f64 - other[c] as f64).abs() / (sigma * sigma))
                        .sum::<f64>()
                        / 3.0;
                    logits.push(((y * w + x) as usize, k));
                }
            }
            let z: f64 = logits.iter().map(|(_, k)| k.exp()).sum();
            out.push(logits.into_iter().map(|(q, k)| (q, k.exp() / z)).collect());
        }
    }
    out
}

/// `iterations` weighted-average steps per class, then the window mask.
pub fn pamr(map: &ScoreMap, field: &[Vec<(usize, f64)>], window: &[bool], iterations: usize) -> Vec<f64> {
    let n = map.pixels();
    let mut out = Vec::new();
    for c in 0..map.classes() {
        let mut cur: Vec<f64> = map.channel(c).iter().map(|&v| v as f64).collect();
        for _ in 0..iterations {
            cur = (0..n)
                .map(|p| field[p].iter().map(|&(q, a)| a * cur[q]).sum())
                .collect();
        }
        for p in 0..n {
            out.push(if window[p] { cur[p] } else { 0.0 });
        }
    }
    out
}

/// Breadth-first labelling in raster order of first pixel.
pub fn flood_fill(edges: &[bool], h: usize, w: usize, eight: bool) -> Vec<i32> {
    let mut labels = vec![-1i32; h * w];
    let mut next = 0;
    let steps: &[(isize, isize)] = if eight {
        &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    } else {
        &[(-1, 0), (1, 0), (0, -1), (0, 1)]
    };
    for start in 0..h * w {
        if edges[start] || labels[start] >= 0 {
            continue;
        }
        labels[start] = next;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            let (i, j) = ((p / w) as isize, (p % w) as isize);
            for &(di, dj) in steps {
                let (y, x) = (i + di, j + dj);
                if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                    continue;
                }
                let q = y as usize * w + x as usize;
                if !edges[q] && labels[q] < 0 {
                    labels[q] = next;
                    queue.push_back(q);
                }
            }
        }
        next += 1;
    }
    labels
}
