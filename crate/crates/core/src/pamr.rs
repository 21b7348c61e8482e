//! Pixel-adaptive mask refinement.
//!
//! Class scores are repeatedly replaced by a convex combination of their
//! dilated 8-neighbourhood, weighted by a softmax over negative intensity
//! distances scaled by the local intensity variance.

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::types::{BoolGrid, Grid, RgbImage, ScoreMap};

/// Window of pixels kept after propagation.
pub type WindowMask = BoolGrid;

/// Softmax neighbour weights for every pixel.
///
/// `weights[p * offsets.len() + k]` belongs to `offsets[k]`; out-of-bounds
/// neighbours carry weight 0 and are not part of the softmax support.
#[derive(Clone, Debug)]
pub struct AffinityField {
    height: usize,
    width: usize,
    offsets: Vec<(isize, isize)>,
    weights: Vec<f64>,
}

impl AffinityField {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }

    /// In-bounds `(neighbour flat index, weight)` pairs of pixel `(i, j)`.
    pub fn neighbours(&self, i: usize, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let k = self.offsets.len();
        let p = i * self.width + j;
        self.offsets
            .iter()
            .zip(&self.weights[p * k..(p + 1) * k])
            .filter_map(move |(&(di, dj), &w)| {
                let (y, x) = (i as isize + di, j as isize + dj);
                (y >= 0 && x >= 0 && (y as usize) < self.height && (x as usize) < self.width)
                    .then(|| (y as usize * self.width + x as usize, w))
            })
    }

    /// Sum of weights of pixel `(i, j)`.
    pub fn weight_sum(&self, i: usize, j: usize) -> f64 {
        self.neighbours(i, j).map(|(_, w)| w).sum()
    }
}

/// 3×3 stencil without its centre, scaled by each dilation.
pub fn neighbour_offsets(dilations: &[usize]) -> Vec<(isize, isize)> {
    let mut out = Vec::with_capacity(8 * dilations.len());
    for &d in dilations {
        let d = d as isize;
        for di in -1..=1 {
            for dj in -1..=1 {
                if di != 0 || dj != 0 {
                    out.push((di * d, dj * d));
                }
            }
        }
    }
    out
}

/// Local intensity standard deviation, averaged over RGB and clamped below by `epsilon`.
///
/// Borders are replicate-padded.
pub fn local_sigma(image: &RgbImage, window: usize, epsilon: f64) -> Result<Grid<f64>> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::Invalid(format!("sigma window must be odd and >= 3, got {window}")));
    }
    let (h, w) = (image.height(), image.width());
    let r = (window / 2) as isize;
    let count = (window * window) as f64;
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    Ok(Grid::from_fn(h, w, |i, j| {
        let mut sigma = 0.0;
        for ch in 0..3 {
            let (mut s, mut s2) = (0.0f64, 0.0f64);
            for di in -r..=r {
                for dj in -r..=r {
                    let y = clampi(i as isize + di, h);
                    let x = clampi(j as isize + dj, w);
                    let v = image.pixel(y, x)[ch] as f64;
                    s += v;
                    s2 += v * v;
                }
            }
            let mean = s / count;
            sigma += (s2 / count - mean * mean).max(0.0).sqrt();
        }
        (sigma / 3.0).max(epsilon)
    }))
}

/// Builds the softmax affinity field of `image` over the dilated neighbourhood.
pub fn build_affinity(
    image: &RgbImage,
    dilations: &[usize],
    cfg: &PipelineConfig,
) -> Result<AffinityField> {
    if dilations.is_empty() || dilations.contains(&0) {
        return Err(Error::Invalid("dilations must be positive and nonempty".into()));
    }
    let sigma = local_sigma(image, cfg.pamr_sigma_window, cfg.epsilon)?;
    let (h, w) = (image.height(), image.width());
    let offsets = neighbour_offsets(dilations);
    let k = offsets.len();
    let mut weights = vec![0.0f64; h * w * k];
    let mut logits = vec![f64::NEG_INFINITY; k];
    for i in 0..h {
        for j in 0..w {
            let centre = image.pixel(i, j);
            let var = sigma.get(i, j).powi(2);
            let mut best = f64::NEG_INFINITY;
            for (slot, &(di, dj)) in logits.iter_mut().zip(&offsets) {
                let (y, x) = (i as isize + di, j as isize + dj);
                *slot = if y < 0 || x < 0 || y as usize >= h || x as usize >= w {
                    f64::NEG_INFINITY
                } else {
                    let other = image.pixel(y as usize, x as usize);
                    let dist: f64 = (0..3)
                        .map(|c| (centre[c] as f64 - other[c] as f64).abs())
                        .sum::<f64>()
                        / 3.0;
                    -dist / var
                };
                best = best.max(*slot);
            }
            let base = (i * w + j) * k;
            if best == f64::NEG_INFINITY {
                // 1×1 image: no neighbours at all
                continue;
            }
            let mut total = 0.0;
            for (n, &l) in logits.iter().enumerate() {
                let e = if l == f64::NEG_INFINITY { 0.0 } else { (l - best).exp() };
                weights[base + n] = e;
                total += e;
            }
            for wv in &mut weights[base..base + k] {
                *wv /= total;
            }
        }
    }
    Ok(AffinityField {
        height: h,
        width: w,
        offsets,
        weights,
    })
}

/// Pixels where any class of `map` is strictly positive.
pub fn active_window(map: &ScoreMap) -> WindowMask {
    let n = map.pixels();
    let data = (0..n).map(|p| map.pixel(p).any(|v| v > 0.0)).collect();
    BoolGrid::from_vec(map.height(), map.width(), data).expect("window length matches map")
}

/// Runs `cfg.pamr_iterations` propagation steps, then zeroes pixels outside `window`.
pub fn pamr_refine(
    map: &ScoreMap,
    image: &RgbImage,
    window: &WindowMask,
    cfg: &PipelineConfig,
) -> Result<ScoreMap> {
    check_shapes(map, image.height(), image.width(), window)?;
    let field = build_affinity(image, &cfg.dilations(), cfg)?;
    pamr_refine_with_field(map, &field, window, cfg.pamr_iterations)
}

/// [`pamr_refine`] against a prebuilt affinity field.
pub fn pamr_refine_with_field(
    map: &ScoreMap,
    field: &AffinityField,
    window: &WindowMask,
    iterations: usize,
) -> Result<ScoreMap> {
    check_shapes(map, field.height, field.width, window)?;
    let (h, w) = (field.height, field.width);
    let n = h * w;
    let k = field.offsets.len();
    // Precompute flat neighbour indices once; usize::MAX marks out of bounds.
    let mut nbr = vec![usize::MAX; n * k];
    for i in 0..h {
        for j in 0..w {
            for (s, &(di, dj)) in field.offsets.iter().enumerate() {
                let (y, x) = (i as isize + di, j as isize + dj);
                if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w {
                    nbr[(i * w + j) * k + s] = y as usize * w + x as usize;
                }
            }
        }
    }
    let mut out = Vec::with_capacity(map.classes() * n);
    let mut cur = vec![0.0f64; n];
    let mut next = vec![0.0f64; n];
    for c in 0..map.classes() {
        for (d, &v) in cur.iter_mut().zip(map.channel(c)) {
            *d = v as f64;
        }
        for _ in 0..iterations {
            for p in 0..n {
                let mut acc = 0.0;
                for s in 0..k {
                    let q = nbr[p * k + s];
                    if q != usize::MAX {
                        acc += field.weights[p * k + s] * cur[q];
                    }
                }
                next[p] = acc;
            }
            std::mem::swap(&mut cur, &mut next);
        }
        for (p, &v) in cur.iter().enumerate() {
            out.push(if window.as_slice()[p] { v } else { 0.0 });
        }
    }
    ScoreMap::from_f64(map.classes(), h, w, &out, map.is_probabilistic())
}

fn check_shapes(map: &ScoreMap, h: usize, w: usize, window: &WindowMask) -> Result<()> {
    if map.height() != h || map.width() != w {
        return Err(Error::shape(
            "map vs image size",
            format!("{h}x{w}"),
            format!("{}x{}", map.height(), map.width()),
        ));
    }
    if window.height() != h || window.width() != w {
        return Err(Error::shape(
            "window size",
            format!("{h}x{w}"),
            format!("{}x{}", window.height(), window.width()),
        ));
    }
    Ok(())
}
