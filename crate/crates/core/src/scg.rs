//! Self-correlation map generation.
//!
//! Each feature layer yields a first-order correlation (ReLU of pairwise
//! cosine similarity) and a second-order correlation (cosine similarities
//! chained through every intermediate pixel, min-max normalized per row).
//! The hierarchical volume averages their elementwise maximum over layers and
//! is used to grow a CAM from its confident pixels.
//!
//! The second-order term is computed in closed form: with `n_p` the clamped
//! unit feature of pixel `p`, `avg_k cos(p,k) cos(k,q) = n_p' G n_q / hw` where
//! `G = Σ_k n_k n_k'`. That keeps a row at `O(hw · u)` instead of `O(hw² · u)`.

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::norm::minmax_in_place;
use crate::types::{FeatureLayer, FeatureStack, Grid, ScoreMap};

/// Dense `hw × hw` correlation between flattened pixel indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationVolume {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl CorrelationVolume {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of pixels `hw`; the volume has `hw²` entries.
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn get(&self, p: usize, q: usize) -> f32 {
        self.data[p * self.pixels() + q]
    }

    pub fn row(&self, p: usize) -> &[f32] {
        let n = self.pixels();
        &self.data[p * n..(p + 1) * n]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// Precomputed per-layer quantities for producing correlation rows.
struct LayerRows {
    channels: usize,
    /// `pixels × channels`, each row `f_p / max(|f_p|, eps)`.
    unit: Vec<f64>,
    /// `pixels × channels`, each row `G n_p / hw`.
    chained: Vec<f64>,
    /// Self-similarity of each pixel; 1 unless the norm fell under `eps`.
    diag: Vec<f64>,
}

impl LayerRows {
    fn new(layer: &FeatureLayer, eps: f64) -> Self {
        let n = layer.pixels();
        let u = layer.channels();
        let src = layer.as_slice();
        let mut unit = vec![0.0; n * u];
        let mut diag = vec![0.0; n];
        for p in 0..n {
            let norm = (0..u)
                .map(|c| {
                    let v = src[c * n + p] as f64;
                    v * v
                })
                .sum::<f64>()
                .sqrt();
            let denom = norm.max(eps);
            for c in 0..u {
                unit[p * u + c] = src[c * n + p] as f64 / denom;
            }
            diag[p] = if norm >= eps { 1.0 } else { (norm / eps).powi(2) };
        }
        let mut gram = vec![0.0; u * u];
        for p in 0..n {
            let v = &unit[p * u..(p + 1) * u];
            for a in 0..u {
                for b in 0..u {
                    gram[a * u + b] += v[a] * v[b];
                }
            }
        }
        let mut chained = vec![0.0; n * u];
        for p in 0..n {
            let v = &unit[p * u..(p + 1) * u];
            for a in 0..u {
                let s: f64 = (0..u).map(|b| gram[a * u + b] * v[b]).sum();
                chained[p * u + a] = s / n as f64;
            }
        }
        LayerRows {
            channels: u,
            unit,
            chained,
            diag,
        }
    }

    fn cos(&self, p: usize, q: usize) -> f64 {
        let u = self.channels;
        let a = &self.unit[p * u..(p + 1) * u];
        let b = &self.unit[q * u..(q + 1) * u];
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn first_row(&self, p: usize, out: &mut [f64]) {
        for (q, o) in out.iter_mut().enumerate() {
            *o = if q == p {
                self.diag[p]
            } else {
                self.cos(p, q).clamp(0.0, 1.0)
            };
        }
    }

    fn second_row(&self, p: usize, out: &mut [f64]) {
        let u = self.channels;
        let s = &self.chained[p * u..(p + 1) * u];
        for (q, o) in out.iter_mut().enumerate() {
            let b = &self.unit[q * u..(q + 1) * u];
            *o = s.iter().zip(b).map(|(x, y)| x * y).sum();
        }
        minmax_in_place(out);
    }
}

/// Row generator for the hierarchical volume.
struct HscRows {
    layers: Vec<LayerRows>,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl HscRows {
    fn new(stack: &FeatureStack, eps: f64) -> Self {
        let layers: Vec<_> = stack.layers().iter().map(|l| LayerRows::new(l, eps)).collect();
        let n = stack.pixels();
        HscRows {
            layers,
            first: vec![0.0; n],
            second: vec![0.0; n],
        }
    }

    fn row(&mut self, p: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for layer in &self.layers {
            layer.first_row(p, &mut self.first);
            layer.second_row(p, &mut self.second);
            for ((o, a), b) in out.iter_mut().zip(&self.first).zip(&self.second) {
                *o += a.max(*b);
            }
        }
        let inv = 1.0 / self.layers.len() as f64;
        out.iter_mut().for_each(|v| *v *= inv);
    }
}

fn materialize(
    height: usize,
    width: usize,
    mut row: impl FnMut(usize, &mut [f64]),
) -> CorrelationVolume {
    let n = height * width;
    let mut data = Vec::with_capacity(n * n);
    let mut buf = vec![0.0; n];
    for p in 0..n {
        row(p, &mut buf);
        data.extend(buf.iter().map(|&v| v as f32));
    }
    CorrelationVolume {
        height,
        width,
        data,
    }
}

/// `SC¹[p,q] = max(0, cos(f_p, f_q))`, norms clamped below by `epsilon`.
pub fn first_order_sc(layer: &FeatureLayer, epsilon: f64) -> CorrelationVolume {
    let rows = LayerRows::new(layer, epsilon);
    materialize(layer.height(), layer.width(), |p, out| rows.first_row(p, out))
}

/// `SC²[p,·]`: per-row min-max of the mean over `k` of `cos(p,k)·cos(k,q)`.
pub fn second_order_sc(layer: &FeatureLayer, epsilon: f64) -> CorrelationVolume {
    let rows = LayerRows::new(layer, epsilon);
    materialize(layer.height(), layer.width(), |p, out| rows.second_row(p, out))
}

/// Mean over layers of `max(SC¹, SC²)`.
pub fn hsc(stack: &FeatureStack, epsilon: f64) -> Result<CorrelationVolume> {
    if stack.layers().is_empty() {
        return Err(Error::NoLayers);
    }
    let mut rows = HscRows::new(stack, epsilon);
    Ok(materialize(stack.height(), stack.width(), |p, out| {
        rows.row(p, out)
    }))
}

/// Mean of the volume rows indexed by `pixel_set`, as an `h × w` grid.
///
/// An empty set gives an all-zero grid.
pub fn k_scg(hsc: &CorrelationVolume, pixel_set: &[usize]) -> Result<Grid<f32>> {
    let n = hsc.pixels();
    if let Some(&bad) = pixel_set.iter().find(|&&p| p >= n) {
        return Err(Error::Invalid(format!("pixel index {bad} outside {n} pixels")));
    }
    let mut acc = vec![0.0f64; n];
    for &p in pixel_set {
        for (a, &v) in acc.iter_mut().zip(hsc.row(p)) {
            *a += v as f64;
        }
    }
    if !pixel_set.is_empty() {
        let inv = 1.0 / pixel_set.len() as f64;
        acc.iter_mut().for_each(|v| *v *= inv);
    }
    Grid::from_vec(hsc.height(), hsc.width(), acc.into_iter().map(|v| v as f32).collect())
}

/// Refines a normalized CAM with the hierarchical self-correlation of `stack`.
///
/// The volume is materialized in f64 when the pixel count is within
/// `cfg.scg_volume_cap`; larger maps stream rows instead.
pub fn scg_refine(cam: &ScoreMap, stack: &FeatureStack, cfg: &PipelineConfig) -> Result<ScoreMap> {
    check_spatial(cam, stack.height(), stack.width())?;
    if stack.layers().is_empty() {
        return Err(Error::NoLayers);
    }
    let n = stack.pixels();
    let mut rows = HscRows::new(stack, cfg.epsilon);
    if n <= cfg.scg_volume_cap {
        // kept in f64: the per-class min-max amplifies storage rounding
        let mut dense = vec![0.0f64; n * n];
        for (p, out) in dense.chunks_mut(n.max(1)).enumerate() {
            rows.row(p, out);
        }
        refine_from_rows(cam, cfg, |p, out| out.copy_from_slice(&dense[p * n..(p + 1) * n]))
    } else {
        refine_from_rows(cam, cfg, |p, out| rows.row(p, out))
    }
}

/// [`scg_refine`] against a precomputed volume.
pub fn scg_refine_with_volume(
    cam: &ScoreMap,
    volume: &CorrelationVolume,
    cfg: &PipelineConfig,
) -> Result<ScoreMap> {
    check_spatial(cam, volume.height(), volume.width())?;
    refine_from_rows(cam, cfg, |p, out| {
        for (o, &v) in out.iter_mut().zip(volume.row(p)) {
            *o = v as f64;
        }
    })
}

fn check_spatial(cam: &ScoreMap, height: usize, width: usize) -> Result<()> {
    if cam.height() != height || cam.width() != width {
        return Err(Error::shape(
            "cam vs feature size",
            format!("{height}x{width}"),
            format!("{}x{}", cam.height(), cam.width()),
        ));
    }
    Ok(())
}

fn refine_from_rows(
    cam: &ScoreMap,
    cfg: &PipelineConfig,
    mut row: impl FnMut(usize, &mut [f64]),
) -> Result<ScoreMap> {
    let n = cam.pixels();
    let classes = cam.classes();
    let mut high = vec![0.0f64; classes * n];
    let mut low = vec![0.0f64; classes * n];
    let mut high_count = vec![0usize; classes];
    let mut low_count = vec![0usize; classes];
    let mut buf = vec![0.0f64; n];
    // an empty high set gives zeros whatever the low set holds
    let live: Vec<bool> = (0..classes)
        .map(|c| cam.channel(c).iter().any(|&v| v > cfg.delta_h as f32))
        .collect();
    for p in 0..n {
        let (mut needs_row, mut memb) = (false, Vec::with_capacity(classes));
        for c in 0..classes {
            let v = cam.channel(c)[p];
            let m = (v > cfg.delta_h as f32, live[c] && v < cfg.delta_l as f32);
            needs_row |= m.0 || m.1;
            memb.push(m);
        }
        if !needs_row {
            continue;
        }
        row(p, &mut buf);
        for (c, &(is_high, is_low)) in memb.iter().enumerate() {
            let target = if is_high {
                high_count[c] += 1;
                &mut high[c * n..(c + 1) * n]
            } else if is_low {
                low_count[c] += 1;
                &mut low[c * n..(c + 1) * n]
            } else {
                continue;
            };
            for (t, &v) in target.iter_mut().zip(&buf) {
                *t += v;
            }
        }
    }
    let mut out = vec![0.0f64; classes * n];
    for c in 0..classes {
        let hi_scale = if high_count[c] > 0 { 1.0 / high_count[c] as f64 } else { 0.0 };
        let lo_scale = if low_count[c] > 0 { 1.0 / low_count[c] as f64 } else { 0.0 };
        let slot = &mut out[c * n..(c + 1) * n];
        for q in 0..n {
            let diff = high[c * n + q] * hi_scale - low[c * n + q] * lo_scale;
            slot[q] = diff.max(0.0);
        }
        minmax_in_place(slot);
    }
    ScoreMap::from_f64(classes, cam.height(), cam.width(), &out, true)
}
