//! Domain types shared by every stage of the pipeline.
//!
//! Everything stores `f32` values in row-major order. Reductions accumulate in
//! `f64`. Values are immutable once built: operations return new maps.

use crate::error::{Error, Result};

/// A single-channel `height × width` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

/// Boolean grid used for edges, windows and paste masks.
pub type BoolGrid = Grid<bool>;

impl<T: Clone> Grid<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Grid {
            height,
            width,
            data: vec![value; height * width],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape("grid length", height * width, data.len()));
        }
        Ok(Grid {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Grid {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.width + j]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }
}

impl BoolGrid {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Per-class real-valued map of shape `classes × height × width`.
///
/// `probabilistic` marks maps whose values are meant to lie in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap {
    classes: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
    probabilistic: bool,
}

impl ScoreMap {
    pub fn new(
        classes: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
        probabilistic: bool,
    ) -> Result<Self> {
        if classes == 0 {
            return Err(Error::Invalid("score map needs at least one class".into()));
        }
        if data.len() != classes * height * width {
            return Err(Error::shape(
                "score map length",
                classes * height * width,
                data.len(),
            ));
        }
        Ok(ScoreMap {
            classes,
            height,
            width,
            data,
            probabilistic,
        })
    }

    pub fn zeros(classes: usize, height: usize, width: usize, probabilistic: bool) -> Self {
        ScoreMap {
            classes: classes.max(1),
            height,
            width,
            data: vec![0.0; classes.max(1) * height * width],
            probabilistic,
        }
    }

    /// Builds a map from `f64` values, rounding to storage precision.
    pub fn from_f64(
        classes: usize,
        height: usize,
        width: usize,
        data: &[f64],
        probabilistic: bool,
    ) -> Result<Self> {
        Self::new(
            classes,
            height,
            width,
            data.iter().map(|&v| v as f32).collect(),
            probabilistic,
        )
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn is_probabilistic(&self) -> bool {
        self.probabilistic
    }

    pub fn with_probabilistic(mut self, probabilistic: bool) -> Self {
        self.probabilistic = probabilistic;
        self
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Values of one class as a flat `height × width` slice.
    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.pixels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> f32 {
        self.data[(c * self.height + i) * self.width + j]
    }

    /// Score vector across classes at flat pixel index `p`.
    pub fn pixel(&self, p: usize) -> impl Iterator<Item = f32> + '_ {
        let n = self.pixels();
        (0..self.classes).map(move |c| self.data[c * n + p])
    }

    /// Largest score at pixel `p` and the smallest class index attaining it.
    pub fn max_at(&self, p: usize) -> (usize, f32) {
        let mut best = (0, f32::NEG_INFINITY);
        for (c, v) in self.pixel(p).enumerate() {
            if v > best.1 {
                best = (c, v);
            }
        }
        best
    }

    pub fn same_shape(&self, other: &ScoreMap) -> bool {
        self.classes == other.classes && self.height == other.height && self.width == other.width
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.classes, self.height, self.width)
    }

    pub(crate) fn data_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

/// One encoder layer: `channels × height × width` values.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureLayer {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FeatureLayer {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Invalid(format!(
                "feature layer has an empty dimension ({channels}x{height}x{width})"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::shape(
                "feature layer length",
                channels * height * width,
                data.len(),
            ));
        }
        Ok(FeatureLayer {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Feature vector of flat pixel `p`, widened to `f64`.
    pub fn vector(&self, p: usize) -> Vec<f64> {
        let n = self.pixels();
        (0..self.channels)
            .map(|u| self.data[u * n + p] as f64)
            .collect()
    }

    /// Bilinear resampling with half-pixel centres and edge clamping.
    pub fn resample(&self, height: usize, width: usize) -> FeatureLayer {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        let src_n = self.pixels();
        let mut data = vec![0.0f32; self.channels * height * width];
        for i in 0..height {
            let y = ((i as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = y.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let fy = y - y0 as f64;
            for j in 0..width {
                let x = ((j as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = x.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let fx = x - x0 as f64;
                for u in 0..self.channels {
                    let base = &self.data[u * src_n..(u + 1) * src_n];
                    let at = |r: usize, c: usize| base[r * self.width + c] as f64;
                    let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                    let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                    data[(u * height + i) * width + j] = (top * (1.0 - fy) + bottom * fy) as f32;
                }
            }
        }
        FeatureLayer {
            channels: self.channels,
            height,
            width,
            data,
        }
    }
}

/// Ordered encoder layers, all resampled to a shared spatial size.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStack {
    height: usize,
    width: usize,
    layers: Vec<FeatureLayer>,
}

impl FeatureStack {
    /// Resamples every layer to `height × width`.
    pub fn new(layers: Vec<FeatureLayer>, height: usize, width: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::NoLayers);
        }
        let layers = layers
            .into_iter()
            .map(|l| l.resample(height, width))
            .collect();
        Ok(FeatureStack {
            height,
            width,
            layers,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn layers(&self) -> &[FeatureLayer] {
        &self.layers
    }

    /// Total channel count across layers.
    pub fn total_channels(&self) -> usize {
        self.layers.iter().map(|l| l.channels).sum()
    }
}

/// Per-pixel integer labels: `-1` ignore, `0` background, `1..=classes` foreground.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMask {
    classes: usize,
    height: usize,
    width: usize,
    labels: Vec<i32>,
}

impl LabelMask {
    pub const IGNORE: i32 = -1;

    pub fn new(classes: usize, height: usize, width: usize, labels: Vec<i32>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::shape("label mask length", height * width, labels.len()));
        }
        Ok(LabelMask {
            classes,
            height,
            width,
            labels,
        })
    }

    pub fn filled(classes: usize, height: usize, width: usize, label: i32) -> Self {
        LabelMask {
            classes,
            height,
            width,
            labels: vec![label; height * width],
        }
    }

    /// Number of foreground classes `C`; valid labels are `-1..=C`.
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[i32] {
        &self.labels
    }

    pub fn get(&self, i: usize, j: usize) -> i32 {
        self.labels[i * self.width + j]
    }

    /// Copy with every ignore pixel committed to background.
    pub fn resolve_ignore(&self) -> LabelMask {
        LabelMask {
            labels: self
                .labels
                .iter()
                .map(|&l| if l == Self::IGNORE { 0 } else { l })
                .collect(),
            ..self.clone()
        }
    }
}

/// `height × width × 3` image with intensities in `[0, 1]`, stored interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::shape("rgb image length", height * width * 3, data.len()));
        }
        Ok(RgbImage {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for i in 0..height {
            for j in 0..width {
                data.extend_from_slice(&f(i, j));
            }
        }
        RgbImage {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, i: usize, j: usize) -> [f32; 3] {
        let o = (i * self.width + j) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }
}
