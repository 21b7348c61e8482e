//! Per-pixel linear heads over frozen features.
//!
//! The classification head maps each pixel's concatenated features to `C`
//! CAM logits; the decoder head maps them to `C + 1` segmentation logits
//! (background first). Both are affine, so every gradient is a
//! feature-weighted sum of logit gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{BoolGrid, FeatureStack, LabelMask, ScoreMap};

use super::loss::{cls_loss_grad, rec_loss_grad, seg_loss_grad};

/// Pixel-major design matrix: row `p` holds every layer's channels at pixel `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    height: usize,
    width: usize,
    channels: usize,
    x: Vec<f64>,
}

impl Design {
    pub fn from_stack(stack: &FeatureStack) -> Self {
        let n = stack.pixels();
        let u = stack.total_channels();
        let mut x = vec![0.0; n * u];
        let mut offset = 0;
        for layer in stack.layers() {
            let src = layer.as_slice();
            for c in 0..layer.channels() {
                for p in 0..n {
                    x[p * u + offset + c] = src[c * n + p] as f64;
                }
            }
            offset += layer.channels();
        }
        Design {
            height: stack.height(),
            width: stack.width(),
            channels: u,
            x,
        }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
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

    fn row(&self, p: usize) -> &[f64] {
        &self.x[p * self.channels..(p + 1) * self.channels]
    }

    /// Rows from `self` where `mask` is set, otherwise from `other`.
    pub fn paste(&self, other: &Design, mask: &BoolGrid) -> Result<Design> {
        if self.pixels() != other.pixels() || self.channels != other.channels || mask.len() != self.pixels() {
            return Err(Error::shape(
                "design paste",
                format!("{}x{}", self.pixels(), self.channels),
                format!("{}x{}", other.pixels(), other.channels),
            ));
        }
        let mut x = Vec::with_capacity(self.x.len());
        for (p, &take) in mask.as_slice().iter().enumerate() {
            x.extend_from_slice(if take { self.row(p) } else { other.row(p) });
        }
        Ok(Design { x, ..*self })
    }
}

/// Parameters of both heads.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    /// `C × U`
    pub cls_w: Vec<f64>,
    pub cls_b: Vec<f64>,
    /// `(C + 1) × U`
    pub dec_w: Vec<f64>,
    pub dec_b: Vec<f64>,
}

impl Params {
    pub fn zeros(classes: usize, channels: usize) -> Self {
        Params {
            cls_w: vec![0.0; classes * channels],
            cls_b: vec![0.0; classes],
            dec_w: vec![0.0; (classes + 1) * channels],
            dec_b: vec![0.0; classes + 1],
        }
    }

    fn slices(&self) -> [(&'static str, &[f64]); 4] {
        [
            ("cls_w", &self.cls_w),
            ("cls_b", &self.cls_b),
            ("dec_w", &self.dec_w),
            ("dec_b", &self.dec_b),
        ]
    }

    /// Every parameter as one flat vector, in field order.
    pub fn flatten(&self) -> Vec<f64> {
        self.slices().iter().flat_map(|(_, s)| s.iter().copied()).collect()
    }

    /// Mutable access to the `k`-th entry of [`Params::flatten`].
    pub fn flat_mut(&mut self, mut k: usize) -> &mut f64 {
        for v in [&mut self.cls_w, &mut self.cls_b, &mut self.dec_w, &mut self.dec_b] {
            if k < v.len() {
                return &mut v[k];
            }
            k -= v.len();
        }
        panic!("parameter index out of range");
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (a, b) in [
            (&mut self.cls_w, &other.cls_w),
            (&mut self.cls_b, &other.cls_b),
            (&mut self.dec_w, &other.dec_w),
            (&mut self.dec_b, &other.dec_b),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
    }

    /// Name of the first parameter group holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.slices()
            .iter()
            .find(|(_, s)| s.iter().any(|v| !v.is_finite()))
            .map(|(n, _)| *n)
    }
}

/// One differentiable objective evaluated on a single design.
#[derive(Clone, Copy, Debug)]
pub enum Term<'a> {
    /// Image-level labels, one per foreground class.
    Cls { labels: &'a [bool] },
    /// Cross-entropy of the decoder against hard labels (`-1` ignored).
    Seg { target: &'a LabelMask },
    /// L1 between the label-masked, min-max normalized CAM and a refined seed.
    Rec { keep: &'a [bool], target: &'a ScoreMap },
}

/// Linear CAM and decoder heads on frozen per-pixel features.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyLearner {
    classes: usize,
    channels: usize,
    pub params: Params,
    pub learning_rate: f64,
    /// Class-presence threshold on the sigmoid of the pooled CAM.
    pub epsilon: f64,
}

impl ToyLearner {
    /// Small Gaussian-like initialization from `seed`.
    pub fn new(classes: usize, channels: usize, learning_rate: f64, epsilon: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::zeros(classes, channels);
        let scale = 0.1 / (channels as f64).sqrt();
        for w in params.cls_w.iter_mut().chain(params.dec_w.iter_mut()) {
            // sum of uniforms: cheap bell-shaped init
            let s: f64 = (0..4).map(|_| rng.gen_range(-1.0..1.0)).sum();
            *w = s * scale;
        }
        ToyLearner {
            classes,
            channels,
            params,
            learning_rate,
            epsilon,
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    fn affine(w: &[f64], b: &[f64], x: &Design) -> Vec<f64> {
        let n = x.pixels();
        let u = x.channels;
        let k = b.len();
        let mut out = vec![0.0; k * n];
        for p in 0..n {
            let row = x.row(p);
            for c in 0..k {
                let wc = &w[c * u..(c + 1) * u];
                out[c * n + p] = b[c] + wc.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        out
    }

    fn backprop(g: &[f64], x: &Design, gw: &mut [f64], gb: &mut [f64]) {
        let n = x.pixels();
        let u = x.channels;
        for (c, gc) in g.chunks(n).enumerate() {
            let wc = &mut gw[c * u..(c + 1) * u];
            for (p, &v) in gc.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                gb[c] += v;
                for (w, &xv) in wc.iter_mut().zip(x.row(p)) {
                    *w += v * xv;
                }
            }
        }
    }

    /// CAM logits, `C × pixels`.
    pub fn cam_logits(&self, x: &Design) -> Vec<f64> {
        Self::affine(&self.params.cls_w, &self.params.cls_b, x)
    }

    /// Decoder logits, `(C + 1) × pixels`.
    pub fn dec_logits(&self, x: &Design) -> Vec<f64> {
        Self::affine(&self.params.dec_w, &self.params.dec_b, x)
    }

    fn check(&self, x: &Design) -> Result<()> {
        if x.channels != self.channels {
            return Err(Error::shape("feature channels", self.channels, x.channels));
        }
        Ok(())
    }

    /// Loss of `term` at the current parameters.
    pub fn term_loss(&self, x: &Design, term: Term<'_>) -> Result<f64> {
        self.term_eval(x, term, false).map(|(l, _)| l)
    }

    /// Loss of `term` and its gradient with respect to every parameter.
    pub fn term_gradient(&self, x: &Design, term: Term<'_>) -> Result<(f64, Params)> {
        self.term_eval(x, term, true)
            .map(|(l, g)| (l, g.expect("gradient requested")))
    }

    fn term_eval(&self, x: &Design, term: Term<'_>, want_grad: bool) -> Result<(f64, Option<Params>)> {
        self.check(x)?;
        let n = x.pixels();
        let mut grads = want_grad.then(|| Params::zeros(self.classes, self.channels));
        let loss = match term {
            Term::Cls { labels } => {
                if labels.len() != self.classes {
                    return Err(Error::shape("class labels", self.classes, labels.len()));
                }
                let z = self.cam_logits(x);
                let mut g = want_grad.then(|| vec![0.0; z.len()]);
                let l = cls_loss_grad(&z, n, labels, self.epsilon, g.as_deref_mut());
                if let (Some(g), Some(p)) = (g, grads.as_mut()) {
                    Self::backprop(&g, x, &mut p.cls_w, &mut p.cls_b);
                }
                l
            }
            Term::Seg { target } => {
                if target.as_slice().len() != n {
                    return Err(Error::shape("seg target pixels", n, target.as_slice().len()));
                }
                if target.as_slice().iter().any(|&t| t > self.classes as i32 || t < -1) {
                    return Err(Error::Invalid("seg target label out of range".into()));
                }
                let z = self.dec_logits(x);
                let mut g = want_grad.then(|| vec![0.0; z.len()]);
                let (l, _) = seg_loss_grad(&z, n, target.as_slice(), g.as_deref_mut());
                if let (Some(g), Some(p)) = (g, grads.as_mut()) {
                    Self::backprop(&g, x, &mut p.dec_w, &mut p.dec_b);
                }
                l
            }
            Term::Rec { keep, target } => {
                if target.classes() != self.classes || target.pixels() != n || keep.len() != self.classes {
                    return Err(Error::shape(
                        "reconstruction target",
                        format!("{}x{}", self.classes, n),
                        format!("{}x{}", target.classes(), target.pixels()),
                    ));
                }
                let z = self.cam_logits(x);
                let t = target.data_f64();
                let mut g = want_grad.then(|| vec![0.0; z.len()]);
                let l = rec_loss_grad(&z, n, keep, &t, g.as_deref_mut());
                if let (Some(g), Some(p)) = (g, grads.as_mut()) {
                    Self::backprop(&g, x, &mut p.cls_w, &mut p.cls_b);
                }
                l
            }
        };
        Ok((loss, grads))
    }
}
