//! Classification, segmentation and reconstruction losses.
//!
//! The public functions take score maps; the `*_grad` helpers work on `f64`
//! logits and also return the gradient with respect to those logits, which
//! is what the toy learner back-propagates.

use crate::error::{Error, Result};
use crate::types::{LabelMask, ScoreMap};

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Multi-label soft margin loss on the global average of each class map.
///
/// `labels[c]` says whether class `c` (channel `c`) is present.
pub fn loss_cls(cam: &ScoreMap, labels: &[bool], epsilon: f64) -> Result<f64> {
    if labels.len() != cam.classes() {
        return Err(Error::shape("class labels", cam.classes(), labels.len()));
    }
    Ok(cls_loss_grad(&cam.data_f64(), cam.pixels(), labels, epsilon, None))
}

/// Softmax cross-entropy over pixels whose target is not ignore; 0 when all are ignored.
///
/// `pred` holds logits for background plus `C` classes.
pub fn loss_seg(pred: &ScoreMap, target: &LabelMask) -> Result<f64> {
    if pred.height() != target.height() || pred.width() != target.width() {
        return Err(Error::shape(
            "seg target size",
            format!("{}x{}", pred.height(), pred.width()),
            format!("{}x{}", target.height(), target.width()),
        ));
    }
    if let Some(&l) = target
        .as_slice()
        .iter()
        .find(|&&l| l >= pred.classes() as i32 || l < LabelMask::IGNORE)
    {
        return Err(Error::Invalid(format!(
            "target label {l} has no channel among {}",
            pred.classes()
        )));
    }
    Ok(seg_loss_grad(&pred.data_f64(), pred.pixels(), target.as_slice(), None).0)
}

/// Mean absolute difference over every value.
pub fn loss_rec(cam: &ScoreMap, rs: &ScoreMap) -> Result<f64> {
    if !cam.same_shape(rs) {
        return Err(Error::shape("reconstruction maps", cam.shape_string(), rs.shape_string()));
    }
    let n = cam.as_slice().len().max(1) as f64;
    Ok(cam
        .as_slice()
        .iter()
        .zip(rs.as_slice())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .sum::<f64>()
        / n)
}

/// Loss and optional logit gradient for [`loss_cls`]. `logits` is `C × pixels`.
///
/// Log arguments are clamped below by `epsilon`; the clamped branch has zero slope.
pub(crate) fn cls_loss_grad(
    logits: &[f64],
    pixels: usize,
    labels: &[bool],
    epsilon: f64,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let classes = labels.len();
    let mut total = 0.0;
    for (c, &present) in labels.iter().enumerate() {
        let row = &logits[c * pixels..(c + 1) * pixels];
        let gap = row.iter().sum::<f64>() / pixels as f64;
        let prob = sigmoid(gap);
        // d loss / d prob, accounting for the clamp
        let dprob = if present {
            total -= prob.max(epsilon).ln();
            if prob > epsilon {
                -1.0 / prob
            } else {
                0.0
            }
        } else {
            total -= (1.0 - prob).max(epsilon).ln();
            if 1.0 - prob > epsilon {
                1.0 / (1.0 - prob)
            } else {
                0.0
            }
        };
        if let Some(g) = grad.as_deref_mut() {
            let dgap = dprob * prob * (1.0 - prob) / classes as f64;
            let per_pixel = dgap / pixels as f64;
            g[c * pixels..(c + 1) * pixels]
                .iter_mut()
                .for_each(|v| *v += per_pixel);
        }
    }
    total / classes as f64
}

/// Loss, number of supervised pixels, and optional logit gradient for [`loss_seg`].
pub(crate) fn seg_loss_grad(
    logits: &[f64],
    pixels: usize,
    target: &[i32],
    mut grad: Option<&mut [f64]>,
) -> (f64, usize) {
    let channels = logits.len() / pixels;
    let counted = target.iter().filter(|&&t| t != LabelMask::IGNORE).count();
    if counted == 0 {
        return (0.0, 0);
    }
    let inv = 1.0 / counted as f64;
    let mut total = 0.0;
    let mut probs = vec![0.0; channels];
    for (p, &t) in target.iter().enumerate() {
        if t == LabelMask::IGNORE {
            continue;
        }
        let t = t as usize;
        let max = (0..channels)
            .map(|k| logits[k * pixels + p])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (k, pr) in probs.iter_mut().enumerate() {
            *pr = (logits[k * pixels + p] - max).exp();
            z += *pr;
        }
        total += z.ln() + max - logits[t * pixels + p];
        if let Some(g) = grad.as_deref_mut() {
            for (k, pr) in probs.iter().enumerate() {
                let onehot = if k == t { 1.0 } else { 0.0 };
                g[k * pixels + p] += (pr / z - onehot) * inv;
            }
        }
    }
    (total * inv, counted)
}

/// Per-class min-max of `logits`, with classes where `keep[c]` is false set to zero.
pub(crate) fn masked_minmax(logits: &[f64], pixels: usize, keep: &[bool]) -> Vec<f64> {
    let mut out = logits.to_vec();
    for (c, row) in out.chunks_mut(pixels).enumerate() {
        if keep[c] {
            crate::norm::minmax_in_place(row);
        } else {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    out
}

/// L1 between the masked min-max normalized CAM and `target`, with logit gradient.
///
/// The normalization is differentiated through: with `a`/`b` the argmin/argmax
/// of a class row and `R` its range, `dn_p/dz_q = (δ_pq - δ_qa)/R - n_p (δ_qb - δ_qa)/R`.
pub(crate) fn rec_loss_grad(
    logits: &[f64],
    pixels: usize,
    keep: &[bool],
    target: &[f64],
    grad: Option<&mut [f64]>,
) -> f64 {
    let normed = masked_minmax(logits, pixels, keep);
    let count = normed.len() as f64;
    let total: f64 = normed.iter().zip(target).map(|(a, b)| (a - b).abs()).sum();
    if let Some(g) = grad {
        for (c, &k) in keep.iter().enumerate() {
            if !k {
                continue;
            }
            let row = &logits[c * pixels..(c + 1) * pixels];
            let (mut a, mut b) = (0, 0);
            for (p, &v) in row.iter().enumerate() {
                if v < row[a] {
                    a = p;
                }
                if v > row[b] {
                    b = p;
                }
            }
            let range = row[b] - row[a];
            if !(range > 0.0) {
                continue;
            }
            let n = &normed[c * pixels..(c + 1) * pixels];
            let t = &target[c * pixels..(c + 1) * pixels];
            let gs = &mut g[c * pixels..(c + 1) * pixels];
            let (mut sum_e, mut sum_en) = (0.0, 0.0);
            for p in 0..pixels {
                let e = sign(n[p] - t[p]) / count;
                gs[p] += e / range;
                sum_e += e;
                sum_en += e * n[p];
            }
            gs[a] += (-sum_e + sum_en) / range;
            gs[b] -= sum_en / range;
        }
    }
    total / count
}
