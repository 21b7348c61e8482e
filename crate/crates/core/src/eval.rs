//! Per-class IoU, mIoU, and the false-positive / false-negative split.

use std::fmt::Write as _;
use std::ops::AddAssign;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::LabelMask;

/// Per-class pixel counts over a dataset. Class 0 is background.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfusionTally {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
}

impl ConfusionTally {
    /// Empty tally for background plus `classes` foreground classes.
    pub fn new(classes: usize) -> Self {
        ConfusionTally {
            tp: vec![0; classes + 1],
            fp: vec![0; classes + 1],
            fn_: vec![0; classes + 1],
        }
    }

    /// Number of tracked classes including background.
    pub fn len(&self) -> usize {
        self.tp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tp.is_empty()
    }

    fn grow(&mut self, n: usize) {
        if self.tp.len() < n {
            self.tp.resize(n, 0);
            self.fp.resize(n, 0);
            self.fn_.resize(n, 0);
        }
    }

    fn union(&self, c: usize) -> u64 {
        self.tp[c] + self.fp[c] + self.fn_[c]
    }

    /// IoU of each class, `None` where the class never occurs in prediction or truth.
    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.len())
            .map(|c| {
                let u = self.union(c);
                (u > 0).then(|| self.tp[c] as f64 / u as f64)
            })
            .collect()
    }
}

impl AddAssign<&ConfusionTally> for ConfusionTally {
    fn add_assign(&mut self, rhs: &ConfusionTally) {
        self.grow(rhs.len());
        for c in 0..rhs.len() {
            self.tp[c] += rhs.tp[c];
            self.fp[c] += rhs.fp[c];
            self.fn_[c] += rhs.fn_[c];
        }
    }
}

/// Adds one prediction/truth pair to `tally`.
///
/// Ignore labels in the prediction count as background; ignore labels in the
/// truth are skipped.
pub fn accumulate(pred: &LabelMask, truth: &LabelMask, tally: &mut ConfusionTally) -> Result<()> {
    if pred.height() != truth.height() || pred.width() != truth.width() {
        return Err(Error::shape(
            "prediction vs truth",
            format!("{}x{}", truth.height(), truth.width()),
            format!("{}x{}", pred.height(), pred.width()),
        ));
    }
    for (&p, &t) in pred.as_slice().iter().zip(truth.as_slice()) {
        if t == LabelMask::IGNORE {
            continue;
        }
        let p = if p == LabelMask::IGNORE { 0 } else { p };
        if p < 0 || t < 0 {
            return Err(Error::Invalid(format!("label out of range: pred {p}, truth {t}")));
        }
        let (p, t) = (p as usize, t as usize);
        tally.grow(p.max(t) + 1);
        if p == t {
            tally.tp[t] += 1;
        } else {
            tally.fp[p] += 1;
            tally.fn_[t] += 1;
        }
    }
    Ok(())
}

fn class_mean(tally: &ConfusionTally, numer: impl Fn(usize) -> u64) -> f64 {
    let (sum, count) = (0..tally.len())
        .filter(|&c| tally.union(c) > 0)
        .fold((0.0, 0usize), |(s, n), c| {
            (s + numer(c) as f64 / tally.union(c) as f64, n + 1)
        });
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Mean IoU over classes with a nonzero union; 0 when there are none.
pub fn miou(tally: &ConfusionTally) -> f64 {
    class_mean(tally, |c| tally.tp[c])
}

/// Class-mean `FP/(TP+FP+FN)` and `FN/(TP+FP+FN)` over the same classes as [`miou`].
pub fn fp_fn_rates(tally: &ConfusionTally) -> (f64, f64) {
    (
        class_mean(tally, |c| tally.fp[c]),
        class_mean(tally, |c| tally.fn_[c]),
    )
}

/// Machine-readable evaluation summary.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct EvalReport {
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

impl EvalReport {
    pub fn from_tally(tally: &ConfusionTally) -> Self {
        let (fp, fn_) = fp_fn_rates(tally);
        EvalReport {
            per_class_iou: tally.per_class_iou(),
            miou: miou(tally),
            fp,
            fn_,
        }
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<8} {:>8}", "class", "IoU");
        for (c, iou) in self.per_class_iou.iter().enumerate() {
            match iou {
                Some(v) => {
                    let _ = writeln!(s, "{:<8} {:>8.4}", c, v);
                }
                None => {
                    let _ = writeln!(s, "{:<8} {:>8}", c, "-");
                }
            }
        }
        let _ = writeln!(s, "{:<8} {:>8.4}", "mIoU", self.miou);
        let _ = writeln!(s, "{:<8} {:>8.4}", "FP", self.fp);
        let _ = writeln!(s, "{:<8} {:>8.4}", "FN", self.fn_);
        s
    }
}
