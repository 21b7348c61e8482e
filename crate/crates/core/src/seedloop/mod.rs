//! The recursive seeding loop: refinement of the CAM into a seed, the certain
//! filter, the training losses and a linear toy learner to drive them.

pub mod learner;
pub mod loss;
pub mod recursion;

pub use learner::{Design, Params, Term, ToyLearner};
pub use loss::{loss_cls, loss_rec, loss_seg};
pub use recursion::{run_recursion, write_trace, EpochRecord};

use serde::Serialize;

use crate::config::PipelineConfig;
use crate::edgepredict::{certain_class, ep_refine};
use crate::error::{Error, Result};
use crate::mixer::{mix_batch, MixItem};
use crate::pamr::{active_window, build_affinity, pamr_refine, pamr_refine_with_field, AffinityField};
use crate::scg::{hsc, scg_refine, scg_refine_with_volume, CorrelationVolume};
use crate::types::{FeatureStack, LabelMask, RgbImage, ScoreMap};

/// Refined seed: SCG, then PAMR restricted to the SCG's active region.
pub fn recurseed_step(
    cam: &ScoreMap,
    stack: &FeatureStack,
    image: &RgbImage,
    cfg: &PipelineConfig,
) -> Result<ScoreMap> {
    let scg = scg_refine(cam, stack, cfg)?;
    pamr_refine(&scg, image, &active_window(&scg), cfg)
}

/// Hard pseudo labels from a `C`-channel refined seed.
///
/// Foreground pixels get `argmax + 1`, background 0, the rest [`LabelMask::IGNORE`].
pub fn certain_filter(rs: &ScoreMap, cfg: &PipelineConfig) -> LabelMask {
    let labels = (0..rs.pixels())
        .map(|p| {
            let (c, v) = rs.max_at(p);
            if v > cfg.delta_fg as f32 {
                c as i32 + 1
            } else if v < cfg.delta_bg as f32 {
                0
            } else {
                LabelMask::IGNORE
            }
        })
        .collect();
    LabelMask::new(rs.classes(), rs.height(), rs.width(), labels).expect("labels within range")
}

/// One training image. `labels[c]` marks class `c + 1` as present.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub stack: FeatureStack,
    pub image: RgbImage,
    pub labels: Vec<bool>,
    /// Only used for metrics.
    pub truth: Option<LabelMask>,
}

/// Enables the mixed losses; `seed` drives partner selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MixHook {
    pub seed: u64,
}

/// Batch-mean losses of one update and the number of contributing pixels.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LossReport {
    pub l_cls: f64,
    pub l_seg: f64,
    pub l_rec: f64,
    pub l_seg_mix: f64,
    pub l_rec_mix: f64,
    pub seg_pixels: usize,
    pub seg_mix_pixels: usize,
    pub samples: usize,
}

impl LossReport {
    fn values(&self) -> [f64; 5] {
        [self.l_cls, self.l_seg, self.l_rec, self.l_seg_mix, self.l_rec_mix]
    }
}

/// Per-sample data that does not depend on the learner.
pub(crate) struct Prepared {
    pub design: Design,
    volume: Option<CorrelationVolume>,
    pub field: AffinityField,
}

pub(crate) fn prepare(sample: &TrainSample, cfg: &PipelineConfig) -> Result<Prepared> {
    let (h, w) = (sample.stack.height(), sample.stack.width());
    if (sample.image.height(), sample.image.width()) != (h, w) {
        return Err(Error::shape(
            "image vs features",
            format!("{h}x{w}"),
            format!("{}x{}", sample.image.height(), sample.image.width()),
        ));
    }
    if let Some(t) = &sample.truth {
        if (t.height(), t.width()) != (h, w) {
            return Err(Error::shape(
                "truth vs features",
                format!("{h}x{w}"),
                format!("{}x{}", t.height(), t.width()),
            ));
        }
    }
    let volume = if sample.stack.pixels() <= cfg.scg_volume_cap {
        Some(hsc(&sample.stack, cfg.epsilon)?)
    } else {
        None
    };
    Ok(Prepared {
        design: Design::from_stack(&sample.stack),
        volume,
        field: build_affinity(&sample.image, &cfg.dilations(), cfg)?,
    })
}

/// Everything derived from one forward pass.
pub(crate) struct Forward {
    /// Label-masked, per-class min-max normalized CAM.
    pub cam: ScoreMap,
    pub rs: ScoreMap,
    pub cf: LabelMask,
    /// Decoder softmax, background first.
    pub dec: ScoreMap,
}

pub(crate) fn forward(
    learner: &ToyLearner,
    sample: &TrainSample,
    prep: &Prepared,
    cfg: &PipelineConfig,
) -> Result<Forward> {
    let x = &prep.design;
    let (h, w, n) = (x.height(), x.width(), x.pixels());
    let classes = learner.classes();
    if sample.labels.len() != classes {
        return Err(Error::shape("class labels", classes, sample.labels.len()));
    }
    let cam = loss::masked_minmax(&learner.cam_logits(x), n, &sample.labels);
    let cam = ScoreMap::from_f64(classes, h, w, &cam, true)?;
    let scg = match &prep.volume {
        Some(v) => scg_refine_with_volume(&cam, v, cfg)?,
        None => scg_refine(&cam, &sample.stack, cfg)?,
    };
    let rs = pamr_refine_with_field(&scg, &prep.field, &active_window(&scg), cfg.pamr_iterations)?;
    let cf = certain_filter(&rs, cfg);
    let dec = softmax_channels(&learner.dec_logits(x), n);
    let dec = ScoreMap::from_f64(classes + 1, h, w, &dec, true)?;
    Ok(Forward { cam, rs, cf, dec })
}

fn softmax_channels(logits: &[f64], pixels: usize) -> Vec<f64> {
    let k = logits.len() / pixels;
    let mut out = vec![0.0; logits.len()];
    for p in 0..pixels {
        let max = (0..k).map(|c| logits[c * pixels + p]).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..k).map(|c| (logits[c * pixels + p] - max).exp()).sum();
        for c in 0..k {
            out[c * pixels + p] = (logits[c * pixels + p] - max).exp() / z;
        }
    }
    out
}

/// Hard labels for a mixed `C + 1` channel target: certain class or ignore.
fn mixed_seg_labels(seg: &ScoreMap, cfg: &PipelineConfig) -> LabelMask {
    let labels = (0..seg.pixels())
        .map(|p| certain_class(seg, p, cfg).map_or(LabelMask::IGNORE, |c| c as i32))
        .collect();
    LabelMask::new(seg.classes() - 1, seg.height(), seg.width(), labels).expect("labels within range")
}

/// One gradient step over `batch`; returns the losses and each sample's forward pass.
pub(crate) fn step(
    learner: &mut ToyLearner,
    batch: &[(&TrainSample, &Prepared)],
    cfg: &PipelineConfig,
    mix: Option<MixHook>,
    learning_rate: f64,
) -> Result<(LossReport, Vec<Forward>)> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    if mix.is_some() && batch.len() < 2 {
        return Err(Error::BatchTooSmall(batch.len()));
    }
    let mut grad = Params::zeros(learner.classes(), learner.channels());
    let mut report = LossReport {
        samples: batch.len(),
        ..LossReport::default()
    };
    let mut forwards = Vec::with_capacity(batch.len());
    let mut items = Vec::new();
    for &(sample, prep) in batch {
        let f = forward(learner, sample, prep, cfg)?;
        let x = &prep.design;
        let terms = [
            Term::Cls { labels: &sample.labels },
            Term::Seg { target: &f.cf },
            Term::Rec {
                keep: &sample.labels,
                target: &f.rs,
            },
        ];
        let slots = [&mut report.l_cls, &mut report.l_seg, &mut report.l_rec];
        for (term, slot) in terms.into_iter().zip(slots) {
            let (l, g) = learner.term_gradient(x, term)?;
            *slot += l;
            grad.add_scaled(&g, 1.0);
        }
        report.seg_pixels += f.cf.as_slice().iter().filter(|&&l| l != LabelMask::IGNORE).count();
        if mix.is_some() {
            let window = active_window(&f.dec);
            let refined = pamr_refine_with_field(&f.dec, &prep.field, &window, cfg.pamr_iterations)?;
            items.push(MixItem {
                image: sample.image.clone(),
                ep: ep_refine(&refined, cfg)?,
                rs: f.rs.clone(),
            });
        }
        forwards.push(f);
    }
    if let Some(hook) = mix {
        for m in mix_batch(&items, hook.seed, cfg)? {
            let (i, j) = m.provenance;
            let x = batch[i].1.design.paste(&batch[j].1.design, &m.mask)?;
            let seg = mixed_seg_labels(&m.seg_target, cfg);
            let mut keep = vec![false; learner.classes()];
            for c in m.class_labels() {
                keep[c - 1] = true;
            }
            let (l, g) = learner.term_gradient(&x, Term::Seg { target: &seg })?;
            report.l_seg_mix += l;
            grad.add_scaled(&g, 1.0);
            let (l, g) = learner.term_gradient(
                &x,
                Term::Rec {
                    keep: &keep,
                    target: &m.rs_target,
                },
            )?;
            report.l_rec_mix += l;
            grad.add_scaled(&g, 1.0);
            report.seg_mix_pixels += seg.as_slice().iter().filter(|&&l| l != LabelMask::IGNORE).count();
        }
    }
    let inv = 1.0 / batch.len() as f64;
    for v in [
        &mut report.l_cls,
        &mut report.l_seg,
        &mut report.l_rec,
        &mut report.l_seg_mix,
        &mut report.l_rec_mix,
    ] {
        *v *= inv;
    }
    if let Some(param) = grad.first_non_finite() {
        return Err(Error::NonFiniteGradient {
            param,
            losses: format!("{:?}", report.values()),
        });
    }
    learner.params.add_scaled(&grad, -learning_rate * inv);
    Ok((report, forwards))
}

/// One gradient step on the batch-mean of all loss terms.
///
/// Refined seeds, pseudo labels and mixed targets are computed from the
/// current parameters and held constant for the step.
pub fn train_epoch(
    learner: &mut ToyLearner,
    batch: &[TrainSample],
    cfg: &PipelineConfig,
    mix: Option<MixHook>,
) -> Result<LossReport> {
    let prepared = batch
        .iter()
        .map(|s| prepare(s, cfg))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<_> = batch.iter().zip(&prepared).collect();
    let lr = learner.learning_rate;
    step(learner, &pairs, cfg, mix, lr).map(|(r, _)| r)
}
