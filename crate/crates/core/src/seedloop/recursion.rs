//! Multi-epoch driver with per-epoch pseudo-mask quality.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{accumulate, miou, ConfusionTally};
use crate::types::{LabelMask, ScoreMap};

use super::{forward, prepare, step, LossReport, MixHook, ToyLearner, TrainSample};

/// One line of the training trace. mIoU fields are `None` without ground truth.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mixed: bool,
    pub l_cls: f64,
    pub l_seg: f64,
    pub l_rec: f64,
    pub l_seg_mix: f64,
    pub l_rec_mix: f64,
    pub miou_cam: Option<f64>,
    pub miou_rs: Option<f64>,
    pub miou_dec: Option<f64>,
    pub miou_cf: Option<f64>,
}

/// Labels a `C`-channel map: `argmax + 1` above `threshold`, else background.
fn foreground_labels(map: &ScoreMap, threshold: f64) -> LabelMask {
    let labels = (0..map.pixels())
        .map(|p| {
            let (c, v) = map.max_at(p);
            if v as f64 > threshold {
                c as i32 + 1
            } else {
                0
            }
        })
        .collect();
    LabelMask::new(map.classes(), map.height(), map.width(), labels).expect("labels within range")
}

fn argmax_labels(dec: &ScoreMap) -> LabelMask {
    let labels = (0..dec.pixels()).map(|p| dec.max_at(p).0 as i32).collect();
    LabelMask::new(dec.classes() - 1, dec.height(), dec.width(), labels).expect("labels within range")
}

/// Trains for `epochs` epochs and records losses and mask quality after each.
///
/// The dataset is reshuffled every epoch and split into `cfg.batch_size`
/// batches, one update per batch. Mixing is on for 1-based epochs
/// `>= mix_after` (pass `usize::MAX` to disable it) and for batches of at
/// least two samples. Shuffling and mixing draw from separate streams seeded
/// by `cfg.rng_seed`, and mix seeds are drawn whether or not mixing is on, so
/// runs that differ only in `mix_after` see the same batches.
pub fn run_recursion(
    learner: &mut ToyLearner,
    dataset: &[TrainSample],
    epochs: usize,
    cfg: &PipelineConfig,
    mix_after: usize,
) -> Result<Vec<EpochRecord>> {
    if epochs == 0 {
        return Err(Error::Invalid("at least one epoch is required".into()));
    }
    if dataset.is_empty() {
        return Err(Error::Invalid("empty dataset".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let prepared = dataset
        .iter()
        .map(|s| prepare(s, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    order_rng.set_stream(1);
    let mut mix_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    mix_rng.set_stream(2);
    let base_lr = learner.learning_rate;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut trace = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let lr = base_lr * (1.0 - (epoch - 1) as f64 / epochs as f64).powf(cfg.lr_power);
        let mixing = epoch >= mix_after;
        order.shuffle(&mut order_rng);
        let mut sum = LossReport::default();
        for chunk in order.chunks(cfg.batch_size) {
            let seed: u64 = mix_rng.gen();
            let hook = (mixing && chunk.len() >= 2).then_some(MixHook { seed });
            let batch: Vec<_> = chunk.iter().map(|&k| (&dataset[k], &prepared[k])).collect();
            let (r, _) = step(learner, &batch, cfg, hook, lr)?;
            let w = chunk.len() as f64;
            sum.l_cls += r.l_cls * w;
            sum.l_seg += r.l_seg * w;
            sum.l_rec += r.l_rec * w;
            sum.l_seg_mix += r.l_seg_mix * w;
            sum.l_rec_mix += r.l_rec_mix * w;
        }
        let n = dataset.len() as f64;
        let [m_cam, m_rs, m_dec, m_cf] = evaluate(learner, dataset, &prepared, cfg)?;
        trace.push(EpochRecord {
            epoch,
            mixed: mixing,
            l_cls: sum.l_cls / n,
            l_seg: sum.l_seg / n,
            l_rec: sum.l_rec / n,
            l_seg_mix: sum.l_seg_mix / n,
            l_rec_mix: sum.l_rec_mix / n,
            miou_cam: m_cam,
            miou_rs: m_rs,
            miou_dec: m_dec,
            miou_cf: m_cf,
        });
    }
    learner.learning_rate = base_lr;
    Ok(trace)
}

fn evaluate(
    learner: &ToyLearner,
    dataset: &[TrainSample],
    prepared: &[super::Prepared],
    cfg: &PipelineConfig,
) -> Result<[Option<f64>; 4]> {
    let classes = learner.classes();
    let mut tallies: [ConfusionTally; 4] = std::array::from_fn(|_| ConfusionTally::new(classes));
    let mut any = false;
    let threshold = (cfg.delta_fg + cfg.delta_bg) / 2.0;
    for (sample, prep) in dataset.iter().zip(prepared) {
        let Some(truth) = &sample.truth else { continue };
        any = true;
        let f = forward(learner, sample, prep, cfg)?;
        let preds = [
            foreground_labels(&f.cam, threshold),
            foreground_labels(&f.rs, threshold),
            argmax_labels(&f.dec),
            f.cf.resolve_ignore(),
        ];
        for (pred, tally) in preds.iter().zip(tallies.iter_mut()) {
            accumulate(pred, truth, tally)?;
        }
    }
    Ok(tallies.map(|t| any.then(|| miou(&t))))
}

/// Writes one JSON object per line.
pub fn write_trace(records: &[EpochRecord], mut out: impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
