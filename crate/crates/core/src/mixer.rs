//! Edge-predicted mixing: paste the certain foreground of one sample onto another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::types::{BoolGrid, RgbImage, ScoreMap};

/// One batch entry: the image, its EP-refined decoder map (`C + 1` channels,
/// background first) and its refined seed (`C` channels).
#[derive(Clone, Debug, PartialEq)]
pub struct MixItem {
    pub image: RgbImage,
    pub ep: ScoreMap,
    pub rs: ScoreMap,
}

/// Result of pasting item `source` onto item `destination`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedSample {
    pub image: RgbImage,
    pub seg_target: ScoreMap,
    pub rs_target: ScoreMap,
    /// `(source, destination)` indices within the batch.
    pub provenance: (usize, usize),
    /// Pixels taken from the source.
    pub mask: BoolGrid,
}

impl MixedSample {
    /// Foreground classes (1-based) that are the one-hot winner of at least
    /// one pixel of `seg_target`.
    pub fn class_labels(&self) -> Vec<usize> {
        let m = &self.seg_target;
        let mut present = vec![false; m.classes()];
        for p in 0..m.pixels() {
            if let Some(c) = m.pixel(p).position(|v| v == 1.0) {
                present[c] = true;
            }
        }
        (1..m.classes()).filter(|&c| present[c]).collect()
    }
}

/// Pixels where some foreground class (channel ≥ 1) exceeds `delta_fg`.
pub fn foreground_union(ep: &ScoreMap, cfg: &PipelineConfig) -> BoolGrid {
    let data = (0..ep.pixels())
        .map(|p| ep.pixel(p).skip(1).any(|v| v > cfg.delta_fg as f32))
        .collect();
    BoolGrid::from_vec(ep.height(), ep.width(), data).expect("pixel count matches")
}

fn select_map(src: &ScoreMap, dst: &ScoreMap, fg: &BoolGrid) -> Result<ScoreMap> {
    if !src.same_shape(dst) {
        return Err(Error::shape("mix map", src.shape_string(), dst.shape_string()));
    }
    let n = src.pixels();
    let mask = fg.as_slice();
    let data = src
        .as_slice()
        .iter()
        .zip(dst.as_slice())
        .enumerate()
        .map(|(idx, (&a, &b))| if mask[idx % n] { a } else { b })
        .collect();
    ScoreMap::new(
        src.classes(),
        src.height(),
        src.width(),
        data,
        src.is_probabilistic() && dst.is_probabilistic(),
    )
}

/// Hard composition of `src` over `dst` through `fg`.
pub fn paste(src: &MixItem, dst: &MixItem, fg: &BoolGrid) -> Result<MixedSample> {
    let (h, w) = (src.image.height(), src.image.width());
    let same = |a: (usize, usize)| a == (h, w);
    if !same((dst.image.height(), dst.image.width()))
        || !same((fg.height(), fg.width()))
        || !same((src.ep.height(), src.ep.width()))
        || !same((src.rs.height(), src.rs.width()))
    {
        return Err(Error::shape(
            "mix item size",
            format!("{h}x{w}"),
            format!(
                "dst image {}x{}, mask {}x{}",
                dst.image.height(),
                dst.image.width(),
                fg.height(),
                fg.width()
            ),
        ));
    }
    let mask = fg.as_slice();
    let image_data = src
        .image
        .as_slice()
        .iter()
        .zip(dst.image.as_slice())
        .enumerate()
        .map(|(idx, (&a, &b))| if mask[idx / 3] { a } else { b })
        .collect();
    Ok(MixedSample {
        image: RgbImage::new(h, w, image_data)?,
        seg_target: select_map(&src.ep, &dst.ep, fg)?,
        rs_target: select_map(&src.rs, &dst.rs, fg)?,
        provenance: (0, 0),
        mask: fg.clone(),
    })
}

/// Draws a partner `j != i` uniformly for every `i` in `0..batch`.
pub fn draw_partners(batch: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if batch < 2 {
        return Err(Error::BatchTooSmall(batch));
    }
    Ok((0..batch)
        .map(|i| {
            let r = rng.gen_range(0..batch - 1);
            if r >= i {
                r + 1
            } else {
                r
            }
        })
        .collect())
}

/// Mixes every item with a random partner. Deterministic per `seed`.
pub fn mix_batch(batch: &[MixItem], seed: u64, cfg: &PipelineConfig) -> Result<Vec<MixedSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let partners = draw_partners(batch.len(), &mut rng)?;
    batch
        .iter()
        .zip(&partners)
        .enumerate()
        .map(|(i, (item, &j))| {
            let fg = foreground_union(&item.ep, cfg);
            let mut mixed = paste(item, &batch[j], &fg)?;
            mixed.provenance = (i, j);
            Ok(mixed)
        })
        .collect()
}
