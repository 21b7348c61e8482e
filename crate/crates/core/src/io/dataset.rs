//! Directory layouts for training sets and mix batches.
//!
//! A training set is a directory with `dataset.json`:
//!
//! ```json
//! {"classes": 3,
//!  "samples": [{"image": "0.png", "features": ["0.l0.sft", "0.l1.sft"],
//!               "labels": [1, 3], "truth": "0.mask.png"}]}
//! ```
//!
//! `labels` are 1-based class ids; `truth` is optional. A mix batch is a
//! directory with `batch.json` listing `{"image", "ep", "rs"}` per item.
//! Paths are relative to the directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixer::{MixItem, MixedSample};
use crate::seedloop::TrainSample;
use crate::types::FeatureStack;

use super::png::{read_mask, read_rgb, write_mask, write_rgb};
use super::tensor::{read_tensor, write_tensor, Tensor};

pub const DATASET_MANIFEST: &str = "dataset.json";
pub const BATCH_MANIFEST: &str = "batch.json";
pub const MIXED_MANIFEST: &str = "mixed.json";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SampleEntry {
    pub image: String,
    pub features: Vec<String>,
    pub labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub classes: usize,
    pub samples: Vec<SampleEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BatchEntry {
    pub image: String,
    pub ep: String,
    pub rs: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BatchManifest {
    pub items: Vec<BatchEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MixedEntry {
    pub image: String,
    pub seg: String,
    pub rs: String,
    pub source: usize,
    pub destination: usize,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn within(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

/// Loads every sample of a training set and returns it with its class count.
pub fn load_dataset(dir: &Path) -> Result<(usize, Vec<TrainSample>)> {
    let manifest: DatasetManifest = read_json(&within(dir, DATASET_MANIFEST))?;
    let classes = manifest.classes;
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for entry in manifest.samples {
        let image = read_rgb(&within(dir, &entry.image))?;
        let layers = entry
            .features
            .iter()
            .map(|f| Ok(read_tensor(&within(dir, f))?.into_feature_layer()?))
            .collect::<Result<Vec<_>>>()?;
        let stack = FeatureStack::new(layers, image.height(), image.width())?;
        let mut labels = vec![false; classes];
        for &c in &entry.labels {
            if c == 0 || c > classes {
                return Err(Error::Invalid(format!(
                    "{}: class label {c} outside 1..={classes}",
                    entry.image
                )));
            }
            labels[c - 1] = true;
        }
        let truth = entry
            .truth
            .as_ref()
            .map(|t| read_mask(&within(dir, t), Some(classes)))
            .transpose()?;
        samples.push(TrainSample {
            stack,
            image,
            labels,
            truth,
        });
    }
    Ok((classes, samples))
}

/// Writes `samples` in the layout read by [`load_dataset`].
pub fn save_dataset(dir: &Path, classes: usize, samples: &[TrainSample]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(samples.len());
    for (k, s) in samples.iter().enumerate() {
        let image = format!("{k:03}.png");
        write_rgb(&s.image, &within(dir, &image))?;
        let mut features = Vec::new();
        for (l, layer) in s.stack.layers().iter().enumerate() {
            let name = format!("{k:03}.l{l}.sft");
            write_tensor(&Tensor::from(layer), &within(dir, &name))?;
            features.push(name);
        }
        let truth = match &s.truth {
            Some(t) => {
                let name = format!("{k:03}.mask.png");
                write_mask(t, &within(dir, &name))?;
                Some(name)
            }
            None => None,
        };
        entries.push(SampleEntry {
            image,
            features,
            labels: (1..=classes).filter(|&c| s.labels[c - 1]).collect(),
            truth,
        });
    }
    write_json(
        &DatasetManifest {
            classes,
            samples: entries,
        },
        &within(dir, DATASET_MANIFEST),
    )
}

/// Loads a mix batch. EP maps are read as probabilistic.
pub fn load_mix_batch(dir: &Path) -> Result<Vec<MixItem>> {
    let manifest: BatchManifest = read_json(&within(dir, BATCH_MANIFEST))?;
    manifest
        .items
        .iter()
        .map(|e| {
            Ok(MixItem {
                image: read_rgb(&within(dir, &e.image))?,
                ep: read_tensor(&within(dir, &e.ep))?.into_score_map(true)?,
                rs: read_tensor(&within(dir, &e.rs))?.into_score_map(true)?,
            })
        })
        .collect()
}

/// Writes a mix batch in the layout read by [`load_mix_batch`].
pub fn save_mix_batch(dir: &Path, items: &[MixItem]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(items.len());
    for (k, item) in items.iter().enumerate() {
        let e = BatchEntry {
            image: format!("{k:03}.png"),
            ep: format!("{k:03}.ep.sft"),
            rs: format!("{k:03}.rs.sft"),
        };
        write_rgb(&item.image, &within(dir, &e.image))?;
        write_tensor(&Tensor::from(&item.ep), &within(dir, &e.ep))?;
        write_tensor(&Tensor::from(&item.rs), &within(dir, &e.rs))?;
        entries.push(e);
    }
    write_json(&BatchManifest { items: entries }, &within(dir, BATCH_MANIFEST))
}

/// Writes mixed samples with a `mixed.json` index.
pub fn save_mixed(dir: &Path, mixed: &[MixedSample]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(mixed.len());
    for (k, m) in mixed.iter().enumerate() {
        let e = MixedEntry {
            image: format!("mixed_{k:03}.png"),
            seg: format!("mixed_{k:03}.seg.sft"),
            rs: format!("mixed_{k:03}.rs.sft"),
            source: m.provenance.0,
            destination: m.provenance.1,
        };
        write_rgb(&m.image, &within(dir, &e.image))?;
        write_tensor(&Tensor::from(&m.seg_target), &within(dir, &e.seg))?;
        write_tensor(&Tensor::from(&m.rs_target), &within(dir, &e.rs))?;
        entries.push(e);
    }
    write_json(&entries, &within(dir, MIXED_MANIFEST))
}
