//! PNG codecs for label masks and RGB images.
//!
//! Masks are 8-bit grayscale: 255 is the ignore label, `0..=C` are labels.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage as PngRgb};

use crate::error::{Error, Result};
use crate::types::{LabelMask, RgbImage};

pub const IGNORE_VALUE: u8 = 255;

fn image_err(e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::Image(other.to_string()),
    }
}

pub fn encode_mask(mask: &LabelMask) -> Result<GrayImage> {
    if mask.classes() >= IGNORE_VALUE as usize {
        return Err(Error::Invalid(format!(
            "{} classes do not fit an 8-bit mask",
            mask.classes()
        )));
    }
    let mut img = GrayImage::new(mask.width() as u32, mask.height() as u32);
    for (idx, &l) in mask.as_slice().iter().enumerate() {
        let v = match l {
            LabelMask::IGNORE => IGNORE_VALUE,
            l if (0..=mask.classes() as i32).contains(&l) => l as u8,
            l => return Err(Error::Invalid(format!("label {l} cannot be stored"))),
        };
        img.put_pixel((idx % mask.width()) as u32, (idx / mask.width()) as u32, Luma([v]));
    }
    Ok(img)
}

/// Decodes a mask; any value in `(classes, 255)` is rejected.
pub fn decode_mask(img: &GrayImage, classes: usize) -> Result<LabelMask> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut labels = Vec::with_capacity(w * h);
    for Luma([v]) in img.pixels() {
        labels.push(match *v {
            IGNORE_VALUE => LabelMask::IGNORE,
            v if (v as usize) <= classes => v as i32,
            v => {
                return Err(Error::Invalid(format!(
                    "mask value {v} exceeds class count {classes}"
                )))
            }
        });
    }
    LabelMask::new(classes, h, w, labels)
}

pub fn write_mask(mask: &LabelMask, path: &Path) -> Result<()> {
    encode_mask(mask)?
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(image_err)
}

/// Reads a mask. With `classes = None` the class count is the largest non-ignore value.
pub fn read_mask(path: &Path, classes: Option<usize>) -> Result<LabelMask> {
    let img = image::open(path).map_err(image_err)?.into_luma8();
    let classes = classes.unwrap_or_else(|| {
        img.pixels()
            .map(|p| p.0[0])
            .filter(|&v| v != IGNORE_VALUE)
            .max()
            .unwrap_or(0) as usize
    });
    decode_mask(&img, classes)
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(image_err)?.into_rgb8();
    let data = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    RgbImage::new(img.height() as usize, img.width() as usize, data)
}

/// Writes an image, rounding intensities to 8 bits.
pub fn write_rgb(image: &RgbImage, path: &Path) -> Result<()> {
    let mut out = PngRgb::new(image.width() as u32, image.height() as u32);
    for i in 0..image.height() {
        for j in 0..image.width() {
            let p = image.pixel(i, j).map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8);
            out.put_pixel(j as u32, i as u32, Rgb(p));
        }
    }
    out.save_with_format(path, image::ImageFormat::Png)
        .map_err(image_err)
}
