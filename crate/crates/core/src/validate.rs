//! Invariant checks for the domain types.

use std::fmt;

use crate::types::{FeatureStack, LabelMask, RgbImage, ScoreMap};

/// Where a violation was found. Indices follow the type's own layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Location {
    /// `(channel or class, row, column)`
    Cell(usize, usize, usize),
    /// `(layer, channel, row, column)`
    LayerCell(usize, usize, usize, usize),
    Whole,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    NonFinite,
    OutOfUnitRange,
    LabelOutOfRange(i32),
    LayerSizeMismatch,
    NoLayers,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub location: Location,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match &self.kind {
            ViolationKind::NonFinite => "non-finite value".to_string(),
            ViolationKind::OutOfUnitRange => "value outside [0, 1]".to_string(),
            ViolationKind::LabelOutOfRange(l) => format!("label {l} out of range"),
            ViolationKind::LayerSizeMismatch => "layer size differs from stack size".to_string(),
            ViolationKind::NoLayers => "no layers".to_string(),
        };
        match self.location {
            Location::Cell(c, i, j) => write!(f, "{what} at ({c}, {i}, {j})"),
            Location::LayerCell(l, c, i, j) => write!(f, "{what} at layer {l} ({c}, {i}, {j})"),
            Location::Whole => write!(f, "{what}"),
        }
    }
}

impl std::error::Error for Violation {}

/// Reports the first violated invariant, in storage order.
pub trait Validate {
    fn validate(&self) -> Result<(), Violation>;
}

fn unravel(idx: usize, h: usize, w: usize) -> (usize, usize, usize) {
    let plane = h * w;
    (idx / plane, (idx % plane) / w, idx % w)
}

impl Validate for ScoreMap {
    fn validate(&self) -> Result<(), Violation> {
        let (h, w) = (self.height(), self.width());
        for (idx, &v) in self.as_slice().iter().enumerate() {
            let kind = if !v.is_finite() {
                ViolationKind::NonFinite
            } else if self.is_probabilistic() && !(0.0..=1.0).contains(&v) {
                ViolationKind::OutOfUnitRange
            } else {
                continue;
            };
            let (c, i, j) = unravel(idx, h, w);
            return Err(Violation {
                kind,
                location: Location::Cell(c, i, j),
            });
        }
        Ok(())
    }
}

impl Validate for FeatureStack {
    fn validate(&self) -> Result<(), Violation> {
        if self.layers().is_empty() {
            return Err(Violation {
                kind: ViolationKind::NoLayers,
                location: Location::Whole,
            });
        }
        for (l, layer) in self.layers().iter().enumerate() {
            if layer.height() != self.height() || layer.width() != self.width() {
                return Err(Violation {
                    kind: ViolationKind::LayerSizeMismatch,
                    location: Location::LayerCell(l, 0, 0, 0),
                });
            }
            if let Some(idx) = layer.as_slice().iter().position(|v| !v.is_finite()) {
                let (c, i, j) = unravel(idx, layer.height(), layer.width());
                return Err(Violation {
                    kind: ViolationKind::NonFinite,
                    location: Location::LayerCell(l, c, i, j),
                });
            }
        }
        Ok(())
    }
}

impl Validate for LabelMask {
    fn validate(&self) -> Result<(), Violation> {
        let max = self.classes() as i32;
        for (idx, &l) in self.as_slice().iter().enumerate() {
            if l < LabelMask::IGNORE || l > max {
                return Err(Violation {
                    kind: ViolationKind::LabelOutOfRange(l),
                    location: Location::Cell(0, idx / self.width(), idx % self.width()),
                });
            }
        }
        Ok(())
    }
}

impl Validate for RgbImage {
    fn validate(&self) -> Result<(), Violation> {
        for (idx, &v) in self.as_slice().iter().enumerate() {
            let kind = if !v.is_finite() {
                ViolationKind::NonFinite
            } else if !(0.0..=1.0).contains(&v) {
                ViolationKind::OutOfUnitRange
            } else {
                continue;
            };
            let p = idx / 3;
            return Err(Violation {
                kind,
                location: Location::Cell(idx % 3, p / self.width(), p % self.width()),
            });
        }
        Ok(())
    }
}
