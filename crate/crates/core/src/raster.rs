//! Dense single-channel rasters shared by every stage.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Label value for background pixels.
pub const BACKGROUND: u8 = 0;
/// Label value excluded from training and evaluation.
pub const IGNORE: u8 = 255;

/// Class index, PASCAL VOC numbering: 0 is background, 255 is reserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ClassId(pub u8);

impl ClassId {
    pub const BACKGROUND: ClassId = ClassId(BACKGROUND);

    pub fn is_foreground(self) -> bool {
        self.0 != BACKGROUND && self.0 != IGNORE
    }

    pub(crate) fn foreground(self) -> Result<Self> {
        if self.is_foreground() {
            Ok(self)
        } else {
            Err(Error::InvalidClass(self.0))
        }
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub(crate) fn check_dims(width: usize, height: usize) -> Result<usize> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions {
            width: width as i64,
            height: height as i64,
        });
    }
    width.checked_mul(height).ok_or(Error::InvalidDimensions {
        width: width as i64,
        height: height as i64,
    })
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::BufferLength { expected, got })
    }
}

pub(crate) fn check_unit(values: &[f32]) -> Result<()> {
    match values.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(index) => Err(Error::ValueOutOfRange {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

pub(crate) fn same_dims(expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Row-major raster with every value in `[0, 1]`, e.g. a saliency map.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRaster {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl UnitRaster {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        check_len(check_dims(width, height)?, values.len())?;
        check_unit(&values)?;
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        let n = check_dims(width, height)?;
        Self::new(width, height, vec![value; n])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

/// Per-pixel class-index map: `BACKGROUND`, foreground classes, or `IGNORE`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        check_len(check_dims(width, height)?, labels.len())?;
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Result<Self> {
        let n = check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            labels: vec![label; n],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn into_labels(self) -> Vec<u8> {
        self.labels
    }
}
