//! Fusion of localization maps computed on flipped and rescaled copies of a
//! frame.
//!
//! Each map is brought back to the reference geometry (un-flip, then
//! bilinear resize) and the per-pixel maximum over all variants is kept.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::{check_dims, check_len, check_unit, same_dims, ClassId};

/// Per-class localization map with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap {
    class_id: ClassId,
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl ActivationMap {
    pub fn new(class_id: ClassId, width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        check_len(check_dims(width, height)?, values.len())?;
        check_unit(&values)?;
        Ok(Self {
            class_id,
            width,
            height,
            values,
        })
    }

    pub fn filled(class_id: ClassId, width: usize, height: usize, value: f32) -> Result<Self> {
        let n = check_dims(width, height)?;
        Self::new(class_id, width, height, alloc::vec![value; n])
    }

    pub fn class_id(&self) -> ClassId {
        self.class_id
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

    pub fn with_class(mut self, class_id: ClassId) -> Self {
        self.class_id = class_id;
        self
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

/// Transform applied to the frame before the classifier saw it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformTag {
    flip: bool,
    scale: f32,
}

impl TransformTag {
    pub const IDENTITY: TransformTag = TransformTag {
        flip: false,
        scale: 1.0,
    };

    pub fn new(flip: bool, scale: f32) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter {
                name: "scale",
                value: scale.into(),
            });
        }
        Ok(Self { flip, scale })
    }

    pub fn flip(&self) -> bool {
        self.flip
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    /// Size of the transformed input along one axis, rounded half up.
    pub fn scaled_dim(&self, reference: usize) -> usize {
        let d = libm::floor(reference as f64 * f64::from(self.scale) + 0.5) as usize;
        d.max(1)
    }
}

/// Maps a reference-geometry map into the transformed geometry: resize to
/// the scaled dimensions, then mirror if flipped.
pub fn apply_transform(map: &ActivationMap, tag: TransformTag) -> ActivationMap {
    let (w, h) = (tag.scaled_dim(map.width), tag.scaled_dim(map.height));
    let mut values = resize_bilinear(&map.values, map.width, map.height, w, h);
    if tag.flip {
        mirror_columns(&mut values, w);
    }
    ActivationMap {
        class_id: map.class_id,
        width: w,
        height: h,
        values,
    }
}

/// Undoes `tag`, returning a map at `ref_w × ref_h`.
pub fn inverse_transform(
    map: &ActivationMap,
    tag: TransformTag,
    ref_w: usize,
    ref_h: usize,
) -> Result<ActivationMap> {
    check_dims(ref_w, ref_h)?;
    same_dims((tag.scaled_dim(ref_w), tag.scaled_dim(ref_h)), map.dims())?;
    let mut values = map.values.clone();
    if tag.flip {
        mirror_columns(&mut values, map.width);
    }
    let values = resize_bilinear(&values, map.width, map.height, ref_w, ref_h);
    Ok(ActivationMap {
        class_id: map.class_id,
        width: ref_w,
        height: ref_h,
        values,
    })
}

/// Per-pixel maximum over maps of one class and one geometry.
pub fn fuse_max(maps: &[ActivationMap]) -> Result<ActivationMap> {
    let (first, rest) = maps.split_first().ok_or(Error::EmptyInput)?;
    let mut out = first.clone();
    for m in rest {
        if m.class_id != first.class_id {
            return Err(Error::ClassMismatch(first.class_id, m.class_id));
        }
        same_dims(first.dims(), m.dims())?;
        for (o, &v) in out.values.iter_mut().zip(&m.values) {
            if v > *o {
                *o = v;
            }
        }
    }
    Ok(out)
}

fn mirror_columns(values: &mut [f32], width: usize) {
    for row in values.chunks_exact_mut(width) {
        row.reverse();
    }
}

/// Half-pixel-centered bilinear resize with edge clamping.
pub(crate) fn resize_bilinear(src: &[f32], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f32> {
    if (sw, sh) == (dw, dh) {
        return src.to_vec();
    }
    let xs: Vec<_> = (0..dw).map(|x| source_coord(x, sw, dw)).collect();
    let mut out = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        let (y0, y1, ty) = source_coord(y, sh, dh);
        for &(x0, x1, tx) in &xs {
            let top = lerp(src[y0 * sw + x0], src[y0 * sw + x1], tx);
            let bottom = lerp(src[y1 * sw + x0], src[y1 * sw + x1], tx);
            out.push(lerp(top, bottom, ty).clamp(0.0, 1.0));
        }
    }
    out
}

fn source_coord(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f32) {
    let scale = src_len as f64 / dst_len as f64;
    let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let i0 = libm::floor(s) as usize;
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, (s - i0 as f64) as f32)
}

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + (b - a) * t
}
