//! Incremental warp-and-union of per-frame class masks.
//!
//! The running mask is carried from frame `i` to frame `i + 1` along the
//! optical flow `i -> i + 1`, re-binarized, and OR-ed with the mask of
//! frame `i + 1`:
//!
//! ```text
//! agg_1     = mask_1
//! agg_{i+1} = mask_{i+1} | binarize(warp(agg_i, flow_{i -> i+1}))
//! ```
//!
//! Folding over all K frames yields a mask in frame-K coordinates holding
//! the activated regions of every frame.

use alloc::collections::btree_map::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::cam_fusion::ActivationMap;
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::raster::{check_dims, check_len, same_dims, ClassId};

/// Binary per-class occupancy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMask {
    class_id: ClassId,
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl ClassMask {
    pub fn new(class_id: ClassId, width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_len(check_dims(width, height)?, bits.len())?;
        Ok(Self {
            class_id,
            width,
            height,
            bits,
        })
    }

    pub fn empty(class_id: ClassId, width: usize, height: usize) -> Result<Self> {
        let n = check_dims(width, height)?;
        Ok(Self {
            class_id,
            width,
            height,
            bits: vec![false; n],
        })
    }

    pub fn from_fn(
        class_id: ClassId,
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        check_dims(width, height)?;
        let bits = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Ok(Self {
            class_id,
            width,
            height,
            bits,
        })
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

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.bits[y * self.width + x] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn with_class(mut self, class_id: ClassId) -> Self {
        self.class_id = class_id;
        self
    }

    /// Pixelwise OR; the result keeps `self`'s class.
    pub fn union(&self, other: &ClassMask) -> Result<ClassMask> {
        same_dims(self.dims(), other.dims())?;
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a | b).collect();
        Ok(ClassMask { bits, ..self.clone() })
    }

    /// Number of pixels where the two masks differ.
    pub fn disagreement(&self, other: &ClassMask) -> Result<usize> {
        same_dims(self.dims(), other.dims())?;
        Ok(self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count())
    }

    /// True when every set pixel of `other` is also set here.
    pub fn covers(&self, other: &ClassMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| a || !b)
    }
}

/// Warped occupancy before re-binarization, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    class_id: ClassId,
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl SoftMask {
    pub fn class_id(&self) -> ClassId {
        self.class_id
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

    /// `1` where the value reaches `threshold`.
    pub fn binarize(&self, threshold: f32) -> ClassMask {
        ClassMask {
            class_id: self.class_id,
            width: self.width,
            height: self.height,
            bits: self.values.iter().map(|&v| v >= threshold).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum WarpMode {
    /// Scatter each set source pixel to the four pixels around `q + flow(q)`.
    #[default]
    ForwardSplat,
    /// Gather `mask(p - flow(p))` for every target pixel.
    BackwardSample,
}

/// Thresholds for building and propagating masks. Flow that points outside
/// the image drops its weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateConfig {
    pub theta_f: f32,
    pub warp_mode: WarpMode,
    pub binarize_threshold: f32,
}

impl Default for AggregateConfig {
    fn default() -> Self {
        Self {
            theta_f: 0.2,
            warp_mode: WarpMode::ForwardSplat,
            binarize_threshold: 0.5,
        }
    }
}

impl AggregateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta_f) {
            return Err(Error::InvalidParameter {
                name: "theta_f",
                value: self.theta_f.into(),
            });
        }
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return Err(Error::InvalidParameter {
                name: "binarize_threshold",
                value: self.binarize_threshold.into(),
            });
        }
        Ok(())
    }
}

/// `1` where the activation reaches `theta_f` (inclusive).
pub fn threshold_mask(map: &ActivationMap, theta_f: f32) -> ClassMask {
    ClassMask {
        class_id: map.class_id(),
        width: map.width(),
        height: map.height(),
        bits: map.values().iter().map(|&v| v >= theta_f).collect(),
    }
}

pub fn warp(mask: &ClassMask, flow: &FlowField, cfg: &AggregateConfig) -> Result<SoftMask> {
    same_dims(mask.dims(), flow.dims())?;
    let values = match cfg.warp_mode {
        WarpMode::ForwardSplat => forward_splat(mask, flow),
        WarpMode::BackwardSample => backward_sample(mask, flow),
    };
    Ok(SoftMask {
        class_id: mask.class_id,
        width: mask.width,
        height: mask.height,
        values,
    })
}

fn forward_splat(mask: &ClassMask, flow: &FlowField) -> Vec<f32> {
    let (w, h) = mask.dims();
    let mut out = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let (du, dv) = flow.at(x, y);
            let tx = x as f32 + du;
            let ty = y as f32 + dv;
            let x0 = libm::floorf(tx);
            let y0 = libm::floorf(ty);
            let fx = tx - x0;
            let fy = ty - y0;
            let taps = [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x0 + 1.0, y0, fx * (1.0 - fy)),
                (x0, y0 + 1.0, (1.0 - fx) * fy),
                (x0 + 1.0, y0 + 1.0, fx * fy),
            ];
            for (px, py, wt) in taps {
                if wt > 0.0 && px >= 0.0 && py >= 0.0 && px < w as f32 && py < h as f32 {
                    out[py as usize * w + px as usize] += wt;
                }
            }
        }
    }
    for v in &mut out {
        *v = v.min(1.0);
    }
    out
}

fn backward_sample(mask: &ClassMask, flow: &FlowField) -> Vec<f32> {
    let (w, h) = mask.dims();
    let tap = |px: f32, py: f32| -> f32 {
        if px >= 0.0 && py >= 0.0 && px < w as f32 && py < h as f32 && mask.get(px as usize, py as usize) {
            1.0
        } else {
            0.0
        }
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (du, dv) = flow.at(x, y);
            let sx = x as f32 - du;
            let sy = y as f32 - dv;
            let x0 = libm::floorf(sx);
            let y0 = libm::floorf(sy);
            let fx = sx - x0;
            let fy = sy - y0;
            let top = tap(x0, y0) * (1.0 - fx) + tap(x0 + 1.0, y0) * fx;
            let bottom = tap(x0, y0 + 1.0) * (1.0 - fx) + tap(x0 + 1.0, y0 + 1.0) * fx;
            out.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
        }
    }
    out
}

/// One aggregation step: `cur | binarize(warp(prev_agg, flow))`.
pub fn union_step(
    prev_agg: &ClassMask,
    flow: &FlowField,
    cur: &ClassMask,
    cfg: &AggregateConfig,
) -> Result<ClassMask> {
    if prev_agg.class_id != cur.class_id {
        return Err(Error::ClassMismatch(prev_agg.class_id, cur.class_id));
    }
    same_dims(cur.dims(), prev_agg.dims())?;
    let carried = warp(prev_agg, flow, cfg)?.binarize(cfg.binarize_threshold);
    cur.union(&carried)
}

/// Folds `union_step` over the sequence; `flows[i]` maps frame `i` to `i + 1`.
pub fn aggregate_sequence(
    masks: &[ClassMask],
    flows: &[FlowField],
    cfg: &AggregateConfig,
) -> Result<ClassMask> {
    let (first, rest) = masks.split_first().ok_or(Error::EmptyInput)?;
    if flows.len() != rest.len() {
        return Err(Error::LengthMismatch {
            expected: rest.len(),
            got: flows.len(),
        });
    }
    rest.iter()
        .zip(flows)
        .try_fold(first.clone(), |agg, (cur, flow)| union_step(&agg, flow, cur, cfg))
}

/// Runs `aggregate_sequence` independently for every class, sharing the
/// flows.
pub fn aggregate_multiclass(
    per_class: &BTreeMap<ClassId, Vec<ClassMask>>,
    flows: &[FlowField],
    cfg: &AggregateConfig,
) -> Result<BTreeMap<ClassId, ClassMask>> {
    per_class
        .iter()
        .map(|(&class, masks)| {
            if let Some(m) = masks.iter().find(|m| m.class_id != class) {
                return Err(Error::ClassMismatch(class, m.class_id));
            }
            Ok((class, aggregate_sequence(masks, flows, cfg)?))
        })
        .collect()
}
