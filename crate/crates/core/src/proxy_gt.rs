//! Composition of aggregated class masks and a saliency-derived background
//! into one proxy label map.

use alloc::collections::btree_map::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::{same_dims, ClassId, LabelMap, UnitRaster, BACKGROUND, IGNORE};
use crate::warp_aggregate::ClassMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ConflictPolicy {
    /// Pixels claimed by several classes are ignored.
    #[default]
    Ignore,
    /// The claiming class with the highest score wins; equal scores go to
    /// the lower class index.
    PriorityByScore,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundConfig {
    pub theta_b: f32,
    pub conflict_policy: ConflictPolicy,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self {
            theta_b: 0.12,
            conflict_policy: ConflictPolicy::Ignore,
        }
    }
}

impl BackgroundConfig {
    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.theta_b) {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "theta_b",
                value: self.theta_b.into(),
            })
        }
    }
}

/// Pixels whose saliency is strictly lower than `theta_b`.
pub fn background_mask(saliency: &UnitRaster, theta_b: f32) -> ClassMask {
    let bits = saliency.values().iter().map(|&s| s < theta_b).collect();
    // dims come from a validated raster
    ClassMask::new(ClassId::BACKGROUND, saliency.width(), saliency.height(), bits)
        .expect("saliency raster has valid dimensions")
}

/// Per pixel: a sole claiming class wins; several claims resolve by policy;
/// unclaimed background is `BACKGROUND`; everything else is `IGNORE`.
/// Foreground claims take precedence over background.
pub fn compose(
    agg: &BTreeMap<ClassId, ClassMask>,
    bg: &ClassMask,
    cfg: &BackgroundConfig,
    tie_scores: Option<&BTreeMap<ClassId, f32>>,
) -> Result<LabelMap> {
    let mut claims: Vec<(ClassId, &ClassMask, f32)> = Vec::with_capacity(agg.len());
    for mask in agg.values() {
        let class = mask.class_id().foreground()?;
        same_dims(bg.dims(), mask.dims())?;
        let score = match cfg.conflict_policy {
            ConflictPolicy::Ignore => 0.0,
            ConflictPolicy::PriorityByScore => *tie_scores
                .and_then(|s| s.get(&class))
                .ok_or(Error::MissingScores(class))?,
        };
        claims.push((class, mask, score));
    }

    let labels = bg
        .bits()
        .iter()
        .enumerate()
        .map(|(i, &is_bg)| {
            let mut winner: Option<(ClassId, f32)> = None;
            let mut contested = false;
            for &(class, mask, score) in &claims {
                if !mask.bits()[i] {
                    continue;
                }
                match winner {
                    None => winner = Some((class, score)),
                    Some((_, best)) => {
                        contested = true;
                        // claims iterate in ascending class order, so ties keep the lower id
                        if score > best {
                            winner = Some((class, score));
                        }
                    }
                }
            }
            match winner {
                Some(_) if contested && cfg.conflict_policy == ConflictPolicy::Ignore => IGNORE,
                Some((class, _)) => class.0,
                None if is_bg => BACKGROUND,
                None => IGNORE,
            }
        })
        .collect();
    LabelMap::new(bg.width(), bg.height(), labels)
}
