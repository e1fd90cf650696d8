//! Proxy segmentation labels from web-video frames.
//!
//! Frames are filtered by classifier scores, per-frame localization maps are
//! fused across flip and rescale variants, thresholded into class masks, and
//! carried frame to frame along optical flow so that the last frame of a
//! window holds the union of every frame's activated region. Aggregated
//! masks and a saliency background become a label map, and label maps are
//! scored by mean intersection-over-union.
//!
//! The crate is `no_std` and only needs `alloc`; file formats and the command
//! line live in the `flowagg` crate.
#![no_std]

extern crate alloc;

pub mod cam_fusion;
pub mod error;
pub mod eval;
pub mod flow;
pub mod proxy_gt;
pub mod raster;
pub mod synth;
pub mod temporal_filter;
pub mod warp_aggregate;

pub use cam_fusion::{ActivationMap, TransformTag};
pub use error::{Error, Result};
pub use eval::{ConfusionMatrix, MiouReport};
pub use flow::{FlowField, NonFinitePolicy};
pub use proxy_gt::{BackgroundConfig, ConflictPolicy};
pub use raster::{ClassId, LabelMap, UnitRaster, BACKGROUND, IGNORE};
pub use temporal_filter::{FilterConfig, LabelSet, PickPolicy, ScoreVector, Window, WindowOverlap};
pub use warp_aggregate::{AggregateConfig, ClassMask, SoftMask, WarpMode};
