//! Run configuration: every threshold and policy, loadable from JSON and
//! overridable from the command line.

use std::path::Path;

use flowagg_core::{
    AggregateConfig, BackgroundConfig, ClassId, ConflictPolicy, FilterConfig, NonFinitePolicy,
    PickPolicy, WarpMode, WindowOverlap,
};
use serde::{Deserialize, Serialize};

use crate::error::{FormatError, Result};
use crate::manifest::read_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub tau: f32,
    pub k: usize,
    pub theta_f: f32,
    pub theta_b: f32,
    pub warp_mode: WarpMode,
    pub binarize_threshold: f32,
    pub conflict_policy: ConflictPolicy,
    pub pick_policy: PickPolicy,
    pub window_overlap: WindowOverlap,
    /// Replace non-finite flow vectors with zero instead of failing.
    pub zero_fill_nan: bool,
    pub workers: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            tau: 0.9,
            k: 5,
            theta_f: 0.2,
            theta_b: 0.12,
            warp_mode: WarpMode::ForwardSplat,
            binarize_threshold: 0.5,
            conflict_policy: ConflictPolicy::Ignore,
            pick_policy: PickPolicy::First,
            window_overlap: WindowOverlap::All,
            zero_fill_nan: false,
            workers: 4,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Config = read_json(path)?;
        cfg.validate().map_err(|e| FormatError::invalid(path, e))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> flowagg_core::Result<()> {
        self.filter(ClassId(1))?;
        self.aggregate().validate()?;
        self.background().validate()?;
        if self.workers == 0 {
            return Err(flowagg_core::Error::InvalidParameter {
                name: "workers",
                value: 0.0,
            });
        }
        Ok(())
    }

    pub fn filter(&self, search_class: ClassId) -> flowagg_core::Result<FilterConfig> {
        Ok(FilterConfig::new(self.tau, self.k, search_class)?.with_overlap(self.window_overlap))
    }

    pub fn aggregate(&self) -> AggregateConfig {
        AggregateConfig {
            theta_f: self.theta_f,
            warp_mode: self.warp_mode,
            binarize_threshold: self.binarize_threshold,
        }
    }

    pub fn background(&self) -> BackgroundConfig {
        BackgroundConfig {
            theta_b: self.theta_b,
            conflict_policy: self.conflict_policy,
        }
    }

    pub fn nan_policy(&self) -> NonFinitePolicy {
        if self.zero_fill_nan {
            NonFinitePolicy::ZeroFill
        } else {
            NonFinitePolicy::Reject
        }
    }
}
