//! Per-frame label inference and selection of K-frame windows whose label
//! sets agree and include the class the video was searched for.

use alloc::collections::btree_map::BTreeMap;
use alloc::collections::btree_set::{self, BTreeSet};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::ClassId;

/// Classifier scores for one frame, one entry per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    frame_id: usize,
    scores: BTreeMap<ClassId, f32>,
}

impl ScoreVector {
    pub fn new(frame_id: usize, scores: impl IntoIterator<Item = (ClassId, f32)>) -> Result<Self> {
        let scores: BTreeMap<_, _> = scores.into_iter().collect();
        for &s in scores.values() {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::InvalidParameter {
                    name: "score",
                    value: s.into(),
                });
            }
        }
        Ok(Self { frame_id, scores })
    }

    pub fn frame_id(&self) -> usize {
        self.frame_id
    }

    pub fn get(&self, class: ClassId) -> Option<f32> {
        self.scores.get(&class).copied()
    }

    pub fn scores(&self) -> &BTreeMap<ClassId, f32> {
        &self.scores
    }
}

/// The set of classes a frame is taken to show.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelSet(BTreeSet<ClassId>);

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, class: ClassId) -> bool {
        self.0.insert(class)
    }

    pub fn contains(&self, class: ClassId) -> bool {
        self.0.contains(&class)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_subset(&self, other: &LabelSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.0.iter().copied()
    }
}

impl FromIterator<ClassId> for LabelSet {
    fn from_iter<I: IntoIterator<Item = ClassId>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl IntoIterator for LabelSet {
    type Item = ClassId;
    type IntoIter = btree_set::IntoIter<ClassId>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

/// Which qualifying windows `select_windows` reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum WindowOverlap {
    /// Every qualifying start frame.
    #[default]
    All,
    /// Greedy from the lowest start; a window may not share frames with the
    /// previously reported one.
    NonOverlapping,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub tau: f32,
    pub k: usize,
    pub search_class: ClassId,
    pub overlap: WindowOverlap,
}

impl FilterConfig {
    pub fn new(tau: f32, k: usize, search_class: ClassId) -> Result<Self> {
        let cfg = Self {
            tau,
            k,
            search_class,
            overlap: WindowOverlap::All,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_overlap(mut self, overlap: WindowOverlap) -> Self {
        self.overlap = overlap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidParameter {
                name: "tau",
                value: self.tau.into(),
            });
        }
        if self.k == 0 {
            return Err(Error::InvalidParameter {
                name: "k",
                value: 0.0,
            });
        }
        Ok(())
    }
}

/// `len` consecutive frames starting at `start`, all labeled `label_set`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub len: usize,
    pub label_set: LabelSet,
}

impl Window {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum PickPolicy {
    #[default]
    First,
    LongestRunCenter,
}

/// Classes scoring strictly above `tau`.
pub fn infer_labels(scores: &ScoreVector, tau: f32) -> LabelSet {
    scores
        .scores
        .iter()
        .filter(|(_, &s)| s > tau)
        .map(|(&c, _)| c)
        .collect()
}

/// All windows of exactly `cfg.k` frames with one shared, non-empty label
/// set that contains `cfg.search_class`, in ascending start order.
pub fn select_windows(labels: &[LabelSet], cfg: &FilterConfig) -> Vec<Window> {
    let k = cfg.k.max(1);
    let n = labels.len();
    if n < k {
        return Vec::new();
    }

    // run[i]: number of frames from i onwards equal to labels[i].
    let mut run = alloc::vec![1usize; n];
    for i in (0..n - 1).rev() {
        if labels[i] == labels[i + 1] {
            run[i] = run[i + 1] + 1;
        }
    }

    let mut out = Vec::new();
    let mut next_free = 0;
    for start in 0..=n - k {
        let set = &labels[start];
        if run[start] < k || set.is_empty() || !set.contains(cfg.search_class) {
            continue;
        }
        if cfg.overlap == WindowOverlap::NonOverlapping && start < next_free {
            continue;
        }
        next_free = start + k;
        out.push(Window {
            start,
            len: k,
            label_set: set.clone(),
        });
    }
    out
}

/// Deterministic single choice among qualifying windows.
///
/// `LongestRunCenter` groups windows that share a label set and touch or
/// overlap into runs, takes the run covering the most frames (earliest on
/// ties) and returns its window whose center is closest to the run center
/// (lower start on ties).
pub fn pick_one_window(windows: &[Window], policy: PickPolicy) -> Option<Window> {
    match policy {
        PickPolicy::First => windows.iter().min_by_key(|w| w.start).cloned(),
        PickPolicy::LongestRunCenter => {
            let mut sorted: Vec<&Window> = windows.iter().collect();
            sorted.sort_by_key(|w| w.start);

            let mut best: Option<(usize, &[&Window])> = None;
            let mut i = 0;
            while i < sorted.len() {
                let mut j = i + 1;
                let mut end = sorted[i].end();
                while j < sorted.len()
                    && sorted[j].start <= end
                    && sorted[j].label_set == sorted[i].label_set
                {
                    end = end.max(sorted[j].end());
                    j += 1;
                }
                let span = end - sorted[i].start;
                if best.is_none_or(|(s, _)| span > s) {
                    best = Some((span, &sorted[i..j]));
                }
                i = j;
            }

            let (span, run) = best?;
            // Doubled coordinates keep the centers integral.
            let run_center2 = 2 * run[0].start + span;
            run.iter()
                .min_by_key(|w| ((2 * w.start + w.len).abs_diff(run_center2), w.start))
                .map(|w| (*w).clone())
        }
    }
}
