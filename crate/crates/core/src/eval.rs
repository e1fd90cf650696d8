//! Confusion-matrix accumulation and mean intersection-over-union.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::{same_dims, LabelMap, IGNORE};

/// `counts[g * n + p]`: pixels with reference label `g` predicted as `p`.
/// Reference pixels labeled `IGNORE` are never counted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiouReport {
    /// `None` for classes absent from both reference and prediction.
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

impl ConfusionMatrix {
    /// `n_classes` counts background, so PASCAL VOC uses 21.
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.n_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds one image pair. Inputs are fully validated before any count
    /// changes.
    pub fn accumulate(&mut self, gt: &LabelMap, pred: &LabelMap) -> Result<()> {
        same_dims(gt.dims(), pred.dims())?;
        let n = self.n_classes;
        for (i, (&g, &p)) in gt.labels().iter().zip(pred.labels()).enumerate() {
            if g == IGNORE {
                continue;
            }
            if p == IGNORE {
                return Err(Error::IgnoreInPrediction(i));
            }
            for label in [g, p] {
                if label as usize >= n {
                    return Err(Error::LabelOutOfRange {
                        index: i,
                        label,
                        n_classes: n,
                    });
                }
            }
        }
        for (&g, &p) in gt.labels().iter().zip(pred.labels()) {
            if g != IGNORE {
                self.counts[g as usize * n + p as usize] += 1;
            }
        }
        Ok(())
    }

    /// Elementwise sum with another matrix of the same size.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.n_classes != self.n_classes {
            return Err(Error::LengthMismatch {
                expected: self.n_classes,
                got: other.n_classes,
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn miou(&self) -> Result<MiouReport> {
        if self.total() == 0 {
            return Err(Error::EmptyMatrix);
        }
        let n = self.n_classes;
        let per_class: Vec<Option<f64>> = (0..n)
            .map(|c| {
                let tp = self.get(c, c);
                let row: u64 = (0..n).map(|p| self.get(c, p)).sum();
                let col: u64 = (0..n).map(|g| self.get(g, c)).sum();
                let union = row + col - tp;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect();
        let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
        let mean = defined.iter().sum::<f64>() / defined.len() as f64;
        Ok(MiouReport { per_class, mean })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lm(labels: &[u8]) -> LabelMap {
        LabelMap::new(labels.len(), 1, labels.to_vec()).unwrap()
    }

    #[test]
    fn perfect_two_class() {
        let a = lm(&[0, 1, 1, 0, 1]);
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&a, &a).unwrap();
        assert_eq!((cm.get(0, 0), cm.get(1, 1), cm.get(0, 1), cm.get(1, 0)), (2, 3, 0, 0));
        let r = cm.miou().unwrap();
        assert_eq!(r.per_class, vec![Some(1.0), Some(1.0)]);
        assert_eq!(r.mean, 1.0);
    }

    #[test]
    fn all_ignored_leaves_matrix_unchanged() {
        let mut cm = ConfusionMatrix::new(3);
        cm.accumulate(&lm(&[IGNORE; 4]), &lm(&[1, 2, 0, 1])).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(3));
        assert_eq!(cm.miou(), Err(Error::EmptyMatrix));
    }

    #[test]
    fn partial_overlap_is_one_third() {
        // class 1: gt 4 px, pred 4 px, 2 shared
        let gt = lm(&[1, 1, 1, 1, 0, 0, 0, 0]);
        let pred = lm(&[0, 0, 1, 1, 1, 1, 0, 0]);
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&gt, &pred).unwrap();
        let r = cm.miou().unwrap();
        assert!((r.per_class[1].unwrap() - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_class_scores_zero_and_absent_class_excluded() {
        let mut cm = ConfusionMatrix::new(4);
        cm.accumulate(&lm(&[1, 1, 0]), &lm(&[2, 2, 0])).unwrap();
        let r = cm.miou().unwrap();
        assert_eq!(r.per_class, vec![Some(1.0), Some(0.0), Some(0.0), None]);
        assert!((r.mean - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn errors_leave_counts_alone() {
        let mut cm = ConfusionMatrix::new(2);
        assert_eq!(cm.accumulate(&lm(&[0, 1]), &lm(&[0, IGNORE])), Err(Error::IgnoreInPrediction(1)));
        assert!(matches!(
            cm.accumulate(&lm(&[0, 5]), &lm(&[0, 1])),
            Err(Error::LabelOutOfRange { label: 5, .. })
        ));
        assert!(matches!(cm.accumulate(&lm(&[0]), &lm(&[0, 1])), Err(Error::DimensionMismatch { .. })));
        assert_eq!(cm.total(), 0);
        assert!(cm.merge(&ConfusionMatrix::new(3)).is_err());
    }
}
