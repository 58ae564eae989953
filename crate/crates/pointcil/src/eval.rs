//! Confusion matrices, per-class IoU with base/novel/all aggregation, and
//! the directional class-overlap statistic.

use crate::cloud::{PointCloud, IGNORE_LABEL};
use crate::error::{Error, Result};
use crate::knn::KnnIndex;

/// C x C counts with rows = ground truth, columns = prediction, plus the
/// number of IGNORE-ground-truth points seen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
    pub ignored: u64,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        ConfusionMatrix {
            n_classes,
            counts: vec![0; n_classes * n_classes],
            ignored: 0,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn count(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.n_classes + pred]
    }

    pub fn add(&mut self, gt: usize, pred: usize, n: u64) {
        self.counts[gt * self.n_classes + pred] += n;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.ignored
    }

    /// Tally one batch of predictions against ground truth. IGNORE ground
    /// truth is excluded from counts.
    pub fn accumulate(&mut self, predictions: &[i32], ground_truth: &[i32]) -> Result<()> {
        if predictions.len() != ground_truth.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} predictions vs {} ground-truth labels",
                predictions.len(),
                ground_truth.len()
            )));
        }
        let c = self.n_classes as i32;
        for (&p, &g) in predictions.iter().zip(ground_truth) {
            if g == IGNORE_LABEL {
                self.ignored += 1;
                continue;
            }
            if g < 0 || g >= c || p < 0 || p >= c {
                return Err(Error::ShapeMismatch(format!(
                    "label pair (gt {g}, pred {p}) outside 0..{c}"
                )));
            }
            self.counts[g as usize * self.n_classes + p as usize] += 1;
        }
        Ok(())
    }

    /// Elementwise sum; merge is associative and commutative, so partial
    /// matrices accumulated independently can be combined in any order.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.n_classes != other.n_classes {
            return Err(Error::ShapeMismatch("confusion matrix sizes differ".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.ignored += other.ignored;
        Ok(())
    }

    fn iou(&self, c: usize) -> Option<f64> {
        let tp = self.count(c, c);
        let fp: u64 = (0..self.n_classes).filter(|&g| g != c).map(|g| self.count(g, c)).sum();
        let fn_: u64 = (0..self.n_classes).filter(|&p| p != c).map(|p| self.count(c, p)).sum();
        let denom = tp + fp + fn_;
        if denom == 0 {
            None
        } else {
            Some(tp as f64 / denom as f64)
        }
    }
}

/// Per-class IoU over a class subset plus the subset mean. Classes whose
/// IoU denominator is zero are reported as `None` and excluded from the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MiouResult {
    pub per_class: Vec<(usize, Option<f64>)>,
    pub mean: f64,
    pub present: usize,
}

/// IoU_c = TP / (TP + FP + FN) for each class in `subset`, mean over the
/// classes that are present.
pub fn miou(cm: &ConfusionMatrix, subset: &[usize]) -> Result<MiouResult> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    for &c in subset {
        if c >= cm.n_classes() {
            return Err(Error::ShapeMismatch(format!(
                "class {c} outside confusion matrix of size {}",
                cm.n_classes()
            )));
        }
    }
    let per_class: Vec<(usize, Option<f64>)> = subset.iter().map(|&c| (c, cm.iou(c))).collect();
    let present: Vec<f64> = per_class.iter().filter_map(|&(_, v)| v).collect();
    let mean = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    Ok(MiouResult {
        per_class,
        mean,
        present: present.len(),
    })
}

/// Count-weighted combination of group means; reproduces the "all" column
/// from per-group means and their class counts.
pub fn weighted_group_mean(groups: &[(f64, usize)]) -> f64 {
    let total: usize = groups.iter().map(|&(_, n)| n).sum();
    if total == 0 {
        return 0.0;
    }
    groups.iter().map(|&(m, n)| m * n as f64).sum::<f64>() / total as f64
}

/// Directional overlap: the fraction of class-a points whose distance to the
/// nearest class-b point is at most `radius`.
pub fn overlap_degree(cloud: &PointCloud, class_a: usize, class_b: usize, radius: f64) -> Result<f64> {
    let a_pts: Vec<[f64; 3]> = (0..cloud.len())
        .filter(|&i| cloud.labels[i] == class_a as i32)
        .map(|i| cloud.positions[i])
        .collect();
    let b_pts: Vec<[f64; 3]> = (0..cloud.len())
        .filter(|&i| cloud.labels[i] == class_b as i32)
        .map(|i| cloud.positions[i])
        .collect();
    if a_pts.is_empty() {
        return Err(Error::ClassAbsent(class_a));
    }
    if b_pts.is_empty() {
        return Err(Error::ClassAbsent(class_b));
    }
    let b_index = KnnIndex::from_positions(b_pts);
    let close = a_pts
        .iter()
        .filter(|&&p| b_index.nearest_distance(p) <= radius)
        .count();
    Ok(close as f64 / a_pts.len() as f64)
}
