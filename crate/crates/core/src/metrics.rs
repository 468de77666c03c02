//! Segmentation metrics: confusion matrix, per-class IoU and mIoU.

use crate::cloud::{ClassSet, LabelArray, PointCloud, IGNORE_LABEL};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::segmenter::Segmenter;

/// How classes with an empty union (no TP, FP or FN) enter the mIoU mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroUnionPolicy {
    /// Leave absent classes out of the mean (the common benchmark protocol).
    #[default]
    Exclude,
    /// Score absent classes as 0.
    ScoreZero,
}

/// Integer confusion counts over a class set. Ground-truth ignores are never
/// recorded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: ClassSet,
    /// Row-major `classes x classes`: row = ground truth, column = predicted.
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: ClassSet) -> Self {
        let n = classes.len();
        ConfusionMatrix {
            classes,
            counts: vec![0; n * n],
        }
    }

    pub fn record(&mut self, truth: u32, predicted: u32) -> Result<()> {
        if truth == IGNORE_LABEL {
            return Ok(());
        }
        let n = self.classes.len();
        let row = self
            .classes
            .index_of(truth)
            .ok_or(Error::UnknownClassId { id: truth, index: 0 })?;
        let col = self
            .classes
            .index_of(predicted)
            .ok_or(Error::UnknownClassId {
                id: predicted,
                index: 0,
            })?;
        self.counts[row * n + col] += 1;
        Ok(())
    }

    pub fn record_pair(&mut self, truth: &LabelArray, predicted: &LabelArray) -> Result<()> {
        if truth.len() != predicted.len() {
            return Err(Error::LengthMismatch {
                left: truth.len(),
                right: predicted.len(),
            });
        }
        for (&t, &p) in truth.iter().zip(predicted.iter()) {
            self.record(t, p)?;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        debug_assert_eq!(self.classes, other.classes);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn count(&self, truth_index: usize, predicted_index: usize) -> u64 {
        self.counts[truth_index * self.classes.len() + predicted_index]
    }

    /// IoU of the class at `index`; `None` when its union is empty.
    pub fn iou(&self, index: usize) -> Option<f64> {
        let n = self.classes.len();
        let tp = self.counts[index * n + index];
        let fp: u64 = (0..n)
            .filter(|&r| r != index)
            .map(|r| self.counts[r * n + index])
            .sum();
        let fn_: u64 = (0..n)
            .filter(|&c| c != index)
            .map(|c| self.counts[index * n + c])
            .sum();
        let union = tp + fp + fn_;
        (union > 0).then(|| tp as f64 / union as f64)
    }

    /// Fraction of recorded points on the diagonal; 0 when nothing was
    /// recorded.
    pub fn accuracy(&self) -> f64 {
        let n = self.classes.len();
        let total: u64 = self.counts.iter().sum();
        if total == 0 {
            return 0.0;
        }
        let correct: u64 = (0..n).map(|i| self.counts[i * n + i]).sum();
        correct as f64 / total as f64
    }

    pub fn report(&self, policy: ZeroUnionPolicy) -> EvalReport {
        let per_class: Vec<(u32, Option<f64>)> = (0..self.classes.len())
            .map(|i| (self.classes.id_at(i), self.iou(i)))
            .collect();
        let scores: Vec<f64> = per_class
            .iter()
            .filter_map(|(_, iou)| match (iou, policy) {
                (Some(v), _) => Some(*v),
                (None, ZeroUnionPolicy::ScoreZero) => Some(0.0),
                (None, ZeroUnionPolicy::Exclude) => None,
            })
            .collect();
        let miou = if scores.is_empty() {
            0.0
        } else {
            scores.iter().sum::<f64>() / scores.len() as f64
        };
        EvalReport { per_class, miou }
    }
}

/// Per-class IoU (None where the union is empty) and the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_class: Vec<(u32, Option<f64>)>,
    pub miou: f64,
}

/// Runs the segmenter over a labeled dataset and accumulates IoU metrics.
pub fn evaluate<S: Scalar>(
    scans: &[(PointCloud<S>, LabelArray)],
    segmenter: &dyn Segmenter<S>,
    policy: ZeroUnionPolicy,
) -> Result<EvalReport> {
    if scans.is_empty() {
        return Err(Error::EmptyDataset("no scans to evaluate".into()));
    }
    let classes = segmenter.class_set().clone();
    let mut matrix = ConfusionMatrix::new(classes.clone());
    for (cloud, labels) in scans {
        if cloud.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: cloud.len(),
                right: labels.len(),
            });
        }
        let field = segmenter.predict(cloud);
        let predicted: LabelArray = (0..field.points())
            .map(|point| classes.id_at(field.argmax(point).0))
            .collect();
        matrix.record_pair(labels, &predicted)?;
    }
    Ok(matrix.report(policy))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_classes() -> ClassSet {
        ClassSet::new(vec![(1, "a".into()), (2, "b".into())]).unwrap()
    }

    #[test]
    fn perfect_predictions_score_one() {
        let mut m = ConfusionMatrix::new(two_classes());
        let labels = LabelArray::new(vec![1, 2, 1, 2]);
        m.record_pair(&labels, &labels).unwrap();
        let report = m.report(ZeroUnionPolicy::Exclude);
        assert_eq!(report.miou, 1.0);
        assert!(report.per_class.iter().all(|(_, iou)| *iou == Some(1.0)));
    }

    #[test]
    fn full_confusion_scores_zero() {
        let mut m = ConfusionMatrix::new(two_classes());
        let truth = LabelArray::new(vec![1, 1, 2, 2]);
        let predicted = LabelArray::new(vec![2, 2, 1, 1]);
        m.record_pair(&truth, &predicted).unwrap();
        let report = m.report(ZeroUnionPolicy::Exclude);
        assert_eq!(report.miou, 0.0);
    }

    #[test]
    fn ignored_ground_truth_is_skipped() {
        let mut m = ConfusionMatrix::new(two_classes());
        let truth = LabelArray::new(vec![1, IGNORE_LABEL]);
        let predicted = LabelArray::new(vec![1, 2]);
        m.record_pair(&truth, &predicted).unwrap();
        assert_eq!(m.count(0, 0), 1);
        assert_eq!(m.count(1, 1), 0);
    }

    #[test]
    fn zero_union_policy_changes_the_mean() {
        let mut m = ConfusionMatrix::new(two_classes());
        // only class 1 ever appears
        let truth = LabelArray::new(vec![1, 1]);
        m.record_pair(&truth, &truth).unwrap();
        assert_eq!(m.report(ZeroUnionPolicy::Exclude).miou, 1.0);
        assert_eq!(m.report(ZeroUnionPolicy::ScoreZero).miou, 0.5);
    }

    #[test]
    fn unknown_prediction_id_is_an_error() {
        let mut m = ConfusionMatrix::new(two_classes());
        assert!(m.record(1, 9).is_err());
    }
}
