//! Semantic selection: class-frequency statistics, frequency-weighted class
//! sampling, per-class patch extraction, and confidence-based pseudo-label
//! filtering.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::cloud::{LabelArray, Patch, PointCloud, IGNORE_LABEL};
use crate::error::{Error, Result};
use crate::scalar::{sc, Scalar};

/// Per-class point counts over a dataset. Ignored points are never counted.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClassHistogram {
    counts: BTreeMap<u32, u64>,
    total: u64,
}

impl ClassHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: BTreeMap<u32, u64>) -> Self {
        let total = counts.values().sum();
        ClassHistogram { counts, total }
    }

    pub fn add_labels(&mut self, labels: &LabelArray) {
        for &label in labels.iter() {
            if label != IGNORE_LABEL {
                *self.counts.entry(label).or_insert(0) += 1;
                self.total += 1;
            }
        }
    }

    pub fn count(&self, class_id: u32) -> u64 {
        self.counts.get(&class_id).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Fraction of all counted points carrying `class_id`; 0 when empty.
    pub fn frequency(&self, class_id: u32) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(class_id) as f64 / self.total as f64
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.counts.iter().map(|(&c, &n)| (c, n))
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }
}

/// Accumulates the class frequency distribution over a labeled dataset.
pub fn class_frequency<'a, I>(scans: I) -> Result<ClassHistogram>
where
    I: IntoIterator<Item = &'a LabelArray>,
{
    let mut histogram = ClassHistogram::new();
    let mut any = false;
    for labels in scans {
        any = true;
        histogram.add_labels(labels);
    }
    if !any || histogram.is_empty() {
        return Err(Error::EmptyDataset("no labeled points".into()));
    }
    Ok(histogram)
}

/// Knobs of the selection stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    /// Ratio of present classes picked per scan, in (0, 1].
    pub alpha: f64,
    /// Pseudo-label confidence threshold, in (0, 1).
    pub zeta: f64,
    /// Inverse-frequency weighting of the class draws; uniform when false.
    pub weighted: bool,
    /// Also subsample the classes surviving the confidence filter on the
    /// target side (off: every surviving class contributes a patch).
    pub subsample_target: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            alpha: 0.5,
            zeta: 0.85,
            weighted: true,
            subsample_target: false,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be in (0,1], got {}",
                self.alpha
            )));
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "zeta must be in (0,1), got {}",
                self.zeta
            )));
        }
        Ok(())
    }
}

/// Per-point class prediction with its confidence (max class probability).
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<S> {
    classes: Vec<u32>,
    confidences: Vec<S>,
}

impl<S: Scalar> Prediction<S> {
    pub fn new(classes: Vec<u32>, confidences: Vec<S>) -> Result<Self> {
        if classes.len() != confidences.len() {
            return Err(Error::LengthMismatch {
                left: classes.len(),
                right: confidences.len(),
            });
        }
        for (index, &c) in confidences.iter().enumerate() {
            if !(c.is_finite() && c >= S::zero() && c <= S::one()) {
                return Err(Error::BadConfidence { index });
            }
        }
        Ok(Prediction {
            classes,
            confidences,
        })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[u32] {
        &self.classes
    }

    pub fn confidences(&self) -> &[S] {
        &self.confidences
    }
}

/// Number of classes picked from a pool of `present` classes: round-half-up
/// of `alpha * present`, at least one, at most the pool size.
pub fn selection_count(present: usize, alpha: f64) -> usize {
    let k = (alpha * present as f64 + 0.5).floor() as usize;
    k.clamp(1, present.max(1))
}

/// Draws a subset of the classes present in a scan, sequentially and without
/// replacement. When `weighted`, each draw picks class `c` with probability
/// proportional to `1 - frequency(c)` over the remaining candidates, so
/// long-tail classes are favored; otherwise draws are uniform.
pub fn select_source_classes(
    present: &BTreeSet<u32>,
    histogram: &ClassHistogram,
    alpha: f64,
    weighted: bool,
    rng: &mut impl Rng,
) -> Result<BTreeSet<u32>> {
    if present.is_empty() {
        return Err(Error::EmptySelectionPool);
    }
    let k = selection_count(present.len(), alpha);
    let mut remaining: Vec<u32> = present.iter().copied().collect();
    let mut selected = BTreeSet::new();
    for _ in 0..k {
        let index = if weighted {
            let weights: Vec<f64> = remaining
                .iter()
                .map(|&c| 1.0 - histogram.frequency(c))
                .collect();
            let total: f64 = weights.iter().sum();
            if total > 0.0 {
                let mut u = rng.random_range(0.0..total);
                let mut chosen = remaining.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        chosen = i;
                        break;
                    }
                    u -= w;
                }
                chosen
            } else {
                // every remaining class has frequency 1 (single-class data)
                rng.random_range(0..remaining.len())
            }
        } else {
            rng.random_range(0..remaining.len())
        };
        selected.insert(remaining.remove(index));
    }
    Ok(selected)
}

/// Splits a scan into one [`Patch`] per requested class that has at least one
/// point. Patches are disjoint and returned in ascending class order.
pub fn extract_patches<S: Scalar>(
    cloud: &PointCloud<S>,
    labels: &LabelArray,
    class_set: &BTreeSet<u32>,
) -> Result<Vec<Patch<S>>> {
    if cloud.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: cloud.len(),
            right: labels.len(),
        });
    }
    let mut patches = Vec::new();
    for &class_id in class_set {
        if class_id == IGNORE_LABEL {
            continue;
        }
        let indices: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == class_id).then_some(i))
            .collect();
        if indices.is_empty() {
            continue;
        }
        let points = indices.iter().map(|&i| cloud.points()[i]).collect();
        patches.push(Patch {
            class_id,
            points,
            source_indices: indices,
        });
    }
    Ok(patches)
}

/// Keeps predicted classes whose confidence reaches `zeta`; the rest become
/// [`IGNORE_LABEL`].
pub fn filter_pseudo_labels<S: Scalar>(prediction: &Prediction<S>, zeta: f64) -> LabelArray {
    let threshold: S = sc(zeta);
    prediction
        .classes()
        .iter()
        .zip(prediction.confidences())
        .map(|(&class, &conf)| {
            if conf >= threshold {
                class
            } else {
                IGNORE_LABEL
            }
        })
        .collect()
}

/// Empirical `(1 - target_fraction)`-quantile of a confidence sample: using
/// the returned threshold in [`filter_pseudo_labels`] retains a fraction of
/// points within one sample step of `target_fraction`.
pub fn calibrate_zeta<S: Scalar>(sample: &[S], target_fraction: f64) -> Result<S> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite confidences"));
    let n = sorted.len();
    let kept = ((target_fraction * n as f64).round() as usize).clamp(1, n);
    Ok(sorted[n - kept])
}
