//! Fundamental geometric and label types shared by every stage of the
//! pipeline: point clouds, per-point labels, class sets and class patches.
//!
//! All types are immutable values after construction and safe to share
//! read-only across workers.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Reserved label for points excluded from losses, metrics and patch
/// extraction (the maximum representable id of the label width).
pub const IGNORE_LABEL: u32 = u32::MAX;

/// One LiDAR return: cartesian position in meters plus sensor intensity.
///
/// Intensity is carried through every transform unmodified; the mixing math
/// operates on geometry and labels only.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point<S> {
    pub x: S,
    pub y: S,
    pub z: S,
    pub intensity: S,
}

impl<S: Scalar> Point<S> {
    pub fn new(x: S, y: S, z: S, intensity: S) -> Self {
        Point { x, y, z, intensity }
    }

    /// True when all three coordinates are finite (intensity may be any raw
    /// sensor value).
    pub fn has_finite_coords(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Horizontal range from the sensor origin.
    pub fn horizontal_range(&self) -> S {
        (self.x * self.x + self.y * self.y).sqrt()
    }
}

/// An ordered sequence of points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud<S> {
    points: Vec<Point<S>>,
}

impl<S: Scalar> PointCloud<S> {
    pub fn new(points: Vec<Point<S>>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point<S>] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point<S>> {
        self.points.iter()
    }

    /// Mean of the point positions. Zero for an empty cloud.
    pub fn centroid(&self) -> (S, S, S) {
        if self.points.is_empty() {
            return (S::zero(), S::zero(), S::zero());
        }
        let n = S::from(self.points.len()).unwrap();
        let (mut cx, mut cy, mut cz) = (S::zero(), S::zero(), S::zero());
        for p in &self.points {
            cx += p.x;
            cy += p.y;
            cz += p.z;
        }
        (cx / n, cy / n, cz / n)
    }

    /// Index of the first point with a non-finite coordinate, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.points.iter().position(|p| !p.has_finite_coords())
    }
}

impl<S> FromIterator<Point<S>> for PointCloud<S> {
    fn from_iter<I: IntoIterator<Item = Point<S>>>(iter: I) -> Self {
        PointCloud {
            points: iter.into_iter().collect(),
        }
    }
}

/// Per-point class ids. May contain [`IGNORE_LABEL`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelArray {
    labels: Vec<u32>,
}

impl LabelArray {
    pub fn new(labels: Vec<u32>) -> Self {
        LabelArray { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.labels
    }

    pub fn iter(&self) -> std::slice::Iter<'_, u32> {
        self.labels.iter()
    }

    pub fn get(&self, index: usize) -> Option<u32> {
        self.labels.get(index).copied()
    }

    /// Distinct non-ignore classes present in the array, ascending.
    pub fn present_classes(&self) -> BTreeSet<u32> {
        self.labels
            .iter()
            .copied()
            .filter(|&l| l != IGNORE_LABEL)
            .collect()
    }

    pub fn count_non_ignore(&self) -> usize {
        self.labels.iter().filter(|&&l| l != IGNORE_LABEL).count()
    }
}

impl FromIterator<u32> for LabelArray {
    fn from_iter<I: IntoIterator<Item = u32>>(iter: I) -> Self {
        LabelArray {
            labels: iter.into_iter().collect(),
        }
    }
}

/// Ordered set of semantic classes. The ignore id is reserved and never a
/// member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSet {
    classes: Vec<(u32, String)>,
}

impl ClassSet {
    pub fn new(classes: Vec<(u32, String)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (index, (id, _)) in classes.iter().enumerate() {
            if *id == IGNORE_LABEL || !seen.insert(*id) {
                return Err(Error::UnknownClassId { id: *id, index });
            }
        }
        Ok(ClassSet { classes })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.classes.iter().any(|(c, _)| *c == id)
    }

    /// Position of `id` in the declared order (the probability-column index).
    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.classes.iter().position(|(c, _)| *c == id)
    }

    pub fn id_at(&self, index: usize) -> u32 {
        self.classes[index].0
    }

    pub fn name_of(&self, id: u32) -> Option<&str> {
        self.classes
            .iter()
            .find(|(c, _)| *c == id)
            .map(|(_, n)| n.as_str())
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.classes.iter().map(|(c, _)| *c)
    }

    pub fn entries(&self) -> &[(u32, String)] {
        &self.classes
    }
}

/// All points of one scan that share one semantic class, with the indices
/// they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch<S> {
    pub class_id: u32,
    pub points: PointCloud<S>,
    pub source_indices: Vec<usize>,
}

impl<S: Scalar> Patch<S> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Checks the joint invariants of a (cloud, labels) pair against a class set.
pub fn validate<S: Scalar>(
    cloud: &PointCloud<S>,
    labels: &LabelArray,
    classes: &ClassSet,
) -> Result<()> {
    if cloud.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: cloud.len(),
            right: labels.len(),
        });
    }
    if let Some(index) = cloud.first_non_finite() {
        return Err(Error::NonFiniteCoordinate { index });
    }
    for (index, &label) in labels.iter().enumerate() {
        if label != IGNORE_LABEL && !classes.contains(label) {
            return Err(Error::UnknownClassId { id: label, index });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_points() -> PointCloud<f32> {
        PointCloud::new(vec![
            Point::new(0.0, 0.0, 0.0, 0.5),
            Point::new(1.0, 2.0, 3.0, 0.1),
            Point::new(-1.0, 0.5, 0.2, 0.9),
        ])
    }

    fn two_classes() -> ClassSet {
        ClassSet::new(vec![(0, "a".into()), (1, "b".into())]).unwrap()
    }

    #[test]
    fn validate_accepts_well_formed() {
        let labels = LabelArray::new(vec![0, 1, 0]);
        assert!(validate(&three_points(), &labels, &two_classes()).is_ok());
    }

    #[test]
    fn validate_rejects_length_mismatch() {
        let labels = LabelArray::new(vec![0, 1]);
        let err = validate(&three_points(), &labels, &two_classes()).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { left: 3, right: 2 }));
    }

    #[test]
    fn validate_rejects_nan_coordinate() {
        let mut points = three_points().points().to_vec();
        points[1].x = f32::NAN;
        let cloud = PointCloud::new(points);
        let labels = LabelArray::new(vec![0, 1, 0]);
        let err = validate(&cloud, &labels, &two_classes()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteCoordinate { index: 1 }));
    }

    #[test]
    fn validate_rejects_unknown_class() {
        let labels = LabelArray::new(vec![0, 7, 0]);
        let err = validate(&three_points(), &labels, &two_classes()).unwrap_err();
        assert!(matches!(err, Error::UnknownClassId { id: 7, index: 1 }));
    }

    #[test]
    fn ignore_label_passes_validation() {
        let labels = LabelArray::new(vec![0, IGNORE_LABEL, 1]);
        assert!(validate(&three_points(), &labels, &two_classes()).is_ok());
        assert_eq!(labels.count_non_ignore(), 2);
        assert_eq!(labels.present_classes().len(), 2);
    }

    #[test]
    fn class_set_rejects_duplicates_and_ignore() {
        assert!(ClassSet::new(vec![(1, "a".into()), (1, "b".into())]).is_err());
        assert!(ClassSet::new(vec![(IGNORE_LABEL, "x".into())]).is_err());
    }

    #[test]
    fn centroid_of_empty_cloud_is_origin() {
        let cloud: PointCloud<f64> = PointCloud::default();
        assert_eq!(cloud.centroid(), (0.0, 0.0, 0.0));
    }
}
