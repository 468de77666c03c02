//! Pluggable point-cloud segmenter abstraction plus a small differentiable
//! per-point model sufficient to run the adaptation loop at desk scale.
//!
//! The toy model is a multinomial logistic regression over hand-built
//! per-point features; the only context it sees is a voxel-density feature.
//! No neighborhood convolutions, so its gradients stay hand-derivable.

use std::collections::HashMap;

use crate::cloud::{ClassSet, LabelArray, PointCloud};
use crate::error::{Error, Result};
use crate::learn::{dice_grad, ParamVector, ProbabilityField};
use crate::scalar::{sc, Scalar};
use crate::select::Prediction;

/// A point-cloud segmenter: pure prediction given parameters, flat parameter
/// access, and the gradient of the Dice segmentation loss.
pub trait Segmenter<S: Scalar> {
    fn class_set(&self) -> &ClassSet;
    /// Per-point class probabilities; row count equals the cloud size.
    fn predict(&self, cloud: &PointCloud<S>) -> ProbabilityField<S>;
    fn params(&self) -> ParamVector<S>;
    fn set_params(&mut self, params: &ParamVector<S>) -> Result<()>;
    /// Gradient of the Dice loss of `predict(cloud)` against `labels`.
    fn grad(&self, cloud: &PointCloud<S>, labels: &LabelArray) -> Result<ParamVector<S>>;
}

/// Per-point voxel assignment and the occupancy of each voxel.
#[derive(Debug, Clone)]
pub struct Voxelization {
    pub keys: Vec<(i64, i64, i64)>,
    pub counts: HashMap<(i64, i64, i64), u32>,
}

/// Quantizes every point onto a cubic grid: `floor(coordinate / voxel_size)`
/// per axis.
pub fn voxelize<S: Scalar>(cloud: &PointCloud<S>, voxel_size: f64) -> Result<Voxelization> {
    if !(voxel_size > 0.0) {
        return Err(Error::NonPositiveVoxel(voxel_size));
    }
    let mut keys = Vec::with_capacity(cloud.len());
    let mut counts = HashMap::new();
    for p in cloud.iter() {
        let key = (
            (p.x.to_f64().unwrap() / voxel_size).floor() as i64,
            (p.y.to_f64().unwrap() / voxel_size).floor() as i64,
            (p.z.to_f64().unwrap() / voxel_size).floor() as i64,
        );
        keys.push(key);
        *counts.entry(key).or_insert(0) += 1;
    }
    Ok(Voxelization { keys, counts })
}

/// Number of features per point: height, horizontal range, intensity,
/// voxel density, bias.
pub const FEATURE_DIM: usize = 5;

/// Multinomial logistic model over per-point features.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySegmenter<S> {
    /// Row-major `classes x FEATURE_DIM` weight matrix.
    weights: Vec<S>,
    classes: ClassSet,
    voxel_size: f64,
    /// Normalizes height and range so logits stay tame.
    scene_radius: f64,
}

impl<S: Scalar> ToySegmenter<S> {
    pub fn new(classes: ClassSet, voxel_size: f64, scene_radius: f64) -> Result<Self> {
        if !(voxel_size > 0.0) {
            return Err(Error::NonPositiveVoxel(voxel_size));
        }
        if !(scene_radius > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "scene radius must be positive, got {scene_radius}"
            )));
        }
        let weights = vec![S::zero(); classes.len() * FEATURE_DIM];
        Ok(ToySegmenter {
            weights,
            classes,
            voxel_size,
            scene_radius,
        })
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    /// Row-major `points x FEATURE_DIM` feature matrix.
    pub fn features(&self, cloud: &PointCloud<S>) -> Vec<S> {
        let voxels = voxelize(cloud, self.voxel_size).expect("validated voxel size");
        let max_count = voxels.counts.values().copied().max().unwrap_or(1);
        let max_count: S = sc(f64::from(max_count));
        let radius: S = sc(self.scene_radius);
        let mut features = Vec::with_capacity(cloud.len() * FEATURE_DIM);
        for (p, key) in cloud.iter().zip(&voxels.keys) {
            let density = sc::<S>(f64::from(voxels.counts[key])) / max_count;
            features.push(p.z / radius);
            features.push(p.horizontal_range() / radius);
            features.push(p.intensity);
            features.push(density);
            features.push(S::one());
        }
        features
    }

    fn softmax_rows(&self, features: &[S], points: usize) -> Vec<S> {
        let n_classes = self.classes.len();
        let mut probs = vec![S::zero(); points * n_classes];
        for point in 0..points {
            let feat = &features[point * FEATURE_DIM..(point + 1) * FEATURE_DIM];
            let row = &mut probs[point * n_classes..(point + 1) * n_classes];
            for (c, slot) in row.iter_mut().enumerate() {
                let w = &self.weights[c * FEATURE_DIM..(c + 1) * FEATURE_DIM];
                *slot = w.iter().zip(feat).map(|(&a, &b)| a * b).sum();
            }
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let mut total = S::zero();
            for slot in row.iter_mut() {
                *slot = (*slot - max).exp();
                total += *slot;
            }
            for slot in row.iter_mut() {
                *slot /= total;
            }
        }
        probs
    }
}

impl<S: Scalar> Segmenter<S> for ToySegmenter<S> {
    fn class_set(&self) -> &ClassSet {
        &self.classes
    }

    fn predict(&self, cloud: &PointCloud<S>) -> ProbabilityField<S> {
        let features = self.features(cloud);
        let probs = self.softmax_rows(&features, cloud.len());
        ProbabilityField::new(probs, self.classes.len()).expect("shape by construction")
    }

    fn params(&self) -> ParamVector<S> {
        ParamVector::new(self.weights.clone()).expect("weights stay finite")
    }

    fn set_params(&mut self, params: &ParamVector<S>) -> Result<()> {
        if params.len() != self.weights.len() {
            return Err(Error::ShapeMismatch {
                expected: self.weights.len(),
                got: params.len(),
            });
        }
        self.weights.copy_from_slice(params.as_slice());
        Ok(())
    }

    fn grad(&self, cloud: &PointCloud<S>, labels: &LabelArray) -> Result<ParamVector<S>> {
        let features = self.features(cloud);
        let probs = ProbabilityField::new(
            self.softmax_rows(&features, cloud.len()),
            self.classes.len(),
        )?;
        let loss_grad = dice_grad(&probs, labels, &self.classes)?;

        // chain rule through the softmax: dL/dz_k = p_k (g_k - sum_c g_c p_c)
        let n_classes = self.classes.len();
        let mut grad = vec![S::zero(); self.weights.len()];
        for point in 0..cloud.len() {
            let row = probs.row(point);
            let g = &loss_grad[point * n_classes..(point + 1) * n_classes];
            let dot: S = g.iter().zip(row).map(|(&a, &b)| a * b).sum();
            let feat = &features[point * FEATURE_DIM..(point + 1) * FEATURE_DIM];
            for c in 0..n_classes {
                let logit_grad = row[c] * (g[c] - dot);
                if logit_grad != S::zero() {
                    let w_row = &mut grad[c * FEATURE_DIM..(c + 1) * FEATURE_DIM];
                    for (slot, &f) in w_row.iter_mut().zip(feat) {
                        *slot += logit_grad * f;
                    }
                }
            }
        }
        ParamVector::new(grad)
    }
}

/// Converts a probability field into per-point (class id, max probability).
pub fn field_to_prediction<S: Scalar>(
    field: &ProbabilityField<S>,
    classes: &ClassSet,
) -> Prediction<S> {
    let mut ids = Vec::with_capacity(field.points());
    let mut confidences = Vec::with_capacity(field.points());
    for point in 0..field.points() {
        let (col, confidence) = field.argmax(point);
        ids.push(classes.id_at(col));
        confidences.push(confidence);
    }
    Prediction::new(ids, confidences).expect("softmax confidences are in [0,1]")
}
