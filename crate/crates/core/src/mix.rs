//! Compositional mixing: local random augmentation of class patches,
//! concatenation onto a base scan from the other domain, and global random
//! augmentation of the union.
//!
//! All randomness flows through the caller's stream; identical inputs and
//! seed produce bitwise-identical output. Degenerate transforms (zero angle,
//! unit scale, zero shift) are skipped outright so that disabled
//! augmentation is an exact identity.

use std::collections::BTreeSet;

use rand::Rng;

use crate::cloud::{LabelArray, Patch, Point, PointCloud};
use crate::error::{Error, Result};
use crate::rngs::substream;
use crate::scalar::{sc, Scalar};
use crate::select::{
    extract_patches, filter_pseudo_labels, select_source_classes, ClassHistogram, Prediction,
    SelectionConfig,
};

/// Parameters of the per-patch augmentation: rotation about the vertical
/// axis through the patch centroid, per-axis scaling about the centroid, and
/// random downsampling.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalAugConfig {
    pub rot_z_bounds: (f64, f64),
    pub scale_bounds: (f64, f64),
    /// Fraction of patch points kept by the random downsampling, in (0, 1].
    pub keep_fraction: f64,
    pub enabled: bool,
}

impl Default for LocalAugConfig {
    fn default() -> Self {
        LocalAugConfig {
            rot_z_bounds: (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
            scale_bounds: (0.95, 1.05),
            keep_fraction: 0.5,
            enabled: true,
        }
    }
}

impl LocalAugConfig {
    pub fn disabled() -> Self {
        LocalAugConfig {
            enabled: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rot_z_bounds.0 > self.rot_z_bounds.1 || self.scale_bounds.0 > self.scale_bounds.1 {
            return Err(Error::InvalidConfig("augmentation bounds unordered".into()));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "keep_fraction must be in (0,1], got {}",
                self.keep_fraction
            )));
        }
        Ok(())
    }
}

/// Parameters of the whole-cloud augmentation: one rigid rotation composed
/// per axis, one translation, one per-axis scaling. The default restricts
/// rotation to the vertical axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalAugConfig {
    /// Rotation bounds in radians for the x, y and z axes.
    pub rot_bounds: [(f64, f64); 3],
    /// Translation bounds in meters per axis.
    pub translation_bounds: [(f64, f64); 3],
    /// Scale-factor bounds per axis.
    pub scale_bounds: [(f64, f64); 3],
    pub enabled: bool,
}

impl Default for GlobalAugConfig {
    fn default() -> Self {
        use std::f64::consts::PI;
        GlobalAugConfig {
            rot_bounds: [(0.0, 0.0), (0.0, 0.0), (-PI, PI)],
            translation_bounds: [(-0.2, 0.2); 3],
            scale_bounds: [(0.95, 1.05); 3],
            enabled: true,
        }
    }
}

impl GlobalAugConfig {
    pub fn disabled() -> Self {
        GlobalAugConfig {
            enabled: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = self
            .rot_bounds
            .iter()
            .chain(&self.translation_bounds)
            .chain(&self.scale_bounds)
            .all(|(lo, hi)| lo <= hi);
        if !ordered {
            return Err(Error::InvalidConfig("augmentation bounds unordered".into()));
        }
        Ok(())
    }
}

/// Which scan a mixed point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Provenance {
    Base = 0,
    Patch = 1,
}

/// A composed point cloud, its composed labels, and the per-point origin.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedSample<S> {
    pub cloud: PointCloud<S>,
    pub labels: LabelArray,
    pub provenance: Vec<Provenance>,
}

impl<S: Scalar> MixedSample<S> {
    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }
}

/// Number of points kept when downsampling an `n`-point patch.
pub fn kept_count(n: usize, keep_fraction: f64) -> usize {
    (keep_fraction * n as f64).ceil() as usize
}

/// Randomly augments one patch: rotate about the vertical axis through the
/// patch centroid, scale per axis about the centroid, then keep a uniform
/// random subset of `ceil(keep_fraction * n)` points.
pub fn local_augment<S: Scalar>(
    patch: &Patch<S>,
    cfg: &LocalAugConfig,
    rng: &mut impl Rng,
) -> Patch<S> {
    if !cfg.enabled || patch.is_empty() {
        return patch.clone();
    }
    let (cx, cy, cz) = patch.points.centroid();

    let theta = rng.random_range(cfg.rot_z_bounds.0..=cfg.rot_z_bounds.1);
    let sx = rng.random_range(cfg.scale_bounds.0..=cfg.scale_bounds.1);
    let sy = rng.random_range(cfg.scale_bounds.0..=cfg.scale_bounds.1);
    let sz = rng.random_range(cfg.scale_bounds.0..=cfg.scale_bounds.1);

    let mut points: Vec<Point<S>> = patch.points.points().to_vec();
    if theta != 0.0 {
        let (sin, cos): (S, S) = (sc(theta.sin()), sc(theta.cos()));
        for p in &mut points {
            let dx = p.x - cx;
            let dy = p.y - cy;
            p.x = cx + cos * dx - sin * dy;
            p.y = cy + sin * dx + cos * dy;
        }
    }
    scale_about::<S>(&mut points, (cx, cy, cz), (sx, sy, sz));

    let n = points.len();
    let keep = kept_count(n, cfg.keep_fraction);
    if keep >= n {
        return Patch {
            class_id: patch.class_id,
            points: PointCloud::new(points),
            source_indices: patch.source_indices.clone(),
        };
    }
    let mut chosen = rand::seq::index::sample(rng, n, keep).into_vec();
    chosen.sort_unstable();
    Patch {
        class_id: patch.class_id,
        points: chosen.iter().map(|&i| points[i]).collect(),
        source_indices: chosen.iter().map(|&i| patch.source_indices[i]).collect(),
    }
}

fn scale_about<S: Scalar>(points: &mut [Point<S>], center: (S, S, S), factors: (f64, f64, f64)) {
    let (cx, cy, cz) = center;
    let (sx, sy, sz) = factors;
    if sx != 1.0 {
        let f: S = sc(sx);
        points.iter_mut().for_each(|p| p.x = cx + f * (p.x - cx));
    }
    if sy != 1.0 {
        let f: S = sc(sy);
        points.iter_mut().for_each(|p| p.y = cy + f * (p.y - cy));
    }
    if sz != 1.0 {
        let f: S = sc(sz);
        points.iter_mut().for_each(|p| p.z = cz + f * (p.z - cz));
    }
}

/// Randomly augments a whole cloud: rotation (composed x, then y, then z),
/// translation, then per-axis scaling, applied uniformly to every point.
/// Point count and order are unchanged.
pub fn global_augment<S: Scalar>(
    cloud: &PointCloud<S>,
    cfg: &GlobalAugConfig,
    rng: &mut impl Rng,
) -> PointCloud<S> {
    if !cfg.enabled {
        return cloud.clone();
    }
    let angles: Vec<f64> = cfg
        .rot_bounds
        .iter()
        .map(|&(lo, hi)| rng.random_range(lo..=hi))
        .collect();
    let shifts: Vec<f64> = cfg
        .translation_bounds
        .iter()
        .map(|&(lo, hi)| rng.random_range(lo..=hi))
        .collect();
    let scales: Vec<f64> = cfg
        .scale_bounds
        .iter()
        .map(|&(lo, hi)| rng.random_range(lo..=hi))
        .collect();

    let mut points: Vec<Point<S>> = cloud.points().to_vec();
    if angles.iter().any(|&a| a != 0.0) {
        let m = rotation_matrix::<S>(angles[0], angles[1], angles[2]);
        for p in &mut points {
            let (x, y, z) = (p.x, p.y, p.z);
            p.x = m[0][0] * x + m[0][1] * y + m[0][2] * z;
            p.y = m[1][0] * x + m[1][1] * y + m[1][2] * z;
            p.z = m[2][0] * x + m[2][1] * y + m[2][2] * z;
        }
    }
    if shifts.iter().any(|&t| t != 0.0) {
        let (tx, ty, tz): (S, S, S) = (sc(shifts[0]), sc(shifts[1]), sc(shifts[2]));
        for p in &mut points {
            p.x += tx;
            p.y += ty;
            p.z += tz;
        }
    }
    for (axis, &s) in scales.iter().enumerate() {
        if s != 1.0 {
            let f: S = sc(s);
            for p in &mut points {
                match axis {
                    0 => p.x *= f,
                    1 => p.y *= f,
                    _ => p.z *= f,
                }
            }
        }
    }
    PointCloud::new(points)
}

/// Row-major matrix of Rz(cz) * Ry(cy) * Rx(cx).
fn rotation_matrix<S: Scalar>(ax: f64, ay: f64, az: f64) -> [[S; 3]; 3] {
    let (sx, cx) = ax.sin_cos();
    let (sy, cy) = ay.sin_cos();
    let (sz, cz) = az.sin_cos();
    let m = [
        [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
        [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
        [-sy, cy * sx, cy * cx],
    ];
    m.map(|row| row.map(sc))
}

/// Locally augments every patch, appends them to the base scan in ascending
/// class order, concatenates labels accordingly, marks provenance, and
/// globally augments the union. Label values are never transformed.
///
/// Each patch draws from a fresh substream of `rng`; the global augmentation
/// draws from `rng` afterwards.
pub fn compose_mix<S: Scalar>(
    base_cloud: &PointCloud<S>,
    base_labels: &LabelArray,
    patches: &[Patch<S>],
    local_cfg: &LocalAugConfig,
    global_cfg: &GlobalAugConfig,
    rng: &mut impl Rng,
) -> Result<MixedSample<S>> {
    if base_cloud.len() != base_labels.len() {
        return Err(Error::LengthMismatch {
            left: base_cloud.len(),
            right: base_labels.len(),
        });
    }

    let mut order: Vec<usize> = (0..patches.len()).collect();
    order.sort_by_key(|&i| (patches[i].class_id, i));

    let mut points: Vec<Point<S>> = base_cloud.points().to_vec();
    let mut labels: Vec<u32> = base_labels.as_slice().to_vec();
    let mut provenance = vec![Provenance::Base; base_cloud.len()];

    for &i in &order {
        let mut patch_rng = substream(rng);
        let augmented = local_augment(&patches[i], local_cfg, &mut patch_rng);
        labels.extend(std::iter::repeat_n(augmented.class_id, augmented.len()));
        provenance.extend(std::iter::repeat_n(Provenance::Patch, augmented.len()));
        points.extend_from_slice(augmented.points.points());
    }

    let cloud = global_augment(&PointCloud::new(points), global_cfg, rng);
    Ok(MixedSample {
        cloud,
        labels: LabelArray::new(labels),
        provenance,
    })
}

/// The two mixed samples of one adaptation step.
#[derive(Debug, Clone, PartialEq)]
pub struct MixPair<S> {
    /// Source patches composed into the target scan; base labels are the
    /// filtered pseudo-labels (ignores included).
    pub source_to_target: MixedSample<S>,
    /// Confident target patches composed into the source scan; base labels
    /// are the source ground truth.
    pub target_to_source: MixedSample<S>,
    /// Classes whose source patches were injected.
    pub selected_source_classes: BTreeSet<u32>,
    /// Classes whose target patches were injected.
    pub selected_target_classes: BTreeSet<u32>,
}

/// Builds both branch samples for one (source scan, target scan) pair.
///
/// Draw order: source class selection, target class selection (when
/// subsampling is enabled), source-to-target composition, target-to-source
/// composition.
#[allow(clippy::too_many_arguments)]
pub fn mix_pair<S: Scalar>(
    source_cloud: &PointCloud<S>,
    source_labels: &LabelArray,
    target_cloud: &PointCloud<S>,
    teacher_prediction: &Prediction<S>,
    selection: &SelectionConfig,
    local_cfg: &LocalAugConfig,
    global_cfg: &GlobalAugConfig,
    source_histogram: &ClassHistogram,
    rng: &mut impl Rng,
) -> Result<MixPair<S>> {
    if target_cloud.len() != teacher_prediction.len() {
        return Err(Error::LengthMismatch {
            left: target_cloud.len(),
            right: teacher_prediction.len(),
        });
    }

    let pseudo_labels = filter_pseudo_labels(teacher_prediction, selection.zeta);

    let source_present = source_labels.present_classes();
    let selected_source = select_source_classes(
        &source_present,
        source_histogram,
        selection.alpha,
        selection.weighted,
        rng,
    )?;
    let source_patches = extract_patches(source_cloud, source_labels, &selected_source)?;

    // zero retained pseudo-labels legally yield an empty patch list
    let surviving = pseudo_labels.present_classes();
    let selected_target = if selection.subsample_target && !surviving.is_empty() {
        select_source_classes(
            &surviving,
            source_histogram,
            selection.alpha,
            selection.weighted,
            rng,
        )?
    } else {
        surviving
    };
    let target_patches = extract_patches(target_cloud, &pseudo_labels, &selected_target)?;

    let source_to_target = compose_mix(
        target_cloud,
        &pseudo_labels,
        &source_patches,
        local_cfg,
        global_cfg,
        rng,
    )?;
    let target_to_source = compose_mix(
        source_cloud,
        source_labels,
        &target_patches,
        local_cfg,
        global_cfg,
        rng,
    )?;

    Ok(MixPair {
        source_to_target,
        target_to_source,
        selected_source_classes: selected_source,
        selected_target_classes: selected_target,
    })
}
