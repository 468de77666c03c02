//! Procedural two-domain LiDAR benchmark: a dense, clean source domain and a
//! sparser, noisier target domain with shifted class abundances and
//! intensity responses. Scenes are a ground disc plus boxes (buildings,
//! vehicles), cylinders (poles) and ellipsoid blobs (vegetation), all
//! surface-sampled.

use rand::Rng;
use rayon::prelude::*;

use crate::adapt::LabeledScans;
use crate::cloud::{ClassSet, LabelArray, Point, PointCloud};
use crate::error::{Error, Result};
use crate::io::{write_scan_pair, Palette};
use crate::rngs::{gaussian, scan_stream};
use crate::scalar::{sc, Scalar};

pub const CLASS_GROUND: u32 = 1;
pub const CLASS_BUILDING: u32 = 2;
pub const CLASS_POLE: u32 = 3;
pub const CLASS_VEHICLE: u32 = 4;
pub const CLASS_VEGETATION: u32 = 5;

const CLASS_IDS: [u32; 5] = [
    CLASS_GROUND,
    CLASS_BUILDING,
    CLASS_POLE,
    CLASS_VEHICLE,
    CLASS_VEGETATION,
];

/// The benchmark's class set. Id 0 stays free as the on-disk unlabeled id.
pub fn toy_class_set() -> ClassSet {
    ClassSet::new(vec![
        (CLASS_GROUND, "ground".into()),
        (CLASS_BUILDING, "building".into()),
        (CLASS_POLE, "pole".into()),
        (CLASS_VEHICLE, "vehicle".into()),
        (CLASS_VEGETATION, "vegetation".into()),
    ])
    .expect("static class table")
}

/// Viewer colors for the benchmark classes.
pub fn default_palette() -> Palette {
    Palette::new([80, 80, 80])
        .with(CLASS_GROUND, [120, 90, 60])
        .with(CLASS_BUILDING, [200, 200, 60])
        .with(CLASS_POLE, [250, 120, 30])
        .with(CLASS_VEHICLE, [60, 120, 250])
        .with(CLASS_VEGETATION, [60, 200, 90])
}

/// Domain knobs of one scene generator.
///
/// Each object class lives in its own radial band of the scene and carries
/// its own intensity response, so the classes occupy distinct corners of
/// the (range, height, intensity) feature space. The domain shift moves
/// those corners: the target is sparser and noisier, its class balance is
/// shifted, its intensity response is systematically lower, and its
/// structures sit on slightly different footprints.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub scene_radius: f64,
    /// Points per square meter of the scene disc; drives the point budget.
    pub density: f64,
    /// Standard deviation of the per-coordinate Gaussian noise, meters.
    pub noise_sigma: f64,
    /// Relative point budget per class, ordered as
    /// ground, building, pole, vehicle, vegetation.
    pub abundance: [f64; 5],
    /// Uniform intensity range per class, same order.
    pub intensity_ranges: [(f64, f64); 5],
    /// Radial band (meters) where each structure class is placed.
    pub building_band: (f64, f64),
    pub pole_band: (f64, f64),
    pub vehicle_band: (f64, f64),
    pub shrub_band: (f64, f64),
    /// Building tower height range, meters.
    pub building_height: (f64, f64),
    /// Pole mast height range, meters.
    pub pole_height: (f64, f64),
    /// Vegetation blob semi-axis range, meters.
    pub shrub_size: (f64, f64),
    pub buildings: usize,
    pub poles: usize,
    pub vehicles: usize,
    pub shrubs: usize,
}

impl SceneSpec {
    /// Dense, clean domain.
    pub fn source_default() -> Self {
        SceneSpec {
            scene_radius: 40.0,
            density: 1.0,
            noise_sigma: 0.02,
            abundance: [0.45, 0.20, 0.05, 0.12, 0.18],
            intensity_ranges: [
                (0.02, 0.18),
                (0.42, 0.58),
                (0.82, 0.98),
                (0.82, 0.98),
                (0.42, 0.58),
            ],
            building_band: (28.0, 36.0),
            pole_band: (20.0, 32.0),
            vehicle_band: (2.0, 10.0),
            shrub_band: (4.0, 16.0),
            building_height: (12.0, 25.0),
            pole_height: (10.0, 16.0),
            shrub_size: (1.0, 2.5),
            buildings: 4,
            poles: 6,
            vehicles: 5,
            shrubs: 8,
        }
    }

    /// Sparser, noisier domain with shifted class balance, a systematically
    /// lowered intensity response and structures on tighter footprints.
    pub fn target_default() -> Self {
        SceneSpec {
            scene_radius: 40.0,
            density: 0.6,
            noise_sigma: 0.05,
            abundance: [0.55, 0.14, 0.03, 0.06, 0.22],
            intensity_ranges: [
                (0.00, 0.12),
                (0.32, 0.48),
                (0.70, 0.86),
                (0.70, 0.86),
                (0.32, 0.48),
            ],
            building_band: (24.0, 33.0),
            pole_band: (17.0, 29.0),
            vehicle_band: (2.0, 9.0),
            shrub_band: (5.0, 18.0),
            building_height: (9.0, 20.0),
            pole_height: (8.0, 14.0),
            shrub_size: (1.2, 3.0),
            buildings: 3,
            poles: 4,
            vehicles: 3,
            shrubs: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scene_radius > 0.0 && self.density > 0.0) {
            return Err(Error::InvalidConfig(
                "scene radius and density must be positive".into(),
            ));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidConfig("noise sigma must be >= 0".into()));
        }
        if self.abundance.iter().any(|&w| w < 0.0) || self.abundance.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidConfig(
                "abundance weights must be >= 0 and not all zero".into(),
            ));
        }
        Ok(())
    }

    fn total_points(&self) -> usize {
        (self.density * std::f64::consts::PI * self.scene_radius * self.scene_radius).round()
            as usize
    }

    /// Point budget per class, proportional to the abundance weights.
    fn class_budgets(&self) -> [usize; 5] {
        let total = self.total_points() as f64;
        let weight_sum: f64 = self.abundance.iter().sum();
        let mut budgets = [0usize; 5];
        for (slot, &w) in budgets.iter_mut().zip(&self.abundance) {
            *slot = (total * w / weight_sum).round() as usize;
        }
        budgets
    }
}

/// An upright box footprint with a yaw, resting on the ground plane.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxObject {
    pub center: (f64, f64),
    pub half_w: f64,
    pub half_d: f64,
    pub height: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CylinderObject {
    pub center: (f64, f64),
    pub radius: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidObject {
    pub center: (f64, f64, f64),
    pub semi: (f64, f64, f64),
}

/// The object geometry a scene was built from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneLayout {
    pub buildings: Vec<BoxObject>,
    pub poles: Vec<CylinderObject>,
    pub vehicles: Vec<BoxObject>,
    pub shrubs: Vec<EllipsoidObject>,
}

fn disc_position(rng: &mut impl Rng, radius: f64) -> (f64, f64) {
    let r = radius * rng.random_range(0.0..1.0f64).sqrt();
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    (r * phi.cos(), r * phi.sin())
}

fn band_position(rng: &mut impl Rng, band: (f64, f64)) -> (f64, f64) {
    let r = rng.random_range(band.0..=band.1);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    (r * phi.cos(), r * phi.sin())
}

fn sample_layout(spec: &SceneSpec, rng: &mut impl Rng) -> SceneLayout {
    SceneLayout {
        buildings: (0..spec.buildings)
            .map(|_| BoxObject {
                center: band_position(rng, spec.building_band),
                half_w: rng.random_range(2.5..6.0),
                half_d: rng.random_range(2.5..6.0),
                height: rng.random_range(spec.building_height.0..=spec.building_height.1),
                yaw: rng.random_range(0.0..std::f64::consts::TAU),
            })
            .collect(),
        poles: (0..spec.poles)
            .map(|_| CylinderObject {
                center: band_position(rng, spec.pole_band),
                radius: rng.random_range(0.06..0.15),
                height: rng.random_range(spec.pole_height.0..=spec.pole_height.1),
            })
            .collect(),
        vehicles: (0..spec.vehicles)
            .map(|_| BoxObject {
                center: band_position(rng, spec.vehicle_band),
                half_w: rng.random_range(0.8..1.0),
                half_d: rng.random_range(1.9..2.3),
                height: rng.random_range(1.4..1.7),
                yaw: rng.random_range(0.0..std::f64::consts::TAU),
            })
            .collect(),
        shrubs: (0..spec.shrubs)
            .map(|_| {
                let semi = (
                    rng.random_range(spec.shrub_size.0..=spec.shrub_size.1),
                    rng.random_range(spec.shrub_size.0..=spec.shrub_size.1),
                    rng.random_range(spec.shrub_size.0..=spec.shrub_size.1),
                );
                let center = band_position(rng, spec.shrub_band);
                EllipsoidObject {
                    center: (center.0, center.1, semi.2),
                    semi,
                }
            })
            .collect(),
    }
}

fn sample_box_surface(rng: &mut impl Rng, b: &BoxObject) -> (f64, f64, f64) {
    // four walls plus the roof, picked by area
    let (w, d, h) = (2.0 * b.half_w, 2.0 * b.half_d, b.height);
    let areas = [w * h, w * h, d * h, d * h, w * d];
    let total: f64 = areas.iter().sum();
    let mut u = rng.random_range(0.0..total);
    let mut face = 4;
    for (i, a) in areas.iter().enumerate() {
        if u < *a {
            face = i;
            break;
        }
        u -= a;
    }
    let (lx, ly, lz) = match face {
        0 => (
            rng.random_range(-b.half_w..=b.half_w),
            -b.half_d,
            rng.random_range(0.0..=h),
        ),
        1 => (
            rng.random_range(-b.half_w..=b.half_w),
            b.half_d,
            rng.random_range(0.0..=h),
        ),
        2 => (
            -b.half_w,
            rng.random_range(-b.half_d..=b.half_d),
            rng.random_range(0.0..=h),
        ),
        3 => (
            b.half_w,
            rng.random_range(-b.half_d..=b.half_d),
            rng.random_range(0.0..=h),
        ),
        _ => (
            rng.random_range(-b.half_w..=b.half_w),
            rng.random_range(-b.half_d..=b.half_d),
            h,
        ),
    };
    let (sin, cos) = b.yaw.sin_cos();
    (
        b.center.0 + cos * lx - sin * ly,
        b.center.1 + sin * lx + cos * ly,
        lz,
    )
}

fn sample_cylinder_surface(rng: &mut impl Rng, c: &CylinderObject) -> (f64, f64, f64) {
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    (
        c.center.0 + c.radius * phi.cos(),
        c.center.1 + c.radius * phi.sin(),
        rng.random_range(0.0..=c.height),
    )
}

fn sample_ellipsoid_surface(rng: &mut impl Rng, e: &EllipsoidObject) -> (f64, f64, f64) {
    let (mut dx, mut dy, mut dz) = (gaussian(rng), gaussian(rng), gaussian(rng));
    let norm = (dx * dx + dy * dy + dz * dz).sqrt().max(1e-12);
    dx /= norm;
    dy /= norm;
    dz /= norm;
    (
        e.center.0 + e.semi.0 * dx,
        e.center.1 + e.semi.1 * dy,
        e.center.2 + e.semi.2 * dz,
    )
}

fn emit_point<S: Scalar>(
    rng: &mut impl Rng,
    spec: &SceneSpec,
    class_index: usize,
    (x, y, z): (f64, f64, f64),
    points: &mut Vec<Point<S>>,
    labels: &mut Vec<u32>,
) {
    let (mut x, mut y, mut z) = (x, y, z);
    if spec.noise_sigma > 0.0 {
        x += spec.noise_sigma * gaussian(rng);
        y += spec.noise_sigma * gaussian(rng);
        z += spec.noise_sigma * gaussian(rng);
    }
    let (lo, hi) = spec.intensity_ranges[class_index];
    let intensity = rng.random_range(lo..=hi);
    points.push(Point::new(sc(x), sc(y), sc(z), sc(intensity)));
    labels.push(CLASS_IDS[class_index]);
}

/// Spreads `budget` points over `objects` as evenly as possible.
fn per_object_budget(budget: usize, objects: usize) -> Vec<usize> {
    if objects == 0 {
        return Vec::new();
    }
    let base = budget / objects;
    let extra = budget % objects;
    (0..objects)
        .map(|i| base + usize::from(i < extra))
        .collect()
}

/// Generates one scene and reports the object layout it was built from.
/// Pure in `(spec, rng state)`.
pub fn generate_scene_with_layout<S: Scalar>(
    spec: &SceneSpec,
    rng: &mut impl Rng,
) -> (PointCloud<S>, LabelArray, SceneLayout) {
    let budgets = spec.class_budgets();
    let layout = sample_layout(spec, rng);
    let mut points: Vec<Point<S>> = Vec::new();
    let mut labels: Vec<u32> = Vec::new();

    for _ in 0..budgets[0] {
        let (x, y) = disc_position(rng, spec.scene_radius);
        emit_point(rng, spec, 0, (x, y, 0.0), &mut points, &mut labels);
    }
    for (b, budget) in layout
        .buildings
        .iter()
        .zip(per_object_budget(budgets[1], layout.buildings.len()))
    {
        for _ in 0..budget {
            let p = sample_box_surface(rng, b);
            emit_point(rng, spec, 1, p, &mut points, &mut labels);
        }
    }
    for (c, budget) in layout
        .poles
        .iter()
        .zip(per_object_budget(budgets[2], layout.poles.len()))
    {
        for _ in 0..budget {
            let p = sample_cylinder_surface(rng, c);
            emit_point(rng, spec, 2, p, &mut points, &mut labels);
        }
    }
    for (b, budget) in layout
        .vehicles
        .iter()
        .zip(per_object_budget(budgets[3], layout.vehicles.len()))
    {
        for _ in 0..budget {
            let p = sample_box_surface(rng, b);
            emit_point(rng, spec, 3, p, &mut points, &mut labels);
        }
    }
    for (e, budget) in layout
        .shrubs
        .iter()
        .zip(per_object_budget(budgets[4], layout.shrubs.len()))
    {
        for _ in 0..budget {
            let p = sample_ellipsoid_surface(rng, e);
            emit_point(rng, spec, 4, p, &mut points, &mut labels);
        }
    }

    (PointCloud::new(points), LabelArray::new(labels), layout)
}

/// Generates one scene. Pure in `(spec, rng state)`.
pub fn generate_scene<S: Scalar>(spec: &SceneSpec, rng: &mut impl Rng) -> (PointCloud<S>, LabelArray) {
    let (cloud, labels, _) = generate_scene_with_layout(spec, rng);
    (cloud, labels)
}

/// Generates `n_scans` labeled scans per domain, each scan from its own
/// derived stream so generation parallelizes without changing results.
pub fn make_domain_pair<S: Scalar>(
    source_spec: &SceneSpec,
    target_spec: &SceneSpec,
    n_scans: usize,
    seed: u64,
) -> Result<(LabeledScans<S>, LabeledScans<S>)> {
    source_spec.validate()?;
    target_spec.validate()?;
    let generate = |spec: &SceneSpec, domain: u64| -> LabeledScans<S> {
        (0..n_scans)
            .into_par_iter()
            .map(|index| {
                let mut rng = scan_stream(seed, domain, index as u64);
                generate_scene(spec, &mut rng)
            })
            .collect()
    };
    Ok((generate(source_spec, 0), generate(target_spec, 1)))
}

/// Materializes both domains under `root/source` and `root/target` in the
/// binary dataset layout. Target labels are written too; the pipeline only
/// reads them for evaluation.
pub fn write_domain_pair<S: Scalar>(
    root: impl AsRef<std::path::Path>,
    source: &LabeledScans<S>,
    target: &LabeledScans<S>,
    unlabeled_id: u32,
) -> Result<()> {
    let root = root.as_ref();
    for (scans, name) in [(source, "source"), (target, "target")] {
        let dir = root.join(name);
        for (index, (cloud, labels)) in scans.iter().enumerate() {
            write_scan_pair(&dir, index, cloud, Some(labels), unlabeled_id)?;
        }
    }
    Ok(())
}
