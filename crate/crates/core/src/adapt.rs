//! The adaptation loop: source-only warm-up, the two-branch mixed-sample
//! training iteration, periodic EMA teacher refresh, and evaluation.

use rand::seq::SliceRandom;

use crate::cloud::{ClassSet, LabelArray, PointCloud};
use crate::error::{Error, Result};
use crate::learn::{ema_update, sgd_step, OptimConfig, ParamVector};
use crate::metrics::{evaluate, EvalReport, ZeroUnionPolicy};
use crate::mix::{mix_pair, GlobalAugConfig, LocalAugConfig};
use crate::rngs::{stream, StreamRng};
use crate::scalar::Scalar;
use crate::segmenter::{field_to_prediction, Segmenter, ToySegmenter};
use crate::select::{calibrate_zeta, class_frequency, ClassHistogram, SelectionConfig};

const STREAM_WARMUP: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_MIX: u64 = 3;

/// Scans pooled when auto-calibrating the confidence threshold.
const CALIBRATION_SCAN_CAP: usize = 16;

/// A labeled dataset held in memory.
pub type LabeledScans<S> = Vec<(PointCloud<S>, LabelArray)>;

/// Component switches of the loop (the ablation axes).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationFlags {
    pub branch_s2t: bool,
    pub branch_t2s: bool,
    pub local_aug: bool,
    pub global_aug: bool,
    pub weighted_selection: bool,
    pub ema: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            branch_s2t: true,
            branch_t2s: true,
            local_aug: true,
            global_aug: true,
            weighted_selection: true,
            ema: true,
        }
    }
}

/// How the pseudo-label confidence threshold is chosen for the loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZetaMode {
    /// Use the configured threshold as is.
    Fixed(f64),
    /// Calibrate the threshold once after warm-up so that roughly this
    /// fraction of pseudo-labeled points per scene survives the filter.
    AutoRetain(f64),
}

impl Default for ZetaMode {
    fn default() -> Self {
        ZetaMode::AutoRetain(0.8)
    }
}

/// Everything the loop needs to run.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationConfig {
    pub classes: ClassSet,
    pub epochs_warmup: u32,
    pub epochs_adapt: u32,
    pub batch_size: usize,
    pub selection: SelectionConfig,
    pub zeta_mode: ZetaMode,
    pub local_aug: LocalAugConfig,
    pub global_aug: GlobalAugConfig,
    pub optim: OptimConfig,
    pub flags: AblationFlags,
    pub voxel_size: f64,
    pub feature_radius: f64,
    pub zero_union: ZeroUnionPolicy,
    pub seed: u64,
}

impl AdaptationConfig {
    pub fn new(classes: ClassSet) -> Self {
        AdaptationConfig {
            classes,
            epochs_warmup: 10,
            epochs_adapt: 10,
            batch_size: 1,
            selection: SelectionConfig::default(),
            zeta_mode: ZetaMode::default(),
            local_aug: LocalAugConfig::default(),
            global_aug: GlobalAugConfig::default(),
            optim: OptimConfig::default(),
            flags: AblationFlags::default(),
            voxel_size: 0.5,
            feature_radius: 50.0,
            zero_union: ZeroUnionPolicy::Exclude,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if let ZetaMode::AutoRetain(target) = self.zeta_mode {
            if !(target > 0.0 && target < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "retention target must be in (0,1), got {target}"
                )));
            }
        }
        self.selection.validate()?;
        self.local_aug.validate()?;
        self.global_aug.validate()?;
        self.optim.validate()
    }

    fn effective_selection(&self, zeta: f64) -> SelectionConfig {
        SelectionConfig {
            zeta,
            weighted: self.flags.weighted_selection,
            ..self.selection.clone()
        }
    }

    fn effective_local(&self) -> LocalAugConfig {
        LocalAugConfig {
            enabled: self.local_aug.enabled && self.flags.local_aug,
            ..self.local_aug.clone()
        }
    }

    fn effective_global(&self) -> GlobalAugConfig {
        GlobalAugConfig {
            enabled: self.global_aug.enabled && self.flags.global_aug,
            ..self.global_aug.clone()
        }
    }
}

/// One metrics-log line: branch losses of an iteration plus the most recent
/// target mIoU. Missing values are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub iteration: u64,
    pub epoch: u32,
    pub loss_s2t: f64,
    pub loss_t2s: f64,
    pub miou: f64,
}

/// Student and teacher with the iteration counter and the metric history.
#[derive(Debug, Clone)]
pub struct TrainState<S> {
    pub student: ToySegmenter<S>,
    pub teacher: ToySegmenter<S>,
    pub iteration: u64,
    pub history: Vec<MetricsRecord>,
    /// Confidence threshold the loop resolved (set during [`adapt_run`]).
    pub zeta: f64,
}

/// Callbacks for logging and checkpointing; all default to no-ops.
pub trait RunObserver<S: Scalar> {
    fn on_record(&mut self, _record: &MetricsRecord) -> Result<()> {
        Ok(())
    }
    fn on_epoch_end(&mut self, _epoch: u32, _state: &TrainState<S>) -> Result<()> {
        Ok(())
    }
}

/// Observer that does nothing.
pub struct NoopObserver;

impl<S: Scalar> RunObserver<S> for NoopObserver {}

fn mean_of(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Trains the student on source data only and snapshots it into the teacher.
pub fn warmup<S: Scalar>(
    source: &LabeledScans<S>,
    mut student: ToySegmenter<S>,
    cfg: &AdaptationConfig,
) -> Result<TrainState<S>> {
    if source.is_empty() {
        return Err(Error::EmptyDataset("warm-up needs source scans".into()));
    }
    let mut rng = stream(cfg.seed, STREAM_WARMUP);
    let mut indices: Vec<usize> = (0..source.len()).collect();
    for _ in 0..cfg.epochs_warmup {
        indices.shuffle(&mut rng);
        for batch in indices.chunks(cfg.batch_size) {
            let mut grad_sum: Option<Vec<S>> = None;
            let mut contributions = 0usize;
            for &index in batch {
                let (cloud, labels) = &source[index];
                match student.grad(cloud, labels) {
                    Ok(grad) => {
                        accumulate(&mut grad_sum, grad.as_slice());
                        contributions += 1;
                    }
                    Err(Error::AllIgnored) => continue,
                    Err(e) => return Err(e),
                }
            }
            apply_mean_step(&mut student, grad_sum, contributions, cfg.optim.lr)?;
        }
    }
    let teacher = student.clone();
    Ok(TrainState {
        student,
        teacher,
        iteration: 0,
        history: Vec::new(),
        zeta: cfg.selection.zeta,
    })
}

fn accumulate<S: Scalar>(sum: &mut Option<Vec<S>>, grad: &[S]) {
    match sum {
        None => *sum = Some(grad.to_vec()),
        Some(acc) => {
            for (a, &g) in acc.iter_mut().zip(grad) {
                *a += g;
            }
        }
    }
}

fn apply_mean_step<S: Scalar>(
    student: &mut ToySegmenter<S>,
    grad_sum: Option<Vec<S>>,
    contributions: usize,
    lr: f64,
) -> Result<()> {
    let Some(mut grad) = grad_sum else {
        return Ok(());
    };
    let scale = S::one() / S::from(contributions).unwrap();
    for g in &mut grad {
        *g *= scale;
    }
    let params = student.params();
    let updated = sgd_step(&params, &grad, lr)?;
    student.set_params(&updated)
}

/// Branch losses of one iteration (NaN when a branch did not run).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    pub loss_s2t: f64,
    pub loss_t2s: f64,
}

/// Runs one adaptation step over a batch of (source, target) scan pairs:
/// teacher pseudo-labels, two-branch mixing, Dice losses, one SGD step on
/// the student, and the scheduled teacher update.
pub fn adapt_iteration<S: Scalar>(
    state: &mut TrainState<S>,
    source_batch: &[&(PointCloud<S>, LabelArray)],
    target_batch: &[&PointCloud<S>],
    cfg: &AdaptationConfig,
    histogram: &ClassHistogram,
    zeta: f64,
    rng: &mut StreamRng,
) -> Result<IterationStats> {
    let selection = cfg.effective_selection(zeta);
    let local_aug = cfg.effective_local();
    let global_aug = cfg.effective_global();

    let mut grad_sum: Option<Vec<S>> = None;
    let mut samples = 0usize;
    let mut losses_s2t = Vec::new();
    let mut losses_t2s = Vec::new();

    for (&(source_cloud, source_labels), &target_cloud) in
        source_batch.iter().zip(target_batch)
    {
        let field = state.teacher.predict(target_cloud);
        let prediction = field_to_prediction(&field, state.teacher.class_set());
        let pair = mix_pair(
            source_cloud,
            source_labels,
            target_cloud,
            &prediction,
            &selection,
            &local_aug,
            &global_aug,
            histogram,
            rng,
        )?;

        let mut sample_grad: Option<Vec<S>> = None;
        if cfg.flags.branch_s2t {
            match branch_loss_and_grad(&state.student, &pair.source_to_target) {
                Ok((loss, grad)) => {
                    losses_s2t.push(loss);
                    accumulate(&mut sample_grad, &grad);
                }
                Err(Error::AllIgnored) => {}
                Err(e) => return Err(e),
            }
        }
        if cfg.flags.branch_t2s {
            match branch_loss_and_grad(&state.student, &pair.target_to_source) {
                Ok((loss, grad)) => {
                    losses_t2s.push(loss);
                    accumulate(&mut sample_grad, &grad);
                }
                Err(Error::AllIgnored) => {}
                Err(e) => return Err(e),
            }
        }
        if let Some(grad) = sample_grad {
            accumulate(&mut grad_sum, &grad);
            samples += 1;
        }
    }

    let stats = IterationStats {
        loss_s2t: mean_of(&losses_s2t),
        loss_t2s: mean_of(&losses_t2s),
    };
    let total = stats.loss_s2t.max(0.0).max(stats.loss_t2s.max(0.0));
    if total.is_infinite() {
        return Err(Error::NonFiniteLoss {
            iteration: state.iteration,
        });
    }

    apply_mean_step(&mut state.student, grad_sum, samples.max(1), cfg.optim.lr)?;
    state.iteration += 1;

    if cfg.flags.ema && state.iteration % cfg.optim.gamma == 0 {
        let updated = ema_update(
            &state.teacher.params(),
            &state.student.params(),
            cfg.optim.beta,
        )?;
        state.teacher.set_params(&updated)?;
    }
    Ok(stats)
}

fn branch_loss_and_grad<S: Scalar>(
    student: &ToySegmenter<S>,
    sample: &crate::mix::MixedSample<S>,
) -> Result<(f64, Vec<S>)> {
    let field = student.predict(&sample.cloud);
    let loss = crate::learn::dice_loss(&field, &sample.labels, student.class_set())?;
    let loss = loss.to_f64().unwrap();
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { iteration: 0 });
    }
    let grad = student.grad(&sample.cloud, &sample.labels)?;
    Ok((loss, grad.as_slice().to_vec()))
}

/// Pools teacher confidences over the first scans of the target set and
/// calibrates the retention threshold.
fn auto_zeta<S: Scalar>(
    teacher: &ToySegmenter<S>,
    target: &[PointCloud<S>],
    retain: f64,
) -> Result<f64> {
    let mut confidences: Vec<S> = Vec::new();
    for cloud in target.iter().take(CALIBRATION_SCAN_CAP) {
        let field = teacher.predict(cloud);
        let prediction = field_to_prediction(&field, teacher.class_set());
        confidences.extend_from_slice(prediction.confidences());
    }
    let zeta = calibrate_zeta(&confidences, retain)?;
    Ok(zeta.to_f64().unwrap())
}

/// Full run: warm-up, threshold resolution, `epochs_adapt` epochs of
/// [`adapt_iteration`] over independently shuffled source/target pairings,
/// an evaluation per epoch when target labels exist, and one final record
/// carrying the final target mIoU.
pub fn adapt_run<S: Scalar>(
    source: &LabeledScans<S>,
    target: &[PointCloud<S>],
    target_eval: Option<&LabeledScans<S>>,
    cfg: &AdaptationConfig,
    observer: &mut dyn RunObserver<S>,
) -> Result<TrainState<S>> {
    cfg.validate()?;
    if target.is_empty() {
        return Err(Error::EmptyDataset("no target scans".into()));
    }
    let histogram = class_frequency(source.iter().map(|(_, labels)| labels))?;

    let student = ToySegmenter::new(cfg.classes.clone(), cfg.voxel_size, cfg.feature_radius)?;
    let mut state = warmup(source, student, cfg)?;

    let eval_now = |state: &TrainState<S>| -> Result<f64> {
        match target_eval {
            Some(scans) => Ok(evaluate(scans, &state.student, cfg.zero_union)?.miou),
            None => Ok(f64::NAN),
        }
    };
    let mut miou = eval_now(&state)?;
    let baseline = MetricsRecord {
        iteration: 0,
        epoch: 0,
        loss_s2t: f64::NAN,
        loss_t2s: f64::NAN,
        miou,
    };
    state.history.push(baseline);
    observer.on_record(&baseline)?;

    let zeta = match cfg.zeta_mode {
        ZetaMode::Fixed(z) => z,
        ZetaMode::AutoRetain(retain) => auto_zeta(&state.teacher, target, retain)?,
    };
    state.zeta = zeta;

    let mut shuffle_rng = stream(cfg.seed, STREAM_SHUFFLE);
    let mut mix_rng = stream(cfg.seed, STREAM_MIX);
    let pairs_per_epoch = source.len().min(target.len());

    for epoch in 1..=cfg.epochs_adapt {
        let mut source_order: Vec<usize> = (0..source.len()).collect();
        let mut target_order: Vec<usize> = (0..target.len()).collect();
        source_order.shuffle(&mut shuffle_rng);
        target_order.shuffle(&mut shuffle_rng);

        for start in (0..pairs_per_epoch).step_by(cfg.batch_size) {
            let end = (start + cfg.batch_size).min(pairs_per_epoch);
            let source_batch: Vec<&(PointCloud<S>, LabelArray)> =
                source_order[start..end].iter().map(|&i| &source[i]).collect();
            let target_batch: Vec<&PointCloud<S>> =
                target_order[start..end].iter().map(|&i| &target[i]).collect();
            let stats = adapt_iteration(
                &mut state,
                &source_batch,
                &target_batch,
                cfg,
                &histogram,
                zeta,
                &mut mix_rng,
            )?;
            let record = MetricsRecord {
                iteration: state.iteration,
                epoch,
                loss_s2t: stats.loss_s2t,
                loss_t2s: stats.loss_t2s,
                miou,
            };
            state.history.push(record);
            observer.on_record(&record)?;
        }

        miou = eval_now(&state)?;
        observer.on_epoch_end(epoch, &state)?;
    }

    let final_record = MetricsRecord {
        iteration: state.iteration,
        epoch: cfg.epochs_adapt,
        loss_s2t: f64::NAN,
        loss_t2s: f64::NAN,
        miou,
    };
    state.history.push(final_record);
    observer.on_record(&final_record)?;
    Ok(state)
}

/// Evaluates a labeled dataset with a segmenter behind [`evaluate`].
pub fn evaluate_dataset<S: Scalar>(
    scans: &LabeledScans<S>,
    segmenter: &dyn Segmenter<S>,
    policy: ZeroUnionPolicy,
) -> Result<EvalReport> {
    evaluate(scans, segmenter, policy)
}

/// Parameter snapshot helper used by checkpoint writers.
pub fn student_params<S: Scalar>(state: &TrainState<S>) -> ParamVector<S> {
    state.student.params()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point;
    use crate::metrics::ConfusionMatrix;
    use rand::Rng;

    fn two_class_set() -> ClassSet {
        ClassSet::new(vec![(1, "low".into()), (2, "high".into())]).unwrap()
    }

    /// Linearly separable toy data: intensity splits the two classes.
    fn separable_scans(count: usize, seed: u64) -> LabeledScans<f64> {
        (0..count)
            .map(|index| {
                let mut rng = stream(seed, index as u64);
                let mut points = Vec::new();
                let mut labels = Vec::new();
                for _ in 0..40 {
                    let low = rng.random_range(0..2) == 0;
                    points.push(Point::new(
                        rng.random_range(-10.0..10.0),
                        rng.random_range(-10.0..10.0),
                        rng.random_range(0.0..4.0),
                        if low {
                            rng.random_range(0.05..0.25)
                        } else {
                            rng.random_range(0.75..0.95)
                        },
                    ));
                    labels.push(if low { 1 } else { 2 });
                }
                (PointCloud::new(points), LabelArray::new(labels))
            })
            .collect()
    }

    fn base_config() -> AdaptationConfig {
        let mut cfg = AdaptationConfig::new(two_class_set());
        cfg.batch_size = 4;
        cfg.seed = 9;
        cfg
    }

    #[test]
    fn warmup_initializes_teacher_as_student_copy() {
        let source = separable_scans(8, 1);
        let cfg = base_config();
        let student = ToySegmenter::new(cfg.classes.clone(), cfg.voxel_size, cfg.feature_radius)
            .unwrap();
        let state = warmup(&source, student, &cfg).unwrap();
        assert_eq!(state.student.params(), state.teacher.params());
        assert_eq!(state.iteration, 0);
    }

    #[test]
    fn zero_warmup_epochs_leave_params_untouched() {
        let source = separable_scans(4, 2);
        let mut cfg = base_config();
        cfg.epochs_warmup = 0;
        let student = ToySegmenter::new(cfg.classes.clone(), cfg.voxel_size, cfg.feature_radius)
            .unwrap();
        let initial = student.params();
        let state = warmup(&source, student, &cfg).unwrap();
        assert_eq!(state.student.params(), initial);
    }

    #[test]
    fn warmup_fits_separable_data() {
        // convergence at lr 0.001 needs on the order of 2k iterations
        let source = separable_scans(200, 3);
        let mut cfg = base_config();
        cfg.batch_size = 1;
        let student = ToySegmenter::new(cfg.classes.clone(), cfg.voxel_size, cfg.feature_radius)
            .unwrap();
        let state = warmup(&source, student, &cfg).unwrap();
        let mut matrix = ConfusionMatrix::new(cfg.classes.clone());
        for (cloud, labels) in &source {
            let field = state.student.predict(cloud);
            let predicted: LabelArray = (0..field.points())
                .map(|p| cfg.classes.id_at(field.argmax(p).0))
                .collect();
            matrix.record_pair(labels, &predicted).unwrap();
        }
        assert!(matrix.accuracy() > 0.9, "accuracy {}", matrix.accuracy());
    }

    fn toy_run(cfg: &AdaptationConfig) -> TrainState<f64> {
        let source = separable_scans(10, 4);
        let target: Vec<PointCloud<f64>> = separable_scans(10, 5)
            .into_iter()
            .map(|(cloud, _)| cloud)
            .collect();
        let eval = separable_scans(10, 5);
        adapt_run(&source, &target, Some(&eval), cfg, &mut NoopObserver).unwrap()
    }

    #[test]
    fn disabled_branches_freeze_the_student() {
        let mut cfg = base_config();
        cfg.flags.branch_s2t = false;
        cfg.flags.branch_t2s = false;
        cfg.epochs_adapt = 2;
        let source = separable_scans(10, 4);
        let warm = warmup(
            &source,
            ToySegmenter::new(cfg.classes.clone(), cfg.voxel_size, cfg.feature_radius).unwrap(),
            &cfg,
        )
        .unwrap();
        let state = toy_run(&cfg);
        assert_eq!(state.student.params(), warm.student.params());
        assert!(state.iteration > 0);
    }

    #[test]
    fn ema_off_keeps_the_teacher_frozen() {
        let mut cfg = base_config();
        cfg.flags.ema = false;
        cfg.epochs_adapt = 2;
        let state = toy_run(&cfg);
        // teacher still equals the warm-up snapshot while the student moved
        let source = separable_scans(10, 4);
        let warm = warmup(
            &source,
            ToySegmenter::new(cfg.classes.clone(), cfg.voxel_size, cfg.feature_radius).unwrap(),
            &cfg,
        )
        .unwrap();
        assert_eq!(state.teacher.params(), warm.student.params());
        assert_ne!(state.student.params(), warm.student.params());
    }

    #[test]
    fn teacher_updates_only_on_gamma_boundaries() {
        let mut cfg = base_config();
        cfg.optim.gamma = 3;
        cfg.epochs_adapt = 1;
        let source = separable_scans(10, 4);
        let target: Vec<PointCloud<f64>> = separable_scans(10, 5)
            .into_iter()
            .map(|(cloud, _)| cloud)
            .collect();
        let histogram = class_frequency(source.iter().map(|(_, l)| l)).unwrap();
        let mut state = warmup(
            &source,
            ToySegmenter::new(cfg.classes.clone(), cfg.voxel_size, cfg.feature_radius).unwrap(),
            &cfg,
        )
        .unwrap();
        let mut rng = stream(cfg.seed, STREAM_MIX);
        let snapshot = state.teacher.params();
        for step in 1..=4u64 {
            let source_batch: Vec<_> = source.iter().take(2).collect();
            let target_batch: Vec<_> = target.iter().take(2).collect();
            adapt_iteration(
                &mut state,
                &source_batch,
                &target_batch,
                &cfg,
                &histogram,
                0.2,
                &mut rng,
            )
            .unwrap();
            if step < 3 {
                assert_eq!(state.teacher.params(), snapshot, "step {step}");
            }
            if step == 3 {
                assert_ne!(state.teacher.params(), snapshot);
            }
        }
    }

    #[test]
    fn adapt_run_is_bitwise_reproducible() {
        let mut cfg = base_config();
        cfg.epochs_adapt = 2;
        let a = toy_run(&cfg);
        let b = toy_run(&cfg);
        assert_eq!(a.student.params(), b.student.params());
        assert_eq!(a.history.len(), b.history.len());
        for (ra, rb) in a.history.iter().zip(&b.history) {
            assert_eq!(ra.iteration, rb.iteration);
            assert_eq!(ra.loss_s2t.to_bits(), rb.loss_s2t.to_bits());
            assert_eq!(ra.loss_t2s.to_bits(), rb.loss_t2s.to_bits());
            assert_eq!(ra.miou.to_bits(), rb.miou.to_bits());
        }
    }

    #[test]
    fn history_final_record_matches_final_evaluation() {
        let mut cfg = base_config();
        cfg.epochs_adapt = 1;
        let state = toy_run(&cfg);
        let eval = separable_scans(10, 5);
        let report = evaluate(&eval, &state.student, cfg.zero_union).unwrap();
        let last = state.history.last().unwrap();
        assert_eq!(last.miou.to_bits(), report.miou.to_bits());
    }
}
