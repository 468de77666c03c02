//! Numeric training core: soft Dice loss and its analytic gradient, the
//! two-branch total objective, the exponential-moving-average teacher update
//! and the SGD step.
//!
//! Everything here is deterministic; per-class partial sums are reduced in
//! ascending class order.

use crate::cloud::{ClassSet, LabelArray, IGNORE_LABEL};
use crate::error::{Error, Result};
use crate::scalar::{sc, Scalar};

/// Smoothing constant of the soft Dice terms.
pub const DICE_EPSILON: f64 = 1e-5;

/// Per-point probability vectors over a class set, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityField<S> {
    values: Vec<S>,
    classes: usize,
}

impl<S: Scalar> ProbabilityField<S> {
    pub fn new(values: Vec<S>, classes: usize) -> Result<Self> {
        if classes == 0 || values.len() % classes != 0 {
            return Err(Error::ShapeMismatch {
                expected: classes.max(1),
                got: values.len(),
            });
        }
        Ok(ProbabilityField { values, classes })
    }

    pub fn points(&self) -> usize {
        self.values.len() / self.classes
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, point: usize) -> &[S] {
        &self.values[point * self.classes..(point + 1) * self.classes]
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    /// Column with the highest probability and that probability.
    pub fn argmax(&self, point: usize) -> (usize, S) {
        let row = self.row(point);
        let mut best = 0;
        for (i, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = i;
            }
        }
        (best, row[best])
    }

    /// Checks that every row is a probability vector (sums to 1 within 1e-5).
    pub fn validate(&self) -> Result<()> {
        let tol: S = sc(1e-5);
        for point in 0..self.points() {
            let row = self.row(point);
            let sum: S = row.iter().copied().sum();
            let in_range = row.iter().all(|&p| p >= S::zero() && p <= S::one());
            if !in_range || (sum - S::one()).abs() > tol {
                return Err(Error::BadProbability { row: point });
            }
        }
        Ok(())
    }
}

/// Flat parameter vector of a segmenter; the object of SGD and EMA blending.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<S> {
    values: Vec<S>,
}

impl<S: Scalar> ParamVector<S> {
    pub fn new(values: Vec<S>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteParam { index });
        }
        Ok(ParamVector { values })
    }

    pub fn zeros(len: usize) -> Self {
        ParamVector {
            values: vec![S::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.values
    }
}

/// Optimizer and teacher-update constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub lr: f64,
    /// EMA smoothing coefficient.
    pub beta: f64,
    /// Teacher-update period in optimizer iterations.
    pub gamma: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 0.001,
            beta: 0.99,
            gamma: 1,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::InvalidConfig(format!(
                "beta must be in [0,1), got {}",
                self.beta
            )));
        }
        if self.gamma == 0 {
            return Err(Error::InvalidConfig("gamma must be >= 1".into()));
        }
        Ok(())
    }
}

struct DiceTerms<S> {
    /// Probability columns of the classes present in the labels, ascending.
    columns: Vec<usize>,
    /// Per present class: sum of p over its own points.
    overlap: Vec<S>,
    /// Per present class: sum of p^2 over non-ignored points.
    prob_sq: Vec<S>,
    /// Per present class: its point count (sum of one-hot squares).
    support: Vec<S>,
}

fn dice_terms<S: Scalar>(
    probs: &ProbabilityField<S>,
    labels: &LabelArray,
    classes: &ClassSet,
) -> Result<DiceTerms<S>> {
    if probs.points() != labels.len() {
        return Err(Error::LengthMismatch {
            left: probs.points(),
            right: labels.len(),
        });
    }
    if probs.classes() != classes.len() {
        return Err(Error::ShapeMismatch {
            expected: classes.len(),
            got: probs.classes(),
        });
    }

    let mut columns = Vec::new();
    for class_id in labels.present_classes() {
        match classes.index_of(class_id) {
            Some(col) => columns.push(col),
            None => {
                return Err(Error::UnknownClassId {
                    id: class_id,
                    index: labels.iter().position(|&l| l == class_id).unwrap_or(0),
                })
            }
        }
    }
    columns.sort_unstable();
    if columns.is_empty() {
        return Err(Error::AllIgnored);
    }

    let mut overlap = vec![S::zero(); columns.len()];
    let mut prob_sq = vec![S::zero(); columns.len()];
    let mut support = vec![S::zero(); columns.len()];
    for (point, &label) in labels.iter().enumerate() {
        if label == IGNORE_LABEL {
            continue;
        }
        let row = probs.row(point);
        let label_col = classes.index_of(label).expect("checked above");
        for (k, &col) in columns.iter().enumerate() {
            let p = row[col];
            prob_sq[k] += p * p;
            if col == label_col {
                overlap[k] += p;
                support[k] += S::one();
            }
        }
    }
    Ok(DiceTerms {
        columns,
        overlap,
        prob_sq,
        support,
    })
}

/// Soft Dice loss over the classes present in `labels`, ignored points
/// excluded: `1 - mean_c (2*sum(p*y) + eps) / (sum(p^2) + sum(y^2) + eps)`.
/// The result lies in [0, 1].
pub fn dice_loss<S: Scalar>(
    probs: &ProbabilityField<S>,
    labels: &LabelArray,
    classes: &ClassSet,
) -> Result<S> {
    let terms = dice_terms(probs, labels, classes)?;
    let eps: S = sc(DICE_EPSILON);
    let two: S = sc(2.0);
    let mut dice_sum = S::zero();
    for k in 0..terms.columns.len() {
        let numerator = two * terms.overlap[k] + eps;
        let denominator = terms.prob_sq[k] + terms.support[k] + eps;
        dice_sum += numerator / denominator;
    }
    let count: S = sc(terms.columns.len() as f64);
    Ok(S::one() - dice_sum / count)
}

/// Analytic gradient of [`dice_loss`] with respect to every probability
/// entry, row-major `points x classes`. Rows of ignored points are zero.
pub fn dice_grad<S: Scalar>(
    probs: &ProbabilityField<S>,
    labels: &LabelArray,
    classes: &ClassSet,
) -> Result<Vec<S>> {
    let terms = dice_terms(probs, labels, classes)?;
    let eps: S = sc(DICE_EPSILON);
    let two: S = sc(2.0);
    let inv_count = S::one() / sc::<S>(terms.columns.len() as f64);

    // per present class: numerator, denominator of its Dice term
    let numerators: Vec<S> = terms
        .overlap
        .iter()
        .map(|&s| two * s + eps)
        .collect();
    let denominators: Vec<S> = terms
        .prob_sq
        .iter()
        .zip(&terms.support)
        .map(|(&q, &r)| q + r + eps)
        .collect();

    let n_classes = probs.classes();
    let mut grad = vec![S::zero(); probs.points() * n_classes];
    for (point, &label) in labels.iter().enumerate() {
        if label == IGNORE_LABEL {
            continue;
        }
        let row = probs.row(point);
        let label_col = classes.index_of(label).expect("validated");
        for (k, &col) in terms.columns.iter().enumerate() {
            let p = row[col];
            let y = if col == label_col { S::one() } else { S::zero() };
            let d = denominators[k];
            // d/dp of (2*S + eps)/(Q + R + eps)
            let derivative = (two * y * d - numerators[k] * two * p) / (d * d);
            grad[point * n_classes + col] = -inv_count * derivative;
        }
    }
    Ok(grad)
}

/// Total two-branch objective: the sum of whichever branch losses ran.
pub fn total_loss<S: Scalar>(loss_s2t: Option<S>, loss_t2s: Option<S>) -> S {
    loss_s2t.unwrap_or_else(S::zero) + loss_t2s.unwrap_or_else(S::zero)
}

/// Exponential-moving-average teacher update:
/// `teacher_i = beta * teacher_{i-1} + (1 - beta) * student`.
pub fn ema_update<S: Scalar>(
    teacher: &ParamVector<S>,
    student: &ParamVector<S>,
    beta: f64,
) -> Result<ParamVector<S>> {
    if teacher.len() != student.len() {
        return Err(Error::LengthMismatch {
            left: teacher.len(),
            right: student.len(),
        });
    }
    let b: S = sc(beta);
    let values = teacher
        .as_slice()
        .iter()
        .zip(student.as_slice())
        .map(|(&t, &s)| b * t + (S::one() - b) * s)
        .collect();
    ParamVector::new(values)
}

/// One plain SGD step: `p - lr * g` elementwise.
pub fn sgd_step<S: Scalar>(params: &ParamVector<S>, grads: &[S], lr: f64) -> Result<ParamVector<S>> {
    if params.len() != grads.len() {
        return Err(Error::LengthMismatch {
            left: params.len(),
            right: grads.len(),
        });
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }
    let step: S = sc(lr);
    let values = params
        .as_slice()
        .iter()
        .zip(grads)
        .map(|(&p, &g)| p - step * g)
        .collect();
    ParamVector::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngs::stream;
    use rand::Rng;

    fn class_set(n: usize) -> ClassSet {
        ClassSet::new((0..n as u32).map(|i| (i, format!("c{i}"))).collect()).unwrap()
    }

    fn one_hot_field(labels: &[u32], classes: usize) -> ProbabilityField<f64> {
        let mut values = vec![0.0; labels.len() * classes];
        for (i, &l) in labels.iter().enumerate() {
            values[i * classes + l as usize] = 1.0;
        }
        ProbabilityField::new(values, classes).unwrap()
    }

    #[test]
    fn perfect_prediction_has_near_zero_loss() {
        let labels = LabelArray::new(vec![0, 1, 2, 1]);
        let probs = one_hot_field(&[0, 1, 2, 1], 3);
        let loss = dice_loss(&probs, &labels, &class_set(3)).unwrap();
        assert!(loss >= 0.0 && loss <= 1e-4, "loss {loss}");
    }

    #[test]
    fn uniform_two_class_prediction_matches_closed_form() {
        // all points labeled class 0, predictions uniform over 2 classes:
        // D_0 = (n + eps) / (1.25 n + eps)
        for n in [4usize, 40, 400] {
            let labels = LabelArray::new(vec![0; n]);
            let probs =
                ProbabilityField::new(vec![0.5; n * 2], 2).unwrap();
            let loss = dice_loss(&probs, &labels, &class_set(2)).unwrap();
            let nf = n as f64;
            let expected = 1.0 - (nf + DICE_EPSILON) / (1.25 * nf + DICE_EPSILON);
            assert!((loss - expected).abs() < 1e-12, "n={n}: {loss} vs {expected}");
        }
    }

    #[test]
    fn loss_is_permutation_invariant() {
        let mut rng = stream(20, 0);
        let n = 30;
        let labels_vec: Vec<u32> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let mut values = Vec::new();
        for _ in 0..n {
            let mut row = [0.0f64; 3].map(|_| rng.random_range(0.01..1.0));
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= sum);
            values.extend_from_slice(&row);
        }
        let probs = ProbabilityField::new(values.clone(), 3).unwrap();
        let labels = LabelArray::new(labels_vec.clone());
        let loss = dice_loss(&probs, &labels, &class_set(3)).unwrap();

        let perm: Vec<usize> = {
            let mut p: Vec<usize> = (0..n as usize).collect();
            p.reverse();
            p.swap(0, 3);
            p
        };
        let perm_values: Vec<f64> = perm
            .iter()
            .flat_map(|&i| values[i * 3..(i + 1) * 3].to_vec())
            .collect();
        let perm_labels: LabelArray = perm.iter().map(|&i| labels_vec[i]).collect();
        let perm_probs = ProbabilityField::new(perm_values, 3).unwrap();
        let perm_loss = dice_loss(&perm_probs, &perm_labels, &class_set(3)).unwrap();
        assert!((loss - perm_loss).abs() < 1e-12);
    }

    #[test]
    fn all_ignored_is_an_error() {
        let labels = LabelArray::new(vec![IGNORE_LABEL; 3]);
        let probs = ProbabilityField::new(vec![0.5; 6], 2).unwrap();
        assert!(matches!(
            dice_loss(&probs, &labels, &class_set(2)),
            Err(Error::AllIgnored)
        ));
        assert!(matches!(
            dice_grad(&probs, &labels, &class_set(2)),
            Err(Error::AllIgnored)
        ));
    }

    /// Central finite differences of dice_loss, the independent oracle for
    /// the analytic gradient.
    fn numeric_dice_grad(
        values: &[f64],
        classes: usize,
        labels: &LabelArray,
        set: &ClassSet,
    ) -> Vec<f64> {
        let step = 1e-5;
        (0..values.len())
            .map(|i| {
                let mut plus = values.to_vec();
                plus[i] += step;
                let mut minus = values.to_vec();
                minus[i] -= step;
                let lp = dice_loss(
                    &ProbabilityField::new(plus, classes).unwrap(),
                    labels,
                    set,
                )
                .unwrap();
                let lm = dice_loss(
                    &ProbabilityField::new(minus, classes).unwrap(),
                    labels,
                    set,
                )
                .unwrap();
                (lp - lm) / (2.0 * step)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let set = class_set(3);
        let mut rng = stream(21, 0);
        for trial in 0..20 {
            let n = 5;
            let labels: LabelArray = (0..n)
                .map(|_| {
                    if trial % 5 == 0 && rng.random_range(0..4) == 0 {
                        IGNORE_LABEL
                    } else {
                        rng.random_range(0..3)
                    }
                })
                .collect();
            if labels.count_non_ignore() == 0 {
                continue;
            }
            let mut values = Vec::new();
            for _ in 0..n {
                let mut row = [0.0f64; 3].map(|_| rng.random_range(0.05..1.0));
                let sum: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= sum);
                values.extend_from_slice(&row);
            }
            let probs = ProbabilityField::new(values.clone(), 3).unwrap();
            let analytic = dice_grad(&probs, &labels, &set).unwrap();
            let numeric = numeric_dice_grad(&values, 3, &labels, &set);
            for (a, e) in analytic.iter().zip(&numeric) {
                let scale = e.abs().max(1e-6);
                assert!(
                    (a - e).abs() / scale < 1e-4,
                    "trial {trial}: analytic {a} vs numeric {e}"
                );
            }
        }
    }

    #[test]
    fn ignored_points_have_zero_gradient() {
        let labels = LabelArray::new(vec![0, IGNORE_LABEL, 1]);
        let probs = ProbabilityField::new(
            vec![0.7, 0.3, 0.5, 0.5, 0.2, 0.8],
            2,
        )
        .unwrap();
        let grad = dice_grad(&probs, &labels, &class_set(2)).unwrap();
        assert_eq!(&grad[2..4], &[0.0, 0.0]);
    }

    #[test]
    fn gradient_is_small_at_a_perfect_prediction() {
        let labels = LabelArray::new(vec![0, 1, 2, 0, 1]);
        let probs = one_hot_field(&[0, 1, 2, 0, 1], 3);
        let grad = dice_grad(&probs, &labels, &class_set(3)).unwrap();
        let norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm <= 1e-3, "norm {norm}");
    }

    #[test]
    fn total_loss_sums_the_branches() {
        assert_eq!(total_loss(Some(0.3), Some(0.5)), 0.8);
        assert_eq!(total_loss::<f64>(Some(0.0), Some(0.0)), 0.0);
        assert_eq!(total_loss(None, Some(0.4)), 0.4);
        assert_eq!(total_loss(Some(0.7), None::<f64>), 0.7);
    }

    #[test]
    fn ema_blends_toward_the_student() {
        let teacher = ParamVector::new(vec![1.0f64]).unwrap();
        let student = ParamVector::new(vec![0.0f64]).unwrap();
        let updated = ema_update(&teacher, &student, 0.99).unwrap();
        assert!((updated.as_slice()[0] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn ema_fixed_point_when_equal() {
        let params = ParamVector::new(vec![0.5f64, -2.0, 3.25]).unwrap();
        let updated = ema_update(&params, &params, 0.9).unwrap();
        for (a, b) in updated.as_slice().iter().zip(params.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn ema_decays_geometrically() {
        let student = ParamVector::new(vec![2.0f64]).unwrap();
        let mut teacher = ParamVector::new(vec![5.0f64]).unwrap();
        let beta = 0.99;
        let initial_gap = (teacher.as_slice()[0] - student.as_slice()[0]).abs();
        for k in 1..=10 {
            teacher = ema_update(&teacher, &student, beta).unwrap();
            let gap = (teacher.as_slice()[0] - student.as_slice()[0]).abs();
            let expected = beta.powi(k) * initial_gap;
            assert!((gap - expected).abs() < 1e-12, "k={k}: {gap} vs {expected}");
        }
    }

    #[test]
    fn ema_is_a_convex_combination() {
        let teacher = ParamVector::new(vec![1.0f64, -4.0, 0.0]).unwrap();
        let student = ParamVector::new(vec![-1.0f64, 2.0, 0.0]).unwrap();
        let updated = ema_update(&teacher, &student, 0.3).unwrap();
        for ((&u, &t), &s) in updated
            .as_slice()
            .iter()
            .zip(teacher.as_slice())
            .zip(student.as_slice())
        {
            assert!(u >= t.min(s) - 1e-12 && u <= t.max(s) + 1e-12);
        }
    }

    #[test]
    fn sgd_takes_the_stated_step() {
        let params = ParamVector::new(vec![1.0f64]).unwrap();
        let updated = sgd_step(&params, &[1.0], 0.001).unwrap();
        assert!((updated.as_slice()[0] - 0.999).abs() < 1e-15);
    }

    #[test]
    fn sgd_with_zero_gradient_is_identity() {
        let params = ParamVector::new(vec![0.3f64, -0.7]).unwrap();
        let updated = sgd_step(&params, &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(updated, params);
    }

    #[test]
    fn sgd_descends_a_quadratic() {
        // f(x) = x^2 / 2, f'(x) = x, from x = 1
        let params = ParamVector::new(vec![1.0f64]).unwrap();
        let updated = sgd_step(&params, &[1.0], 0.001).unwrap();
        let x = updated.as_slice()[0];
        assert!((x - 0.999).abs() < 1e-15);
        assert!(0.5 * x * x < 0.5);
    }

    #[test]
    fn sgd_rejects_non_finite_gradients() {
        let params = ParamVector::new(vec![1.0f64]).unwrap();
        assert!(matches!(
            sgd_step(&params, &[f64::NAN], 0.1),
            Err(Error::NonFiniteGradient { index: 0 })
        ));
    }
}
