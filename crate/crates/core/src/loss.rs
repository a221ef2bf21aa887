//! Univariate Macro-AUC surrogate losses.
//!
//! For class `k` with positive set `P` and negative set `N` in a view of the
//! data, the reweighted risk is
//!
//! ```text
//! R_k = (1/|P|) sum_{i in P} l(f_k(x_i) - d_k+) + (1/|N|) sum_{i in N} l(-f_k(x_i) - d_k-)
//! ```
//!
//! with label-distribution-aware margins `d_k+ = d_k- = lambda / |D_k+|^(1/4)`
//! (RLDAM). Zero margins give the reweighted univariate loss (RU). A task risk
//! averages `R_k` over the task's classes; the continual risk averages the
//! current task risk with the risks of the memory subsets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::ClassCount;
use crate::{ClassId, Error, Result};

/// Margin-based binary loss `l(z)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLoss {
    /// `max(0, 1 - z)`.
    #[default]
    Hinge,
    /// `ln(1 + e^-z)`.
    Logistic,
}

pub fn base_loss(z: f64, base: BaseLoss) -> f64 {
    match base {
        BaseLoss::Hinge => (1.0 - z).max(0.0),
        BaseLoss::Logistic => {
            if z > 0.0 {
                (-z).exp().ln_1p()
            } else {
                -z + z.exp().ln_1p()
            }
        }
    }
}

/// Derivative of [`base_loss`]; the hinge subgradient at the kink is 0.
pub fn base_loss_grad(z: f64, base: BaseLoss) -> f64 {
    match base {
        BaseLoss::Hinge => {
            if z < 1.0 {
                -1.0
            } else {
                0.0
            }
        }
        BaseLoss::Logistic => {
            if z >= 0.0 {
                let e = (-z).exp();
                -e / (1.0 + e)
            } else {
                -1.0 / (1.0 + z.exp())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Reweighted loss with label-distribution-aware margins.
    #[default]
    Rldam,
    /// Reweighted univariate loss (RLDAM with zero margins).
    Ru,
    /// Unweighted binary cross-entropy with logits.
    Bce,
    /// Unweighted univariate loss with margins (every example weighted `1/n`).
    Margin,
}

impl LossKind {
    pub fn uses_margins(self) -> bool {
        matches!(self, LossKind::Rldam | LossKind::Margin)
    }

    pub fn is_reweighted(self) -> bool {
        matches!(self, LossKind::Rldam | LossKind::Ru)
    }
}

/// Which counts reweight replayed examples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    /// Counts of the replayed view itself (class-conditional means).
    View,
    /// Original task counts stored alongside the memory, when available. A
    /// replayed task then contributes in proportion to its stored share.
    #[default]
    Stored,
}

fn default_lambda() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default)]
    pub base: BaseLoss,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Use `l(z / d)` instead of `l(z - d)`.
    #[serde(default)]
    pub normalized_margin: bool,
    #[serde(default)]
    pub memory_weights: WeightSource,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Rldam,
            base: BaseLoss::Hinge,
            lambda: 1.0,
            normalized_margin: false,
            memory_weights: WeightSource::Stored,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda {} must be finite and >= 0",
                self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Margin {
    pub pos: f64,
    pub neg: f64,
}

impl Margin {
    pub const ZERO: Margin = Margin { pos: 0.0, neg: 0.0 };

    pub fn symmetric(delta: f64) -> Self {
        Self {
            pos: delta,
            neg: delta,
        }
    }
}

/// Per-class margins derived from positive counts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MarginSchedule {
    pub lambda: f64,
    margins: BTreeMap<ClassId, Margin>,
}

impl MarginSchedule {
    pub fn get(&self, class: ClassId) -> Option<Margin> {
        self.margins.get(&class).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClassId, Margin)> + '_ {
        self.margins.iter().map(|(&k, &m)| (k, m))
    }
}

/// `d_k+ = d_k- = lambda * count_k^(-1/4)` for each `(class, positive count)`.
pub fn build_margins<I>(counts_pos: I, lambda: f64) -> Result<MarginSchedule>
where
    I: IntoIterator<Item = (ClassId, usize)>,
{
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!("lambda {lambda} must be >= 0")));
    }
    let mut margins = BTreeMap::new();
    for (k, c) in counts_pos {
        if c == 0 {
            return Err(Error::ZeroCount(k));
        }
        margins.insert(k, Margin::symmetric(lambda / (c as f64).powf(0.25)));
    }
    Ok(MarginSchedule { lambda, margins })
}

/// Reweighting denominators per class.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassWeights {
    counts: BTreeMap<ClassId, ClassCount>,
}

impl ClassWeights {
    pub fn from_counts<I: IntoIterator<Item = (ClassId, ClassCount)>>(counts: I) -> Self {
        Self {
            counts: counts.into_iter().collect(),
        }
    }

    /// Counts taken from the labels of the view itself.
    pub fn from_view(labels: &[&[u8]], class_set: &[ClassId]) -> Self {
        Self::from_counts(class_set.iter().map(|&k| {
            let pos = labels.iter().filter(|y| y[k] == 1).count();
            (k, ClassCount::new(pos, labels.len() - pos))
        }))
    }

    pub fn count(&self, class: ClassId) -> Option<ClassCount> {
        self.counts.get(&class).copied()
    }

    /// `(1/|P|, 1/|N|)`, with 0 for an empty side.
    pub fn weights(&self, class: ClassId) -> (f64, f64) {
        let c = self.count(class).unwrap_or_default();
        let inv = |n: usize| if n == 0 { 0.0 } else { 1.0 / n as f64 };
        (inv(c.pos), inv(c.neg))
    }
}

#[inline]
fn pos_term(f: f64, delta: f64, base: BaseLoss, normalized: bool) -> (f64, f64) {
    if normalized && delta > 0.0 {
        let z = f / delta;
        (base_loss(z, base), base_loss_grad(z, base) / delta)
    } else {
        let z = f - delta;
        (base_loss(z, base), base_loss_grad(z, base))
    }
}

#[inline]
fn neg_term(f: f64, delta: f64, base: BaseLoss, normalized: bool) -> (f64, f64) {
    if normalized && delta > 0.0 {
        let z = -f / delta;
        (base_loss(z, base), -base_loss_grad(z, base) / delta)
    } else {
        let z = -f - delta;
        (base_loss(z, base), -base_loss_grad(z, base))
    }
}

/// `l(f_pos - d+) + l(-f_neg - d-)`.
pub fn rldam_pair(f_pos: f64, f_neg: f64, margin: Margin, base: BaseLoss, normalized: bool) -> f64 {
    pos_term(f_pos, margin.pos, base, normalized).0 + neg_term(f_neg, margin.neg, base, normalized).0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Degeneracy {
    NoPositives,
    NoNegatives,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassRisk {
    pub value: f64,
    pub degenerate: Option<Degeneracy>,
}

/// Reweighted risk of one class over a view: `scores[i]` is `f_k(x_i)` and
/// `labels[i]` whether example `i` is positive. `weights` are `(1/|P|, 1/|N|)`.
///
/// When `grad` is given it receives `dR/dscore_i`.
pub fn class_risk_with_grad(
    scores: &[f64],
    labels: &[bool],
    weights: (f64, f64),
    margin: Margin,
    base: BaseLoss,
    normalized: bool,
    mut grad: Option<&mut [f64]>,
) -> ClassRisk {
    debug_assert_eq!(scores.len(), labels.len());
    let (w_pos, w_neg) = weights;
    let mut value = 0.0;
    let (mut any_pos, mut any_neg) = (false, false);
    for (i, (&f, &y)) in scores.iter().zip(labels).enumerate() {
        let (l, dl) = if y {
            any_pos = true;
            let (l, d) = pos_term(f, margin.pos, base, normalized);
            (w_pos * l, w_pos * d)
        } else {
            any_neg = true;
            let (l, d) = neg_term(f, margin.neg, base, normalized);
            (w_neg * l, w_neg * d)
        };
        value += l;
        if let Some(g) = grad.as_deref_mut() {
            g[i] = dl;
        }
    }
    let degenerate = if !any_pos {
        Some(Degeneracy::NoPositives)
    } else if !any_neg {
        Some(Degeneracy::NoNegatives)
    } else {
        None
    };
    ClassRisk { value, degenerate }
}

pub fn class_risk(
    scores: &[f64],
    labels: &[bool],
    weights: (f64, f64),
    margin: Margin,
    base: BaseLoss,
    normalized: bool,
) -> ClassRisk {
    class_risk_with_grad(scores, labels, weights, margin, base, normalized, None)
}

/// Row-major `rows x cols` score matrix; row `i` holds `f(x_i)` over all
/// global classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.cols + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, k: usize, v: f64) {
        self.data[i * self.cols + k] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, k)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskRisk {
    pub value: f64,
    /// Risk of every class that entered the mean.
    pub per_class: Vec<(ClassId, f64)>,
    /// Degenerate classes left out of the mean.
    pub dropped: Vec<ClassId>,
}

/// Task risk: mean class risk over `class_set`, with `dR/dscores` written to
/// `grad` (same shape as `scores`) when given.
///
/// For the reweighted kinds, classes whose view lacks positives or negatives
/// are dropped from the mean; if all are dropped the result is
/// [`Error::AllDegenerate`].
pub fn task_risk_with_grad(
    scores: &ScoreMatrix,
    labels: &[&[u8]],
    class_set: &[ClassId],
    weights: &ClassWeights,
    sched: &MarginSchedule,
    cfg: &LossConfig,
    mut grad: Option<&mut ScoreMatrix>,
) -> Result<TaskRisk> {
    if class_set.is_empty() {
        return Err(Error::Empty("class set"));
    }
    if scores.rows != labels.len() {
        return Err(Error::Dimension {
            expected: scores.rows,
            actual: labels.len(),
        });
    }
    if let Some(g) = grad.as_deref_mut() {
        g.data.iter_mut().for_each(|v| *v = 0.0);
    }
    if cfg.loss == LossKind::Bce {
        let value = bce_risk_with_grad(scores, labels, class_set, grad);
        return Ok(TaskRisk {
            value,
            per_class: Vec::new(),
            dropped: Vec::new(),
        });
    }

    let n = scores.rows;
    let mut per_class = Vec::with_capacity(class_set.len());
    let mut dropped = Vec::new();
    let mut class_grads: Vec<(ClassId, Vec<f64>)> = Vec::new();
    let mut col_grad = vec![0.0; n];

    for &k in class_set {
        let col = scores.column(k);
        let ys: Vec<bool> = labels.iter().map(|y| y[k] == 1).collect();
        let margin = match cfg.loss {
            LossKind::Ru => Margin::ZERO,
            _ => match sched.get(k) {
                Some(m) => m,
                // A class without a margin has no positives to anchor it.
                None if !ys.iter().any(|&y| y) => {
                    dropped.push(k);
                    continue;
                }
                None => {
                    return Err(Error::InvalidConfig(format!("no margin for class {k}")));
                }
            },
        };
        let w = if cfg.loss == LossKind::Margin {
            let inv = if n == 0 { 0.0 } else { 1.0 / n as f64 };
            (inv, inv)
        } else {
            weights.weights(k)
        };
        let cr = class_risk_with_grad(
            &col,
            &ys,
            w,
            margin,
            cfg.base,
            cfg.normalized_margin,
            grad.is_some().then_some(&mut col_grad[..]),
        );
        let degenerate = match cfg.loss {
            LossKind::Margin => n == 0,
            _ => cr.degenerate.is_some(),
        };
        if degenerate {
            dropped.push(k);
            continue;
        }
        per_class.push((k, cr.value));
        if grad.is_some() {
            class_grads.push((k, col_grad.clone()));
        }
    }

    if per_class.is_empty() {
        return Err(Error::AllDegenerate);
    }
    let m = per_class.len() as f64;
    let value = per_class.iter().map(|(_, v)| v).sum::<f64>() / m;
    if let Some(g) = grad {
        for (k, cg) in class_grads {
            for (i, d) in cg.into_iter().enumerate() {
                g.set(i, k, d / m);
            }
        }
    }
    Ok(TaskRisk {
        value,
        per_class,
        dropped,
    })
}

pub fn task_risk(
    scores: &ScoreMatrix,
    labels: &[&[u8]],
    class_set: &[ClassId],
    weights: &ClassWeights,
    sched: &MarginSchedule,
    cfg: &LossConfig,
) -> Result<TaskRisk> {
    task_risk_with_grad(scores, labels, class_set, weights, sched, cfg, None)
}

/// `(1/t) (current + sum memory)` with `t = 1 + memory.len()`.
pub fn adjusted_cl_risk(current: f64, memory: &[f64]) -> f64 {
    (current + memory.iter().sum::<f64>()) / (1 + memory.len()) as f64
}

/// Binary cross-entropy with logits, averaged over examples and classes.
pub fn bce_risk(scores: &ScoreMatrix, labels: &[&[u8]], class_set: &[ClassId]) -> f64 {
    bce_risk_with_grad(scores, labels, class_set, None)
}

fn bce_risk_with_grad(
    scores: &ScoreMatrix,
    labels: &[&[u8]],
    class_set: &[ClassId],
    mut grad: Option<&mut ScoreMatrix>,
) -> f64 {
    let denom = (scores.rows * class_set.len()) as f64;
    if denom == 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for (i, y) in labels.iter().enumerate() {
        for &k in class_set {
            let s = scores.get(i, k);
            let t = f64::from(y[k]);
            total += s.max(0.0) - s * t + (-s.abs()).exp().ln_1p();
            if let Some(g) = grad.as_deref_mut() {
                g.set(i, k, (sigmoid(s) - t) / denom);
            }
        }
    }
    total / denom
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const H: BaseLoss = BaseLoss::Hinge;

    #[test]
    fn base_loss_values() {
        assert_eq!(base_loss(1.0, H), 0.0);
        assert!((base_loss(-0.1, H) - 1.1).abs() < 1e-15);
        assert!((base_loss(0.0, BaseLoss::Logistic) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(base_loss_grad(1.0, H), 0.0);
        assert_eq!(base_loss_grad(0.999, H), -1.0);
        // Stable for large |z|.
        assert!(base_loss(800.0, BaseLoss::Logistic) >= 0.0);
        assert!((base_loss(-800.0, BaseLoss::Logistic) - 800.0).abs() < 1e-9);
        assert!(base_loss_grad(-800.0, BaseLoss::Logistic).is_finite());
    }

    #[test]
    fn pair_loss_examples() {
        let m = Margin::symmetric(0.5);
        assert!((rldam_pair(0.7, -0.4, m, H, false) - 1.9).abs() < 1e-12);
        assert_eq!(rldam_pair(2.0, -2.0, m, H, false), 0.0);
        assert_eq!(
            rldam_pair(0.3, 0.1, Margin::ZERO, H, false),
            base_loss(0.3, H) + base_loss(-0.1, H)
        );
    }

    #[test]
    fn class_risk_hand_example() {
        let r = class_risk(&[0.5, -0.5, 1.0], &[true, false, false], (1.0, 0.5), Margin::ZERO, H, false);
        assert!((r.value - 1.75).abs() < 1e-12);
        assert!(r.degenerate.is_none());
    }

    #[test]
    fn class_risk_large_scores_match_direct_sum() {
        let scores = [1e6, 1e6, 1e6, 1e6];
        let labels = [true, false, true, false];
        let m = Margin::symmetric(0.5);
        let r = class_risk(&scores, &labels, (0.5, 0.5), m, H, false);
        let mut oracle = 0.0;
        for (s, y) in scores.iter().zip(labels) {
            oracle += if y {
                0.5 * (1.0 - (s - 0.5)).max(0.0)
            } else {
                0.5 * (1.0 - (-s - 0.5)).max(0.0)
            };
        }
        assert_eq!(r.value, oracle);
        assert!(r.value > 1e5);
    }

    #[test]
    fn class_risk_empty_positive_side_is_flagged() {
        let r = class_risk(&[0.2, -0.3], &[false, false], (0.0, 0.5), Margin::ZERO, H, false);
        assert_eq!(r.degenerate, Some(Degeneracy::NoPositives));
        assert!((r.value - 0.5 * (1.2 + 0.7)).abs() < 1e-12);
    }

    fn one_col(scores: &[f64]) -> ScoreMatrix {
        ScoreMatrix::from_rows(&scores.iter().map(|&s| vec![s]).collect::<Vec<_>>())
    }

    #[test]
    fn task_risk_means_and_drops() {
        let ru = LossConfig {
            loss: LossKind::Ru,
            ..Default::default()
        };
        // One class: equals class risk.
        let s = one_col(&[0.5, -0.5, 1.0]);
        let y: Vec<Vec<u8>> = vec![vec![1], vec![0], vec![0]];
        let yr: Vec<&[u8]> = y.iter().map(Vec::as_slice).collect();
        let w = ClassWeights::from_view(&yr, &[0]);
        let tr = task_risk(&s, &yr, &[0], &w, &MarginSchedule::default(), &ru).unwrap();
        assert!((tr.value - 1.75).abs() < 1e-12);

        // Two classes, the second degenerate.
        let s = ScoreMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        let y: Vec<Vec<u8>> = vec![vec![1, 0], vec![0, 0]];
        let yr: Vec<&[u8]> = y.iter().map(Vec::as_slice).collect();
        let w = ClassWeights::from_view(&yr, &[0, 1]);
        let tr = task_risk(&s, &yr, &[0, 1], &w, &MarginSchedule::default(), &ru).unwrap();
        assert_eq!(tr.dropped, vec![1]);
        assert!((tr.value - 2.0).abs() < 1e-12);

        // All degenerate.
        let y: Vec<Vec<u8>> = vec![vec![0, 0], vec![0, 0]];
        let yr: Vec<&[u8]> = y.iter().map(Vec::as_slice).collect();
        let w = ClassWeights::from_view(&yr, &[0, 1]);
        assert!(matches!(
            task_risk(&s, &yr, &[0, 1], &w, &MarginSchedule::default(), &ru),
            Err(Error::AllDegenerate)
        ));
    }

    #[test]
    fn task_risk_is_mean_of_class_risks() {
        let s = ScoreMatrix::from_rows(&[vec![0.5, -1.0], vec![-0.5, 1.0]]);
        let y: Vec<Vec<u8>> = vec![vec![1, 1], vec![0, 0]];
        let yr: Vec<&[u8]> = y.iter().map(Vec::as_slice).collect();
        let w = ClassWeights::from_view(&yr, &[0, 1]);
        let ru = LossConfig {
            loss: LossKind::Ru,
            ..Default::default()
        };
        let tr = task_risk(&s, &yr, &[0, 1], &w, &MarginSchedule::default(), &ru).unwrap();
        // class 0: l(0.5)+l(0.5)=1.0; class 1: l(-1)+l(-1)=4.0
        assert_eq!(tr.per_class, vec![(0, 1.0), (1, 4.0)]);
        assert!((tr.value - 2.5).abs() < 1e-15);
    }

    #[test]
    fn adjusted_risk_examples() {
        assert_eq!(adjusted_cl_risk(2.0, &[]), 2.0);
        assert_eq!(adjusted_cl_risk(2.0, &[1.0, 3.0]), 2.0);
        assert_eq!(adjusted_cl_risk(3.0, &[0.0, 0.0]), 1.0);
    }

    #[test]
    fn bce_examples() {
        let y: Vec<Vec<u8>> = vec![vec![1]];
        let yr: Vec<&[u8]> = y.iter().map(Vec::as_slice).collect();
        assert!((bce_risk(&one_col(&[0.0]), &yr, &[0]) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_risk(&one_col(&[30.0]), &yr, &[0]) < 1e-12);

        let s = ScoreMatrix::from_rows(&[vec![1.3, -0.2], vec![-2.0, 0.7]]);
        let y: Vec<Vec<u8>> = vec![vec![1, 0], vec![0, 1]];
        let flipped_s = ScoreMatrix {
            data: s.data.iter().map(|v| -v).collect(),
            ..s.clone()
        };
        let fy: Vec<Vec<u8>> = y.iter().map(|r| r.iter().map(|v| 1 - v).collect()).collect();
        let a = bce_risk(&s, &y.iter().map(Vec::as_slice).collect::<Vec<_>>(), &[0, 1]);
        let b = bce_risk(&flipped_s, &fy.iter().map(Vec::as_slice).collect::<Vec<_>>(), &[0, 1]);
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn margin_examples() {
        let s = build_margins([(0, 16)], 1.0).unwrap();
        assert!((s.get(0).unwrap().pos - 0.5).abs() < 1e-15);
        let s = build_margins([(0, 16), (1, 3)], 0.0).unwrap();
        assert!(s.iter().all(|(_, m)| m == Margin::ZERO));
        assert_eq!(build_margins([(0, 1)], 2.0).unwrap().get(0), Some(Margin::symmetric(2.0)));
        assert!(matches!(build_margins([(4, 0)], 1.0), Err(Error::ZeroCount(4))));
    }

    fn fd_check(base: BaseLoss, normalized: bool, seed: u64) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut checked = 0;
        while checked < 100 {
            let n = rng.random_range(2..10);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let labels: Vec<bool> = (0..n).map(|i| i == 0 || rng.random_bool(0.4)).collect();
            let delta = rng.random_range(0.1..1.0);
            let m = Margin::symmetric(delta);
            let near_kink = base == BaseLoss::Hinge
                && scores.iter().zip(&labels).any(|(&f, &y)| {
                    let z = match (normalized, y) {
                        (true, true) => f / delta,
                        (true, false) => -f / delta,
                        (false, true) => f - delta,
                        (false, false) => -f - delta,
                    };
                    (1.0 - z).abs() < 1e-3 * if normalized { 1.0 / delta } else { 1.0 }
                });
            if near_kink {
                continue;
            }
            let w = (0.3, 0.2);
            let mut g = vec![0.0; n];
            class_risk_with_grad(&scores, &labels, w, m, base, normalized, Some(&mut g));
            let h = 1e-5;
            for i in 0..n {
                let mut up = scores.clone();
                let mut dn = scores.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (class_risk(&up, &labels, w, m, base, normalized).value
                    - class_risk(&dn, &labels, w, m, base, normalized).value)
                    / (2.0 * h);
                // Absolute slack covers the O(h^2 / delta^3) truncation error
                // of the normalized variant where gradients are tiny.
                let tol = 1e-5 * fd.abs().max(g[i].abs()) + 1e-9;
                assert!((fd - g[i]).abs() < tol, "i={i} fd={fd} an={}", g[i]);
            }
            checked += 1;
        }
    }

    #[test]
    fn class_risk_gradients_match_finite_differences() {
        fd_check(BaseLoss::Hinge, false, 1);
        fd_check(BaseLoss::Logistic, false, 2);
        fd_check(BaseLoss::Hinge, true, 3);
        fd_check(BaseLoss::Logistic, true, 4);
    }

    proptest! {
        #[test]
        fn zero_margins_equal_ru(fp in -5.0f64..5.0, fn_ in -5.0f64..5.0, logistic in any::<bool>()) {
            let base = if logistic { BaseLoss::Logistic } else { BaseLoss::Hinge };
            let a = rldam_pair(fp, fn_, Margin::ZERO, base, false);
            let b = base_loss(fp, base) + base_loss(-fn_, base);
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }

        #[test]
        fn monotone_in_scores(
            scores in prop::collection::vec(-4.0f64..4.0, 2..8),
            bump in 0.0f64..2.0,
            idx in 0usize..8,
            delta in 0.0f64..1.0,
            logistic in any::<bool>(),
        ) {
            let base = if logistic { BaseLoss::Logistic } else { BaseLoss::Hinge };
            let n = scores.len();
            let i = idx % n;
            let labels: Vec<bool> = (0..n).map(|j| j % 2 == 0).collect();
            let m = Margin::symmetric(delta);
            let before = class_risk(&scores, &labels, (0.5, 0.5), m, base, false).value;
            let mut up = scores.clone();
            up[i] += bump;
            let after = class_risk(&up, &labels, (0.5, 0.5), m, base, false).value;
            if labels[i] {
                prop_assert!(after <= before + 1e-12);
            } else {
                prop_assert!(after >= before - 1e-12);
            }
        }

        #[test]
        fn margins_strictly_decrease_with_count(a in 1usize..10_000, b in 1usize..10_000, lambda in 0.01f64..5.0) {
            prop_assume!(a < b);
            let s = build_margins([(0, a), (1, b)], lambda).unwrap();
            prop_assert!(s.get(0).unwrap().pos > s.get(1).unwrap().pos);
        }
    }
}
