//! Macro-AUC, continual-learning summaries and the batch bound diagnostic.

use serde::{Deserialize, Serialize};

use crate::dataset::{class_stats, MultiLabelDataset};
use crate::loss::{base_loss, BaseLoss, MarginSchedule, ScoreMatrix};
use crate::model::Scorer;
use crate::{ClassId, Error, Result};

/// How a tied positive/negative pair counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// `[[f(x+) > f(x-)]]`: ties count 0.
    #[default]
    Strict,
    /// Ties count 1/2.
    Half,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ClassAuc {
    Value(f64),
    /// The evaluation set lacks positives or negatives for the class.
    Skipped,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AucReport {
    pub per_class: Vec<(ClassId, ClassAuc)>,
    /// Mean over non-skipped classes; `None` when every class was skipped.
    pub macro_auc: Option<f64>,
    pub skipped: Vec<ClassId>,
}

/// AUC of one class via a sort of the scores: `count / (|P| |N|)` where
/// `count` is the number of (positive, negative) pairs ranked correctly.
pub fn class_auc(scores: &[f64], labels: &[bool], ties: TieRule) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the pair count, so half-credited ties stay integral.
    let mut doubled: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut q) = (0u128, 0u128);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                p += 1;
            } else {
                q += 1;
            }
            j += 1;
        }
        doubled += 2 * p * neg_below;
        if ties == TieRule::Half {
            doubled += p * q;
        }
        neg_below += q;
        i = j;
    }
    let pairs = (n_pos * n_neg) as f64;
    Some(if doubled.is_multiple_of(2) {
        (doubled / 2) as f64 / pairs
    } else {
        doubled as f64 / 2.0 / pairs
    })
}

/// Per-class AUC over `class_set` and their mean.
pub fn macro_auc(
    scores: &ScoreMatrix,
    labels: &[&[u8]],
    class_set: &[ClassId],
    ties: TieRule,
) -> AucReport {
    let mut per_class = Vec::with_capacity(class_set.len());
    let mut skipped = Vec::new();
    let mut sum = 0.0;
    let mut used = 0usize;
    for &k in class_set {
        let col = scores.column(k);
        let ys: Vec<bool> = labels.iter().map(|y| y[k] == 1).collect();
        match class_auc(&col, &ys, ties) {
            Some(a) => {
                sum += a;
                used += 1;
                per_class.push((k, ClassAuc::Value(a)));
            }
            None => {
                skipped.push(k);
                per_class.push((k, ClassAuc::Skipped));
            }
        }
    }
    AucReport {
        per_class,
        macro_auc: (used > 0).then(|| sum / used as f64),
        skipped,
    }
}

/// Macro-AUC of `scorer` on a dataset over its known classes.
pub fn evaluate(scorer: &Scorer, data: &MultiLabelDataset, ties: TieRule) -> Result<AucReport> {
    let features: Vec<&[f64]> = data.examples().iter().map(|e| e.features.as_slice()).collect();
    let labels: Vec<&[u8]> = data.examples().iter().map(|e| e.labels.as_slice()).collect();
    let scores = scorer.forward(&features)?;
    Ok(macro_auc(&scores, &labels, data.class_ids(), ties))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgettingConvention {
    /// `max_{j <= l <= T} a[l][j] - a[T][j]`; never negative.
    #[default]
    RunningMax,
    /// `max_{j <= l < T} a[l][j] - a[T][j]`; negative when a task peaked at
    /// the final checkpoint.
    PreviousBest,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forgetting {
    /// One entry per task `j < T`.
    pub per_task: Vec<f64>,
    pub mean: f64,
}

/// Macro-AUC matrix of a continual run. `auc[l][j]` (0-based) is task `j`'s
/// test Macro-AUC after training on task `l`, for `j <= l`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RunRecord {
    pub auc: Vec<Vec<f64>>,
}

impl RunRecord {
    pub fn push_checkpoint(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.auc.len() + 1);
        self.auc.push(row);
    }

    pub fn num_tasks(&self) -> usize {
        self.auc.len()
    }

    /// Overall Macro-AUC after every checkpoint.
    pub fn overall(&self) -> Vec<f64> {
        (0..self.auc.len()).map(|l| overall_macro_auc(self, l)).collect()
    }

    pub fn final_overall(&self) -> f64 {
        self.auc.len().checked_sub(1).map_or(f64::NAN, |l| overall_macro_auc(self, l))
    }
}

/// Mean of `a[l][0..=l]` (0-based checkpoint `l`).
pub fn overall_macro_auc(run: &RunRecord, l: usize) -> f64 {
    let row = &run.auc[l];
    row.iter().sum::<f64>() / row.len() as f64
}

/// Forgetting after the first `t` checkpoints (`t >= 2`).
pub fn forgetting(run: &RunRecord, t: usize, convention: ForgettingConvention) -> Result<Forgetting> {
    if t < 2 || t > run.auc.len() {
        return Err(Error::InvalidConfig(format!(
            "forgetting needs 2 <= T <= {} (got {t})",
            run.auc.len()
        )));
    }
    let last = &run.auc[t - 1];
    let per_task: Vec<f64> = (0..t - 1)
        .map(|j| {
            let end = match convention {
                ForgettingConvention::RunningMax => t,
                ForgettingConvention::PreviousBest => t - 1,
            };
            let reference = (j..end).map(|l| run.auc[l][j]).fold(f64::NEG_INFINITY, f64::max);
            reference - last[j]
        })
        .collect();
    let mean = per_task.iter().sum::<f64>() / per_task.len() as f64;
    Ok(Forgetting { per_task, mean })
}

/// Inputs of the batch Macro-AUC generalization bound.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundInputs {
    /// Weight-row norm bound.
    pub norm_bound: f64,
    /// Feature-norm bound.
    pub feature_radius: f64,
    pub n: usize,
    pub tau: Vec<f64>,
    /// `1 / d_k+` per class.
    pub rho_pos: Vec<f64>,
    /// `1 / d_k-` per class.
    pub rho_neg: Vec<f64>,
    /// Bound on the base loss.
    pub loss_bound: f64,
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundTerms {
    pub complexity: f64,
    pub confidence: f64,
    pub total: f64,
}

/// `R <= R_hat + (4 L r / sqrt n) mean_k sqrt(1/tau_k) (rho_k+ + rho_k-)
///        + 6 B sqrt(ln(2/delta) / 2n) sqrt(mean_k 1/tau_k)`.
pub fn batch_bound(b: &BoundInputs, empirical_risk: f64) -> Result<BoundTerms> {
    let k = b.tau.len();
    if k == 0 || b.rho_pos.len() != k || b.rho_neg.len() != k {
        return Err(Error::InvalidConfig(
            "tau, rho_pos and rho_neg must have one nonzero-length entry per class".into(),
        ));
    }
    if b.n == 0 || !(b.delta > 0.0 && b.delta < 1.0) {
        return Err(Error::InvalidConfig("bound needs n >= 1 and delta in (0, 1)".into()));
    }
    if let Some(t) = b.tau.iter().find(|&&t| !(t > 0.0 && t <= 0.5)) {
        return Err(Error::InvalidConfig(format!("tau {t} outside (0, 0.5]")));
    }
    let n = b.n as f64;
    let kf = k as f64;
    let margin_sum: f64 = (0..k)
        .map(|c| (1.0 / b.tau[c]).sqrt() * (b.rho_pos[c] + b.rho_neg[c]))
        .sum();
    let complexity = 4.0 * b.norm_bound * b.feature_radius / n.sqrt() * (margin_sum / kf);
    let inv_tau = b.tau.iter().map(|t| 1.0 / t).sum::<f64>() / kf;
    let confidence = 6.0 * b.loss_bound * ((2.0 / b.delta).ln() / (2.0 * n)).sqrt() * inv_tau.sqrt();
    Ok(BoundTerms {
        complexity,
        confidence,
        total: empirical_risk + complexity + confidence,
    })
}

/// Collects [`BoundInputs`] for `scorer` on `data`: `tau` from the class
/// counts, `rho` from the margins, the largest feature norm, the norm cap (or
/// the largest row norm) and the largest shifted base-loss value observed.
pub fn bound_inputs(
    scorer: &Scorer,
    data: &MultiLabelDataset,
    sched: &MarginSchedule,
    base: BaseLoss,
    delta: f64,
) -> Result<BoundInputs> {
    let stats = class_stats(data);
    let mut rho_pos = Vec::with_capacity(stats.len());
    let mut rho_neg = Vec::with_capacity(stats.len());
    for s in &stats {
        let m = sched.get(s.class).ok_or(Error::ZeroCount(s.class))?;
        rho_pos.push(1.0 / m.pos);
        rho_neg.push(1.0 / m.neg);
    }
    let feature_radius = data
        .examples()
        .iter()
        .map(|e| e.features.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let mut loss_bound: f64 = 0.0;
    for ex in data.examples() {
        let scores = scorer.score(&ex.features)?;
        for s in &stats {
            let m = sched.get(s.class).unwrap_or_default();
            let f = scores[s.class];
            let v = if ex.is_positive(s.class) {
                base_loss(f - m.pos, base)
            } else {
                base_loss(-f - m.neg, base)
            };
            loss_bound = loss_bound.max(v);
        }
    }
    Ok(BoundInputs {
        norm_bound: scorer.norm_cap().unwrap_or_else(|| scorer.max_row_norm()),
        feature_radius,
        n: data.len(),
        tau: stats.iter().map(|s| s.tau).collect(),
        rho_pos,
        rho_neg,
        loss_bound,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(scores: &[f64], labels: &[bool]) -> Option<f64> {
        let mut hit = 0usize;
        let mut pairs = 0usize;
        for (i, &yi) in labels.iter().enumerate() {
            for (j, &yj) in labels.iter().enumerate() {
                if yi && !yj {
                    pairs += 1;
                    hit += usize::from(scores[i] > scores[j]);
                }
            }
        }
        (pairs > 0).then(|| hit as f64 / pairs as f64)
    }

    fn labels(rows: &[&[u8]]) -> Vec<Vec<u8>> {
        rows.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn auc_examples() {
        let s = ScoreMatrix::from_rows(&[vec![2.0], vec![1.0]]);
        let y = labels(&[&[1], &[0]]);
        let yr: Vec<&[u8]> = y.iter().map(Vec::as_slice).collect();
        let r = macro_auc(&s, &yr, &[0], TieRule::Strict);
        assert_eq!(r.macro_auc, Some(1.0));

        // Class 1: pos {0.9}, neg {0.2, 0.7}; class 2: pos {0.1}, neg {0.5, 0.3}.
        let s = ScoreMatrix::from_rows(&[
            vec![0.0, 0.9, 0.5],
            vec![0.0, 0.2, 0.1],
            vec![0.0, 0.7, 0.3],
        ]);
        let y = labels(&[&[0, 1, 0], &[0, 0, 1], &[0, 0, 0]]);
        let yr: Vec<&[u8]> = y.iter().map(Vec::as_slice).collect();
        let r = macro_auc(&s, &yr, &[1, 2], TieRule::Strict);
        assert_eq!(r.per_class, vec![(1, ClassAuc::Value(1.0)), (2, ClassAuc::Value(0.0))]);
        assert_eq!(r.macro_auc, Some(0.5));

        assert_eq!(class_auc(&[0.3, 0.3], &[true, false], TieRule::Strict), Some(0.0));
        assert_eq!(class_auc(&[0.3, 0.3], &[true, false], TieRule::Half), Some(0.5));
    }

    #[test]
    fn degenerate_classes_are_skipped() {
        let s = ScoreMatrix::from_rows(&[vec![0.1, 0.4], vec![0.2, 0.3]]);
        let y = labels(&[&[1, 1], &[0, 1]]);
        let yr: Vec<&[u8]> = y.iter().map(Vec::as_slice).collect();
        let r = macro_auc(&s, &yr, &[0, 1], TieRule::Strict);
        assert_eq!(r.skipped, vec![1]);
        assert_eq!(r.macro_auc, Some(0.0));
    }

    #[test]
    fn overall_examples() {
        let run = RunRecord {
            auc: vec![vec![0.9], vec![0.8, 0.6]],
        };
        assert_eq!(overall_macro_auc(&run, 0), 0.9);
        assert!((overall_macro_auc(&run, 1) - 0.7).abs() < 1e-15);
        let perfect = RunRecord {
            auc: vec![vec![1.0], vec![1.0, 1.0]],
        };
        assert_eq!(perfect.final_overall(), 1.0);
    }

    #[test]
    fn forgetting_examples() {
        let run = RunRecord {
            auc: vec![vec![0.9], vec![0.8, 0.7]],
        };
        let f = forgetting(&run, 2, ForgettingConvention::RunningMax).unwrap();
        assert!((f.per_task[0] - 0.1).abs() < 1e-15);

        let flat = RunRecord {
            auc: vec![vec![0.8], vec![0.8, 0.7], vec![0.8, 0.7, 0.9]],
        };
        let f = forgetting(&flat, 3, ForgettingConvention::RunningMax).unwrap();
        assert_eq!(f.per_task, vec![0.0, 0.0]);

        let rising = RunRecord {
            auc: vec![vec![0.7], vec![0.75, 0.6], vec![0.8, 0.65, 0.9]],
        };
        let f = forgetting(&rising, 3, ForgettingConvention::RunningMax).unwrap();
        assert!(f.per_task.iter().all(|&v| v == 0.0));
        let g = forgetting(&rising, 3, ForgettingConvention::PreviousBest).unwrap();
        assert!(g.per_task.iter().all(|&v| v < 0.0));
        assert!((g.per_task[0] + 0.05).abs() < 1e-12);

        assert!(forgetting(&run, 1, ForgettingConvention::RunningMax).is_err());
    }

    fn inputs(n: usize, tau: f64, rho: f64) -> BoundInputs {
        BoundInputs {
            norm_bound: 1.0,
            feature_radius: 1.0,
            n,
            tau: vec![tau],
            rho_pos: vec![rho],
            rho_neg: vec![rho],
            loss_bound: 1.0,
            delta: 0.05,
        }
    }

    #[test]
    fn bound_examples() {
        let t = batch_bound(&inputs(100, 0.25, 2.0), 0.0).unwrap();
        assert!((t.complexity - 3.2).abs() < 1e-12);

        let tiny = batch_bound(&inputs(100, 0.25, 1e-9), 0.0).unwrap();
        assert!(tiny.complexity < 1e-8);

        let a = batch_bound(&inputs(100, 0.25, 2.0), 0.3).unwrap();
        let b = batch_bound(&inputs(200, 0.25, 2.0), 0.3).unwrap();
        assert!((a.complexity / b.complexity - 2f64.sqrt()).abs() < 1e-12);
        assert!((a.confidence / b.confidence - 2f64.sqrt()).abs() < 1e-12);
        assert!((a.total - (0.3 + a.complexity + a.confidence)).abs() < 1e-15);

        assert!(batch_bound(&inputs(100, 0.0, 2.0), 0.0).is_err());
    }

    proptest! {
        #[test]
        fn fast_auc_equals_pair_enumeration(
            data in prop::collection::vec((-3i32..3, any::<bool>()), 1..20)
        ) {
            // Coarse integer scores force plenty of ties.
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 * 0.5).collect();
            let ys: Vec<bool> = data.iter().map(|(_, y)| *y).collect();
            let fast = class_auc(&scores, &ys, TieRule::Strict);
            let slow = brute(&scores, &ys);
            prop_assert_eq!(fast, slow);
        }

        #[test]
        fn monotone_transform_invariance(
            data in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..20)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s).collect();
            let ys: Vec<bool> = data.iter().map(|(_, y)| *y).collect();
            let warped: Vec<f64> = scores.iter().map(|s| (0.7 * s).exp() * 3.0 - 1.0).collect();
            prop_assert_eq!(class_auc(&scores, &ys, TieRule::Strict), class_auc(&warped, &ys, TieRule::Strict));
        }

        #[test]
        fn permutation_invariance_and_reversal(
            data in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..20),
            rot in 0usize..20,
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s).collect();
            let ys: Vec<bool> = data.iter().map(|(_, y)| *y).collect();
            let r = rot % scores.len();
            let mut s2 = scores.clone();
            let mut y2 = ys.clone();
            s2.rotate_left(r);
            y2.rotate_left(r);
            let a = class_auc(&scores, &ys, TieRule::Strict);
            prop_assert_eq!(a, class_auc(&s2, &y2, TieRule::Strict));

            let distinct = {
                let mut v = scores.clone();
                v.sort_by(f64::total_cmp);
                v.windows(2).all(|w| w[0] != w[1])
            };
            if let (Some(a), true) = (a, distinct) {
                let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
                let b = class_auc(&neg, &ys, TieRule::Strict).unwrap();
                prop_assert!((a + b - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn complexity_nonincreasing_in_tau_and_margin(
            tau in 0.01f64..0.4, dt in 0.0f64..0.1,
            delta in 0.05f64..2.0, dd in 0.0f64..1.0,
        ) {
            let base = batch_bound(&inputs(50, tau, 1.0 / delta), 0.0).unwrap().complexity;
            let more_tau = batch_bound(&inputs(50, tau + dt, 1.0 / delta), 0.0).unwrap().complexity;
            let more_margin = batch_bound(&inputs(50, tau, 1.0 / (delta + dd)), 0.0).unwrap().complexity;
            prop_assert!(more_tau <= base + 1e-12);
            prop_assert!(more_margin <= base + 1e-12);
        }
    }
}
