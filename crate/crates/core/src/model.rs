//! Linear single-head scorer `f(x) = W phi(x)` with one weight row per global
//! class, trained by SGD on the current task plus a replayed memory batch.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Example, MultiLabelDataset};
use crate::loss::{
    build_margins, task_risk_with_grad, ClassWeights, LossConfig, MarginSchedule, ScoreMatrix,
    TaskRisk, WeightSource,
};
use crate::memory::MemoryBuffer;
use crate::rng;
use crate::{ClassId, Error, Result, TaskId};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMapConfig {
    #[default]
    Identity,
    /// `sqrt(2/D) cos(W x + b)` approximating the RBF kernel `exp(-gamma |x-y|^2)`.
    RandomFourier { dim: usize, gamma: f64, seed: u64 },
}

/// A materialized feature map.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureMap {
    Identity,
    RandomFourier {
        input_dim: usize,
        omega: Vec<f64>,
        phase: Vec<f64>,
        scale: f64,
    },
}

impl FeatureMap {
    pub fn build(cfg: &FeatureMapConfig, input_dim: usize) -> Result<Self> {
        match *cfg {
            FeatureMapConfig::Identity => Ok(FeatureMap::Identity),
            FeatureMapConfig::RandomFourier { dim, gamma, seed } => {
                if dim == 0 || !(gamma > 0.0 && gamma.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "random Fourier features need dim >= 1 and gamma > 0 (got {dim}, {gamma})"
                    )));
                }
                let mut rng = rng::stream(seed, &[rng::FEATURES]);
                let sd = (2.0 * gamma).sqrt();
                let omega = (0..dim * input_dim)
                    .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let phase = (0..dim)
                    .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                    .collect();
                Ok(FeatureMap::RandomFourier {
                    input_dim,
                    omega,
                    phase,
                    scale: (2.0 / dim as f64).sqrt(),
                })
            }
        }
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        match self {
            FeatureMap::Identity => input_dim,
            FeatureMap::RandomFourier { phase, .. } => phase.len(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            FeatureMap::Identity => x.to_vec(),
            FeatureMap::RandomFourier {
                input_dim,
                omega,
                phase,
                scale,
            } => phase
                .iter()
                .enumerate()
                .map(|(j, b)| {
                    let row = &omega[j * input_dim..(j + 1) * input_dim];
                    let dot: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
                    scale * (dot + b).cos()
                })
                .collect(),
        }
    }
}

/// Borrowed minibatch.
#[derive(Clone, Debug, Default)]
pub struct Batch<'a> {
    pub features: Vec<&'a [f64]>,
    pub labels: Vec<&'a [u8]>,
}

impl<'a> Batch<'a> {
    pub fn from_examples<I: IntoIterator<Item = &'a Example>>(examples: I) -> Self {
        let mut b = Batch::default();
        for ex in examples {
            b.features.push(&ex.features);
            b.labels.push(&ex.labels);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scorer {
    num_classes: usize,
    dim: usize,
    /// Row-major `num_classes x dim`.
    weights: Vec<f64>,
    norm_cap: Option<f64>,
}

impl Scorer {
    pub fn zeros(num_classes: usize, dim: usize, norm_cap: Option<f64>) -> Self {
        Self {
            num_classes,
            dim,
            weights: vec![0.0; num_classes * dim],
            norm_cap,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm_cap(&self) -> Option<f64> {
        self.norm_cap
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn row(&self, k: ClassId) -> &[f64] {
        &self.weights[k * self.dim..(k + 1) * self.dim]
    }

    pub fn row_mut(&mut self, k: ClassId) -> &mut [f64] {
        &mut self.weights[k * self.dim..(k + 1) * self.dim]
    }

    pub fn row_norm(&self, k: ClassId) -> f64 {
        self.row(k).iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn max_row_norm(&self) -> f64 {
        (0..self.num_classes).map(|k| self.row_norm(k)).fold(0.0, f64::max)
    }

    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok((0..self.num_classes)
            .map(|k| self.row(k).iter().zip(x).map(|(w, v)| w * v).sum())
            .collect())
    }

    /// Scores of every example on every class.
    pub fn forward(&self, features: &[&[f64]]) -> Result<ScoreMatrix> {
        let mut out = ScoreMatrix::zeros(features.len(), self.num_classes);
        for (i, x) in features.iter().enumerate() {
            for (k, s) in self.score(x)?.into_iter().enumerate() {
                out.set(i, k, s);
            }
        }
        Ok(out)
    }

    /// Rescales every row with norm above the cap back onto the cap.
    pub fn project(&mut self) {
        if let Some(cap) = self.norm_cap {
            for k in 0..self.num_classes {
                let norm = self.row_norm(k);
                if norm > cap {
                    let s = cap / norm;
                    self.row_mut(k).iter_mut().for_each(|w| *w *= s);
                }
            }
        }
    }
}

/// Task risk on a batch and its gradient with respect to the weight matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskGrad {
    pub risk: TaskRisk,
    /// Same layout as [`Scorer::weights`].
    pub grad: Vec<f64>,
}

pub fn risk_and_grad(
    scorer: &Scorer,
    batch: &Batch<'_>,
    class_set: &[ClassId],
    weights: &ClassWeights,
    sched: &MarginSchedule,
    cfg: &LossConfig,
) -> Result<RiskGrad> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let scores = scorer.forward(&batch.features)?;
    let mut dscores = ScoreMatrix::zeros(scores.rows, scores.cols);
    let risk = task_risk_with_grad(
        &scores,
        &batch.labels,
        class_set,
        weights,
        sched,
        cfg,
        Some(&mut dscores),
    )?;
    let dim = scorer.dim();
    let mut grad = vec![0.0; scorer.weights.len()];
    for (i, x) in batch.features.iter().enumerate() {
        for &k in class_set {
            let d = dscores.get(i, k);
            if d != 0.0 {
                for (g, v) in grad[k * dim..(k + 1) * dim].iter_mut().zip(*x) {
                    *g += d * v;
                }
            }
        }
    }
    Ok(RiskGrad { risk, grad })
}

fn default_weight_decay() -> f64 {
    1e-5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub eta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("eta {} must be > 0", self.eta)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.weight_decay < 0.0 || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(
                "weight_decay must be >= 0 and momentum in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

fn check_finite(grad: &[f64], dim: usize) -> Result<()> {
    match grad.iter().position(|g| !g.is_finite()) {
        Some(p) => Err(Error::NonFiniteGradient { class: p / dim }),
        None => Ok(()),
    }
}

/// `W <- W - eta (g_cur + g_mem)`, then weight decay, then the row-norm projection.
pub fn sgd_step(
    scorer: &mut Scorer,
    grad_current: &[f64],
    grad_memory: Option<&[f64]>,
    eta: f64,
    weight_decay: f64,
) -> Result<()> {
    Sgd::new(eta, weight_decay, 0.0).step(scorer, Some(grad_current), grad_memory)
}

/// SGD with optional heavy-ball momentum.
#[derive(Clone, Debug)]
pub struct Sgd {
    eta: f64,
    weight_decay: f64,
    momentum: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(eta: f64, weight_decay: f64, momentum: f64) -> Self {
        Self {
            eta,
            weight_decay,
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn step(
        &mut self,
        scorer: &mut Scorer,
        grad_current: Option<&[f64]>,
        grad_memory: Option<&[f64]>,
    ) -> Result<()> {
        let n = scorer.weights.len();
        for g in grad_current.iter().chain(grad_memory.iter()) {
            if g.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    actual: g.len(),
                });
            }
            check_finite(g, scorer.dim)?;
        }
        if self.momentum > 0.0 && self.velocity.len() != n {
            self.velocity = vec![0.0; n];
        }
        let decay = 1.0 - self.eta * self.weight_decay;
        for j in 0..n {
            let g = grad_current.map_or(0.0, |g| g[j]) + grad_memory.map_or(0.0, |g| g[j]);
            let update = if self.momentum > 0.0 {
                self.velocity[j] = self.momentum * self.velocity[j] + g;
                self.velocity[j]
            } else {
                g
            };
            let w = scorer.weights[j] - self.eta * update;
            scorer.weights[j] = if self.weight_decay > 0.0 { w * decay } else { w };
        }
        scorer.project();
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean current-task batch risk.
    pub risk: f64,
    /// Mean replay risk, when memory was used.
    pub memory_risk: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrainLog {
    pub task: TaskId,
    pub epochs: Vec<EpochLog>,
    /// Classes without both label sides in the training data.
    pub excluded_classes: Vec<ClassId>,
    /// Batches whose classes were all degenerate.
    pub degenerate_batches: usize,
}

/// Loss context of one replayed task.
struct ReplayTask {
    class_set: Vec<ClassId>,
    margins: MarginSchedule,
    stored_weights: Option<ClassWeights>,
}

fn margins_for(
    counts: impl IntoIterator<Item = (ClassId, usize)>,
    loss: &LossConfig,
) -> Result<MarginSchedule> {
    if !loss.loss.uses_margins() {
        return Ok(MarginSchedule::default());
    }
    build_margins(counts.into_iter().filter(|&(_, c)| c > 0), loss.lambda)
}

fn replay_contexts(memory: &MemoryBuffer, loss: &LossConfig) -> Result<BTreeMap<TaskId, ReplayTask>> {
    let mut out = BTreeMap::new();
    for (&t, mem) in memory.tasks() {
        let view = mem.view_counts();
        let counts = mem.stored_counts.as_ref().unwrap_or(&view);
        let margins = margins_for(counts.iter().map(|(&k, c)| (k, c.pos)), loss)?;
        let stored_weights = match (loss.memory_weights, &mem.stored_counts) {
            (WeightSource::Stored, Some(c)) => Some(ClassWeights::from_counts(c.clone())),
            _ => None,
        };
        out.insert(
            t,
            ReplayTask {
                class_set: mem.class_set.clone(),
                margins,
                stored_weights,
            },
        );
    }
    Ok(out)
}

/// Trains `scorer` on one task for `sgd.epochs` epochs.
///
/// Every minibatch of the shuffled task data is paired with a memory batch of
/// the same size (when `memory` holds anything). The current-batch risk uses
/// the batch's own reweighting counts and margins from the task's full counts.
/// Replayed examples are grouped by source task; each group is scored on that
/// task's classes with margins from its stored counts (or the memory view
/// when none were stored) and reweighted per `loss.memory_weights`, and the
/// group risks are averaged.
pub fn train_task(
    scorer: &mut Scorer,
    task_id: TaskId,
    data: &MultiLabelDataset,
    memory: Option<&MemoryBuffer>,
    loss: &LossConfig,
    sgd: &SgdConfig,
) -> Result<TrainLog> {
    if data.is_empty() {
        return Err(Error::Empty("task dataset"));
    }
    sgd.validate()?;
    loss.validate()?;
    if data.dim() != scorer.dim() {
        return Err(Error::Dimension {
            expected: scorer.dim(),
            actual: data.dim(),
        });
    }

    let mut log = TrainLog {
        task: task_id,
        ..Default::default()
    };
    let mut class_set = Vec::new();
    for &k in data.class_ids() {
        if data.count(k).is_degenerate() {
            log.excluded_classes.push(k);
        } else {
            class_set.push(k);
        }
    }
    if class_set.is_empty() {
        return Err(Error::AllDegenerate);
    }
    let margins = margins_for(class_set.iter().map(|&k| (k, data.count(k).pos)), loss)?;
    let memory = memory.filter(|m| !m.is_empty());
    let replay = match memory {
        Some(m) => replay_contexts(m, loss)?,
        None => BTreeMap::new(),
    };

    let mut opt = Sgd::new(sgd.eta, sgd.weight_decay, sgd.momentum);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..sgd.epochs {
        let mut shuffle_rng = rng::stream(sgd.seed, &[rng::SHUFFLE, task_id as u64, epoch as u64]);
        let mut memory_rng =
            rng::stream(sgd.seed, &[rng::MEMORY_BATCH, task_id as u64, epoch as u64]);
        order.shuffle(&mut shuffle_rng);

        let (mut risk_sum, mut risk_n) = (0.0, 0usize);
        let (mut mem_sum, mut mem_n) = (0.0, 0usize);
        for chunk in order.chunks(sgd.batch_size) {
            let batch = Batch::from_examples(chunk.iter().map(|&i| &data.examples()[i]));
            let weights = ClassWeights::from_view(&batch.labels, &class_set);
            let current = match risk_and_grad(scorer, &batch, &class_set, &weights, &margins, loss) {
                Ok(rg) => {
                    risk_sum += rg.risk.value;
                    risk_n += 1;
                    Some(rg.grad)
                }
                Err(Error::AllDegenerate) => {
                    log.degenerate_batches += 1;
                    None
                }
                Err(e) => return Err(e),
            };

            let replayed = match memory {
                Some(m) => {
                    let items = m.sample_batch(sgd.batch_size, &mut memory_rng)?;
                    replay_gradient(scorer, m, &items, &replay, loss)?
                }
                None => None,
            };
            if let Some((r, _)) = &replayed {
                mem_sum += r;
                mem_n += 1;
            }
            if current.is_none() && replayed.is_none() {
                continue;
            }
            opt.step(
                scorer,
                current.as_deref(),
                replayed.as_ref().map(|(_, g)| g.as_slice()),
            )?;
        }
        log.epochs.push(EpochLog {
            epoch,
            risk: if risk_n > 0 { risk_sum / risk_n as f64 } else { f64::NAN },
            memory_risk: (mem_n > 0).then(|| mem_sum / mem_n as f64),
        });
    }
    Ok(log)
}

/// Mean risk and gradient over the source-task groups of a memory batch.
fn replay_gradient(
    scorer: &Scorer,
    memory: &MemoryBuffer,
    items: &[crate::memory::MemoryItem],
    replay: &BTreeMap<TaskId, ReplayTask>,
    loss: &LossConfig,
) -> Result<Option<(f64, Vec<f64>)>> {
    let mut groups: BTreeMap<TaskId, Vec<&Example>> = BTreeMap::new();
    for &item in items {
        groups.entry(item.task).or_default().push(memory.get(item));
    }
    let mut grad = vec![0.0; scorer.weights().len()];
    let (mut risk, mut used) = (0.0, 0usize);
    for (t, examples) in groups {
        let ctx = &replay[&t];
        let batch = Batch::from_examples(examples);
        let view;
        let weights = match &ctx.stored_weights {
            Some(w) => w,
            None => {
                view = ClassWeights::from_view(&batch.labels, &ctx.class_set);
                &view
            }
        };
        match risk_and_grad(scorer, &batch, &ctx.class_set, weights, &ctx.margins, loss) {
            Ok(rg) => {
                risk += rg.risk.value;
                used += 1;
                grad.iter_mut().zip(&rg.grad).for_each(|(g, d)| *g += d);
            }
            Err(Error::AllDegenerate) => {}
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Ok(None);
    }
    let m = used as f64;
    grad.iter_mut().for_each(|g| *g /= m);
    Ok(Some((risk / m, grad)))
}
