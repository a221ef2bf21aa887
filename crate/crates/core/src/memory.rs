//! Rehearsal memory.
//!
//! [`MemoryBuffer::update_wru`] implements Weight Retain Updating: after a task
//! is learned, every task keeps `floor(M / t)` examples. Existing stores are
//! shrunk by random removal, and the new task's store is chosen greedily so
//! that each class's positive/negative ratio matches the full task data. The
//! full-data counts `|D_k+|`, `|D_k-|` are stored next to the examples and are
//! never modified afterwards.
//!
//! Reservoir sampling and uniform per-task sampling are the replay baselines;
//! they keep no counts.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{class_stats, ClassCount, Example, MultiLabelDataset};
use crate::{ClassId, Error, Result, TaskId};

/// Discrepancy charged when exactly one of two ratios is infinite.
pub const INFINITE_RATIO_PENALTY: f64 = 1e6;

/// Default size of the random candidate subset scanned per greedy step.
pub const DEFAULT_WRU_SUBSET: usize = 64;

/// `|pos| / |neg|`, with an explicit value for a class without negatives.
/// Variant order makes `Infinite` compare above every finite ratio.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub enum Ratio {
    Finite(f64),
    Infinite,
}

pub fn rat(count: ClassCount) -> Ratio {
    if count.neg == 0 {
        if count.pos == 0 {
            // 0 / 0
            Ratio::Finite(0.0)
        } else {
            Ratio::Infinite
        }
    } else {
        Ratio::Finite(count.pos as f64 / count.neg as f64)
    }
}

pub fn ratio_gap(a: Ratio, b: Ratio) -> f64 {
    match (a, b) {
        (Ratio::Finite(x), Ratio::Finite(y)) => (x - y).abs(),
        (Ratio::Infinite, Ratio::Infinite) => 0.0,
        _ => INFINITE_RATIO_PENALTY,
    }
}

/// `sum_k |Rat(target, k) - Rat(selected, k)|`.
pub fn ratio_discrepancy(target: &[ClassCount], selected: &[ClassCount]) -> f64 {
    target
        .iter()
        .zip(selected)
        .map(|(&t, &s)| ratio_gap(rat(t), rat(s)))
        .sum()
}

/// Discrepancy between `ds` and the subset of it given by `indices`.
pub fn selection_discrepancy(ds: &MultiLabelDataset, indices: &[usize]) -> f64 {
    let classes = ds.class_ids();
    let target: Vec<ClassCount> = classes.iter().map(|&k| ds.count(k)).collect();
    let selected: Vec<ClassCount> = classes
        .iter()
        .map(|&k| {
            let pos = indices.iter().filter(|&&i| ds.examples()[i].is_positive(k)).count();
            ClassCount::new(pos, indices.len() - pos)
        })
        .collect();
    ratio_discrepancy(&target, &selected)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WruSelection {
    /// Selected example indices, in selection order.
    pub indices: Vec<usize>,
    /// Number of candidate evaluations performed.
    pub evaluations: usize,
}

/// Greedy ratio-matching selection of `quota` examples from `data`.
///
/// Each step scores a fresh random subset of `subset` unselected candidates
/// (all of them when `subset` is `None` or not smaller than what remains) and
/// keeps the one whose addition minimizes the ratio discrepancy; ties go to
/// the lowest example index.
pub fn wru_select<R: Rng + ?Sized>(
    data: &MultiLabelDataset,
    quota: usize,
    subset: Option<usize>,
    rng: &mut R,
) -> Result<WruSelection> {
    if quota > data.len() {
        return Err(Error::Quota {
            quota,
            available: data.len(),
        });
    }
    if subset == Some(0) {
        return Err(Error::InvalidConfig("WRU subset size must be >= 1".into()));
    }
    let classes = data.class_ids();
    let target: Vec<Ratio> = classes.iter().map(|&k| rat(data.count(k))).collect();
    let mut sel_pos = vec![0usize; classes.len()];
    let mut remaining: Vec<usize> = (0..data.len()).collect();
    let mut indices = Vec::with_capacity(quota);
    let mut evaluations = 0;

    for taken in 0..quota {
        let candidates: Vec<usize> = match subset {
            Some(s) if s < remaining.len() => {
                let mut c: Vec<usize> = index::sample(rng, remaining.len(), s)
                    .into_iter()
                    .map(|j| remaining[j])
                    .collect();
                c.sort_unstable();
                c
            }
            _ => remaining.clone(),
        };

        let mut best: Option<(f64, usize)> = None;
        for &i in &candidates {
            evaluations += 1;
            let ex = &data.examples()[i];
            let d: f64 = classes
                .iter()
                .enumerate()
                .map(|(c, &k)| {
                    let pos = sel_pos[c] + usize::from(ex.is_positive(k));
                    let after = rat(ClassCount::new(pos, taken + 1 - pos));
                    ratio_gap(target[c], after)
                })
                .sum();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        let (_, pick) = best.expect("quota <= remaining guarantees a candidate");
        for (c, &k) in classes.iter().enumerate() {
            sel_pos[c] += usize::from(data.examples()[pick].is_positive(k));
        }
        let at = remaining.binary_search(&pick).expect("candidate comes from remaining");
        remaining.remove(at);
        indices.push(pick);
    }
    Ok(WruSelection {
        indices,
        evaluations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Wru,
    Reservoir,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdatePolicy {
    /// Greedy ratio matching over random candidate subsets (`None`: all).
    Wru { subset: Option<usize> },
    Reservoir,
    Random,
}

/// The stored examples of one task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskMemory {
    pub class_set: Vec<ClassId>,
    pub examples: Vec<Example>,
    /// Full-task counts, written once by WRU.
    pub stored_counts: Option<BTreeMap<ClassId, ClassCount>>,
}

impl TaskMemory {
    /// Counts of the stored examples themselves.
    pub fn view_counts(&self) -> BTreeMap<ClassId, ClassCount> {
        self.class_set
            .iter()
            .map(|&k| {
                let pos = self.examples.iter().filter(|e| e.is_positive(k)).count();
                (k, ClassCount::new(pos, self.examples.len() - pos))
            })
            .collect()
    }
}

/// Reference to one stored example.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct MemoryItem {
    pub task: TaskId,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryBuffer {
    capacity: usize,
    tasks: BTreeMap<TaskId, TaskMemory>,
    /// Stream length seen by the reservoir policy.
    seen: usize,
}

impl MemoryBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("memory capacity must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            tasks: BTreeMap::new(),
            seen: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.tasks.values().map(|t| t.examples.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tasks(&self) -> &BTreeMap<TaskId, TaskMemory> {
        &self.tasks
    }

    pub fn task(&self, id: TaskId) -> Option<&TaskMemory> {
        self.tasks.get(&id)
    }

    pub fn get(&self, item: MemoryItem) -> &Example {
        &self.tasks[&item.task].examples[item.index]
    }

    fn quota_for_new(&self, task_id: TaskId) -> Result<usize> {
        let t = self.tasks.len() + usize::from(!self.tasks.contains_key(&task_id));
        let quota = self.capacity / t;
        if quota == 0 {
            return Err(Error::InvalidConfig(format!(
                "memory size {} is smaller than the number of tasks {t}",
                self.capacity
            )));
        }
        Ok(quota)
    }

    fn shrink_to<R: Rng + ?Sized>(&mut self, quota: usize, rng: &mut R) {
        for mem in self.tasks.values_mut() {
            let n = mem.examples.len();
            if n > quota {
                let mut keep: Vec<usize> = index::sample(rng, n, quota).into_vec();
                keep.sort_unstable();
                let old = std::mem::take(&mut mem.examples);
                let mut it = keep.into_iter().peekable();
                mem.examples = old
                    .into_iter()
                    .enumerate()
                    .filter_map(|(i, e)| (it.next_if_eq(&i).is_some()).then_some(e))
                    .collect();
            }
        }
    }

    /// Weight Retain Updating for a newly learned task.
    pub fn update_wru<R: Rng + ?Sized>(
        &mut self,
        task_id: TaskId,
        data: &MultiLabelDataset,
        subset: Option<usize>,
        rng: &mut R,
    ) -> Result<()> {
        let quota = self.quota_for_new(task_id)?;
        self.shrink_to(quota, rng);
        let sel = wru_select(data, quota.min(data.len()), subset, rng)?;
        let counts = class_stats(data)
            .into_iter()
            .map(|s| (s.class, ClassCount::new(s.pos, s.neg)))
            .collect();
        self.tasks.insert(
            task_id,
            TaskMemory {
                class_set: data.class_ids().to_vec(),
                examples: sel.indices.iter().map(|&i| data.examples()[i].clone()).collect(),
                stored_counts: Some(counts),
            },
        );
        Ok(())
    }

    /// Uniform per-task sampling with the same `floor(M / t)` quota.
    pub fn update_random<R: Rng + ?Sized>(
        &mut self,
        task_id: TaskId,
        data: &MultiLabelDataset,
        rng: &mut R,
    ) -> Result<()> {
        let quota = self.quota_for_new(task_id)?;
        self.shrink_to(quota, rng);
        let mut pick = index::sample(rng, data.len(), quota.min(data.len())).into_vec();
        pick.sort_unstable();
        self.tasks.insert(
            task_id,
            TaskMemory {
                class_set: data.class_ids().to_vec(),
                examples: pick.iter().map(|&i| data.examples()[i].clone()).collect(),
                stored_counts: None,
            },
        );
        Ok(())
    }

    /// Streams the examples of `data` through reservoir sampling.
    pub fn update_reservoir<R: Rng + ?Sized>(
        &mut self,
        task_id: TaskId,
        data: &MultiLabelDataset,
        rng: &mut R,
    ) {
        for ex in data.examples() {
            self.offer(task_id, data.class_ids(), ex.clone(), rng);
        }
    }

    /// One reservoir step: item `i` of the stream (1-based) replaces a uniformly
    /// chosen slot with probability `M / i` once the buffer is full.
    pub fn offer<R: Rng + ?Sized>(
        &mut self,
        task_id: TaskId,
        class_set: &[ClassId],
        example: Example,
        rng: &mut R,
    ) {
        self.seen += 1;
        let slot = if self.len() < self.capacity {
            None
        } else {
            let j = rng.random_range(0..self.seen);
            if j >= self.capacity {
                return;
            }
            Some(j)
        };
        if let Some(j) = slot {
            let item = self.locate(j);
            let mem = self.tasks.get_mut(&item.task).expect("located task exists");
            mem.examples.remove(item.index);
            if mem.examples.is_empty() {
                self.tasks.remove(&item.task);
            }
        }
        self.tasks
            .entry(task_id)
            .or_insert_with(|| TaskMemory {
                class_set: class_set.to_vec(),
                examples: Vec::new(),
                stored_counts: None,
            })
            .examples
            .push(example);
    }

    /// Maps a global position (tasks in id order) to an item.
    fn locate(&self, mut j: usize) -> MemoryItem {
        for (&task, mem) in &self.tasks {
            if j < mem.examples.len() {
                return MemoryItem { task, index: j };
            }
            j -= mem.examples.len();
        }
        panic!("memory position out of range");
    }

    pub fn update<R: Rng + ?Sized>(
        &mut self,
        policy: UpdatePolicy,
        task_id: TaskId,
        data: &MultiLabelDataset,
        rng: &mut R,
    ) -> Result<()> {
        match policy {
            UpdatePolicy::Wru { subset } => self.update_wru(task_id, data, subset, rng),
            UpdatePolicy::Random => self.update_random(task_id, data, rng),
            UpdatePolicy::Reservoir => {
                self.update_reservoir(task_id, data, rng);
                Ok(())
            }
        }
    }

    /// A batch of `b` items drawn uniformly from all stored examples: without
    /// replacement when enough are stored, with replacement otherwise.
    pub fn sample_batch<R: Rng + ?Sized>(&self, b: usize, rng: &mut R) -> Result<Vec<MemoryItem>> {
        let total = self.len();
        if total == 0 {
            return Err(Error::Empty("memory buffer"));
        }
        let positions: Vec<usize> = if b <= total {
            index::sample(rng, total, b).into_vec()
        } else {
            (0..b).map(|_| rng.random_range(0..total)).collect()
        };
        Ok(positions.into_iter().map(|j| self.locate(j)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_class(labels: &[u8]) -> MultiLabelDataset {
        let ex = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| Example::new(vec![i as f64], vec![y]))
            .collect();
        MultiLabelDataset::new(1, 1, vec![0], ex).unwrap()
    }

    #[test]
    fn rat_examples() {
        assert_eq!(rat(ClassCount::new(4, 6)), Ratio::Finite(4.0 / 6.0));
        assert_eq!(rat(ClassCount::new(0, 5)), Ratio::Finite(0.0));
        assert_eq!(rat(ClassCount::new(3, 0)), Ratio::Infinite);
        assert!(Ratio::Infinite > Ratio::Finite(1e300));
        assert_eq!(ratio_gap(Ratio::Infinite, Ratio::Infinite), 0.0);
        assert_eq!(ratio_gap(Ratio::Finite(0.5), Ratio::Infinite), INFINITE_RATIO_PENALTY);
    }

    #[test]
    fn homogeneous_data_takes_first_indices() {
        let ds = one_class(&[1, 1, 1, 1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sel = wru_select(&ds, 3, None, &mut rng).unwrap();
        assert_eq!(sel.indices, vec![0, 1, 2]);
        assert_eq!(selection_discrepancy(&ds, &sel.indices), 0.0);
    }

    #[test]
    fn greedy_matches_exhaustive_optimum_on_small_instance() {
        let ds = one_class(&[1, 1, 0, 0, 0, 0]);
        let mut best = f64::INFINITY;
        for a in 0..6 {
            for b in a + 1..6 {
                for c in b + 1..6 {
                    best = best.min(selection_discrepancy(&ds, &[a, b, c]));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sel = wru_select(&ds, 3, None, &mut rng).unwrap();
        assert_eq!(selection_discrepancy(&ds, &sel.indices), best);
        assert_eq!(best, 0.0);
    }

    #[test]
    fn full_subset_equals_unlimited() {
        let ds = one_class(&[1, 0, 0, 1, 0, 0, 0, 1, 0, 0]);
        let a = wru_select(&ds, 5, None, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = wru_select(&ds, 5, Some(ds.len()), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn greedy_cost_is_bounded() {
        let labels: Vec<u8> = (0..200).map(|i| u8::from(i % 7 == 0)).collect();
        let ds = one_class(&labels);
        let sel = wru_select(&ds, 40, Some(16), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(sel.evaluations <= 40 * 16);
        assert_eq!(sel.indices.len(), 40);
    }

    #[test]
    fn quota_larger_than_data_fails() {
        let ds = one_class(&[1, 0]);
        assert!(matches!(
            wru_select(&ds, 3, None, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::Quota { quota: 3, available: 2 })
        ));
    }

    #[test]
    fn wru_quotas_and_count_immutability() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let labels: Vec<u8> = (0..500).map(|i| u8::from(i % 5 == 0)).collect();
        let d1 = one_class(&labels);
        let mut buf = MemoryBuffer::new(100).unwrap();
        buf.update_wru(1, &d1, Some(64), &mut rng).unwrap();
        assert_eq!(buf.task(1).unwrap().examples.len(), 100);
        let counts1 = buf.task(1).unwrap().stored_counts.clone().unwrap();
        assert_eq!(counts1[&0], ClassCount::new(100, 400));

        buf.update_wru(2, &d1, Some(64), &mut rng).unwrap();
        assert_eq!(buf.task(1).unwrap().examples.len(), 50);
        assert_eq!(buf.task(2).unwrap().examples.len(), 50);
        assert_eq!(buf.task(1).unwrap().stored_counts.as_ref().unwrap(), &counts1);

        buf.update_wru(3, &d1, Some(64), &mut rng).unwrap();
        for t in 1..=3 {
            assert_eq!(buf.task(t).unwrap().examples.len(), 33);
        }
        assert!(buf.len() <= 100);

        let mut tiny = MemoryBuffer::new(1).unwrap();
        tiny.update_wru(1, &d1, None, &mut rng).unwrap();
        assert!(tiny.update_wru(2, &d1, None, &mut rng).is_err());
    }

    #[test]
    fn reservoir_keeps_everything_when_stream_fits() {
        let ds = one_class(&[1, 0, 1, 0, 0]);
        let mut buf = MemoryBuffer::new(5).unwrap();
        buf.update_reservoir(1, &ds, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(buf.task(1).unwrap().examples, ds.examples());
        assert!(buf.task(1).unwrap().stored_counts.is_none());
    }

    #[test]
    fn random_with_full_quota_stores_task() {
        let ds = one_class(&[1, 0, 1, 0, 0]);
        let mut buf = MemoryBuffer::new(5).unwrap();
        buf.update_random(1, &ds, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(buf.task(1).unwrap().examples, ds.examples());
    }

    #[test]
    fn memory_batch_contract() {
        let ds = one_class(&[1]);
        let mut buf = MemoryBuffer::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(buf.sample_batch(1, &mut rng).is_err());
        buf.update_random(1, &ds, &mut rng).unwrap();
        let b = buf.sample_batch(1, &mut rng).unwrap();
        assert_eq!(b, vec![MemoryItem { task: 1, index: 0 }]);
        assert_eq!(buf.sample_batch(7, &mut rng).unwrap().len(), 7);
    }

    #[test]
    fn memory_batch_frequencies_are_uniform() {
        let labels = [1, 0, 0, 1, 0, 1, 0, 0, 0, 1];
        let ds = one_class(&labels);
        let mut buf = MemoryBuffer::new(10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        buf.update_random(1, &ds, &mut rng).unwrap();
        let draws = 10_000;
        let mut hits = [0usize; 10];
        for _ in 0..draws {
            hits[buf.sample_batch(1, &mut rng).unwrap()[0].index] += 1;
        }
        let p = 0.1;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for h in hits {
            assert!((h as f64 - mean).abs() <= 3.0 * sd, "{h}");
        }
    }
}
