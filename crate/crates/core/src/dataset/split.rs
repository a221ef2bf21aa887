use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::{validate_task, Example, MultiLabelDataset, Task, TaskSequence};
use crate::rng;
use crate::{ClassId, Error, Result};

const MAX_ATTEMPTS: u64 = 100;

/// How many negative-only examples a task keeps besides the examples that are
/// relevant to at least one of its classes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativePadding {
    /// Enough to make every class's negative count at least its positive count.
    #[default]
    Balance,
    /// A fixed number (raised if needed to give every class one negative).
    Count(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    #[serde(rename = "T")]
    pub num_tasks: usize,
    pub seed: u64,
    #[serde(default)]
    pub negative_padding: NegativePadding,
}

/// Zeroes every label outside `classes`.
pub(crate) fn mask_labels(ex: &Example, classes: &[ClassId]) -> Example {
    let mut labels = vec![0u8; ex.labels.len()];
    for &k in classes {
        labels[k] = ex.labels[k];
    }
    Example::new(ex.features.clone(), labels)
}

/// Partitions the classes of `ds` into disjoint task class sets and builds one
/// masked dataset per task.
///
/// A task keeps every example relevant to one of its classes plus uniformly
/// drawn negative-only padding. Examples may repeat across tasks. The class
/// partition is redrawn until every task has an example with two relevant
/// labels and both label sides for each class.
pub fn split_tasks(ds: &MultiLabelDataset, cfg: &SplitConfig) -> Result<TaskSequence> {
    let classes = ds.class_ids().to_vec();
    if cfg.num_tasks == 0 || classes.len() < cfg.num_tasks {
        return Err(Error::InvalidConfig(format!(
            "cannot split {} classes into {} tasks",
            classes.len(),
            cfg.num_tasks
        )));
    }
    if let Some(&k) = classes.iter().find(|&&k| ds.pos_index(k).is_empty()) {
        return Err(Error::Split(format!("class {k} has no positive example")));
    }

    let mut last_err = None;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = rng::stream(cfg.seed, &[rng::SPLIT, attempt]);
        let mut perm = classes.clone();
        perm.shuffle(&mut rng);
        let sets = partition(&perm, cfg.num_tasks);

        let built: Result<Vec<Task>> = sets
            .into_iter()
            .enumerate()
            .map(|(t, set)| build_task(ds, t + 1, set, cfg.negative_padding, &mut rng))
            .collect();
        match built {
            Ok(tasks) => {
                return Ok(TaskSequence {
                    tasks,
                    num_classes: ds.num_classes(),
                })
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(Error::Split(format!(
        "no valid split after {MAX_ATTEMPTS} attempts (last: {})",
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

fn partition(perm: &[ClassId], parts: usize) -> Vec<Vec<ClassId>> {
    let base = perm.len() / parts;
    let extra = perm.len() % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for t in 0..parts {
        let len = base + usize::from(t < extra);
        let mut set = perm[start..start + len].to_vec();
        set.sort_unstable();
        out.push(set);
        start += len;
    }
    out
}

fn build_task<R: rand::Rng>(
    ds: &MultiLabelDataset,
    id: usize,
    classes: Vec<ClassId>,
    padding: NegativePadding,
    rng: &mut R,
) -> Result<Task> {
    let (included, candidates): (Vec<usize>, Vec<usize>) =
        (0..ds.len()).partition(|&i| ds.examples()[i].positives_in(&classes) > 0);

    let mut balance_gap = 0usize;
    let mut min_gap = 0usize;
    for &k in &classes {
        let pos = included.iter().filter(|&&i| ds.examples()[i].is_positive(k)).count();
        let neg = included.len() - pos;
        balance_gap = balance_gap.max(pos.saturating_sub(neg));
        min_gap = min_gap.max(1usize.saturating_sub(neg));
    }
    let need = match padding {
        NegativePadding::Balance => balance_gap.max(min_gap),
        NegativePadding::Count(c) => c.max(min_gap),
    }
    .min(candidates.len());

    let mut chosen: Vec<usize> = index::sample(rng, candidates.len(), need)
        .into_iter()
        .map(|j| candidates[j])
        .collect();
    chosen.extend_from_slice(&included);
    chosen.sort_unstable();

    let examples = chosen
        .iter()
        .map(|&i| mask_labels(&ds.examples()[i], &classes))
        .collect();
    let data = MultiLabelDataset::new(ds.dim(), ds.num_classes(), classes, examples)?;
    let task = Task { id, data };
    validate_task(&task)?;
    Ok(task)
}

/// Seeded holdout split: the first `round(test_fraction * n)` examples of a
/// random permutation form the test set. Both parts keep dataset order.
pub fn train_test_split(
    ds: &MultiLabelDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(MultiLabelDataset, MultiLabelDataset)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidConfig(format!(
            "test fraction {test_fraction} outside [0, 1)"
        )));
    }
    let n = ds.len();
    let n_test = (test_fraction * n as f64).round() as usize;
    let mut rng = rng::stream(seed, &[rng::HOLDOUT]);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut test: Vec<usize> = perm[..n_test].to_vec();
    let mut train: Vec<usize> = perm[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, GeneratorConfig, ImbalanceProfile};

    fn synthetic(k: usize, t: usize, seed: u64) -> MultiLabelDataset {
        generate_synthetic(&GeneratorConfig {
            dim: 5,
            num_classes: k,
            num_tasks: t,
            n_per_task: 150,
            imbalance_profile: ImbalanceProfile::LogSpaced {
                log_spaced: [0.05, 0.4],
            },
            label_correlation: 0.3,
            seed,
            prototype_scale: 3.0,
            noise: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn six_classes_three_tasks() {
        let ds = synthetic(6, 3, 1);
        let seq = split_tasks(
            &ds,
            &SplitConfig {
                num_tasks: 3,
                seed: 5,
                negative_padding: NegativePadding::Balance,
            },
        )
        .unwrap();
        assert_eq!(seq.tasks.len(), 3);
        for t in &seq.tasks {
            assert_eq!(t.classes().len(), 2);
        }
        seq.validate().unwrap();
    }

    #[test]
    fn masking_keeps_only_task_classes() {
        let mut labels = vec![0u8; 6];
        labels[1] = 1;
        labels[4] = 1;
        let ex = Example::new(vec![0.5, -1.0], labels);
        let masked = mask_labels(&ex, &[1, 2]);
        assert_eq!(masked.labels, vec![0, 1, 0, 0, 0, 0]);
        assert_eq!(masked.features, ex.features);
    }

    #[test]
    fn co_occurring_pair_single_task() {
        let examples: Vec<Example> = (0..10)
            .map(|i| {
                let y = u8::from(i % 3 == 0);
                Example::new(vec![i as f64], vec![y, y])
            })
            .collect();
        let ds = MultiLabelDataset::new(1, 2, vec![0, 1], examples).unwrap();
        let seq = split_tasks(
            &ds,
            &SplitConfig {
                num_tasks: 1,
                seed: 0,
                negative_padding: NegativePadding::Balance,
            },
        )
        .unwrap();
        let task = &seq.tasks[0];
        assert!(task
            .data
            .examples()
            .iter()
            .any(|e| e.labels.iter().map(|&y| y as usize).sum::<usize>() == 2));
    }

    #[test]
    fn balance_padding_keeps_negatives_at_least_positives() {
        let ds = synthetic(8, 2, 3);
        let seq = split_tasks(
            &ds,
            &SplitConfig {
                num_tasks: 2,
                seed: 9,
                negative_padding: NegativePadding::Balance,
            },
        )
        .unwrap();
        for t in &seq.tasks {
            for &k in t.classes() {
                let c = t.data.count(k);
                assert!(c.neg >= c.pos, "task {} class {k}: {c:?}", t.id);
            }
        }
    }

    #[test]
    fn impossible_split_fails() {
        // No example carries two labels, so no task can hold a multi-label sample.
        let examples: Vec<Example> = (0..8)
            .map(|i| {
                let mut y = vec![0u8; 2];
                if i < 4 {
                    y[i % 2] = 1;
                }
                Example::new(vec![i as f64], y)
            })
            .collect();
        let ds = MultiLabelDataset::new(1, 2, vec![0, 1], examples).unwrap();
        let err = split_tasks(
            &ds,
            &SplitConfig {
                num_tasks: 1,
                seed: 0,
                negative_padding: NegativePadding::Balance,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Split(_)));
    }

    #[test]
    fn holdout_split_sizes_and_disjointness() {
        let ds = synthetic(4, 1, 2);
        let (train, test) = train_test_split(&ds, 0.2, 4).unwrap();
        assert_eq!(train.len() + test.len(), ds.len());
        assert_eq!(test.len(), (0.2 * ds.len() as f64).round() as usize);
        let (train2, _) = train_test_split(&ds, 0.2, 4).unwrap();
        assert_eq!(train, train2);
    }
}
