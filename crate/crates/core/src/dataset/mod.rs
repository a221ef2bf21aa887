//! Multi-label datasets, synthetic generation, class-incremental task splitting
//! and JSON-lines persistence.

mod generate;
mod io;
mod split;

pub use generate::{generate_synthetic, GeneratorConfig, ImbalanceProfile};
pub use io::{load, load_dataset, load_tasks, save_dataset, save_tasks, DatasetFile};
pub use split::{split_tasks, train_test_split, NegativePadding, SplitConfig};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{ClassId, Error, Result, TaskId};

/// One instance: a dense feature vector and a multi-hot label vector over all
/// `K` global classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    #[serde(rename = "x")]
    pub features: Vec<f64>,
    #[serde(rename = "y")]
    pub labels: Vec<u8>,
}

impl Example {
    pub fn new(features: Vec<f64>, labels: Vec<u8>) -> Self {
        Self { features, labels }
    }

    #[inline]
    pub fn is_positive(&self, class: ClassId) -> bool {
        self.labels[class] == 1
    }

    /// Number of relevant labels among `classes`.
    pub fn positives_in(&self, classes: &[ClassId]) -> usize {
        classes.iter().filter(|&&k| self.is_positive(k)).count()
    }
}

/// Positive and negative counts of one class in some view of the data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCount {
    pub pos: usize,
    pub neg: usize,
}

impl ClassCount {
    pub fn new(pos: usize, neg: usize) -> Self {
        Self { pos, neg }
    }

    pub fn is_degenerate(&self) -> bool {
        self.pos == 0 || self.neg == 0
    }
}

/// Per-class statistics: counts and the label-wise imbalance `tau`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassStat {
    pub class: ClassId,
    pub pos: usize,
    pub neg: usize,
    /// `min(pos, neg) / n`.
    pub tau: f64,
}

/// A multi-label dataset over a set of known classes.
///
/// Labels of classes outside `class_ids` are always zero; index sets are kept
/// for the known classes only.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiLabelDataset {
    dim: usize,
    num_classes: usize,
    class_ids: Vec<ClassId>,
    examples: Vec<Example>,
    pos_index: Vec<Vec<usize>>,
    neg_index: Vec<Vec<usize>>,
}

impl MultiLabelDataset {
    /// Validates the examples and builds per-class index sets.
    pub fn new(
        dim: usize,
        num_classes: usize,
        class_ids: Vec<ClassId>,
        examples: Vec<Example>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &k in &class_ids {
            if k >= num_classes {
                return Err(Error::InvalidConfig(format!(
                    "class id {k} out of range for {num_classes} classes"
                )));
            }
            if !seen.insert(k) {
                return Err(Error::InvalidConfig(format!("duplicate class id {k}")));
            }
        }
        for (i, ex) in examples.iter().enumerate() {
            validate_example(ex, dim, num_classes, i)?;
            for (k, &y) in ex.labels.iter().enumerate() {
                if y == 1 && !seen.contains(&k) {
                    return Err(Error::Structure {
                        record: i,
                        message: format!("positive label for unknown class {k}"),
                    });
                }
            }
        }
        let mut pos_index = Vec::with_capacity(class_ids.len());
        let mut neg_index = Vec::with_capacity(class_ids.len());
        for &k in &class_ids {
            let (pos, neg): (Vec<usize>, Vec<usize>) =
                (0..examples.len()).partition(|&i| examples[i].is_positive(k));
            pos_index.push(pos);
            neg_index.push(neg);
        }
        Ok(Self {
            dim,
            num_classes,
            class_ids,
            examples,
            pos_index,
            neg_index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_ids(&self) -> &[ClassId] {
        &self.class_ids
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn into_examples(self) -> Vec<Example> {
        self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    fn slot(&self, class: ClassId) -> Option<usize> {
        self.class_ids.iter().position(|&k| k == class)
    }

    /// Indices of examples positive for `class`; empty for unknown classes.
    pub fn pos_index(&self, class: ClassId) -> &[usize] {
        self.slot(class).map_or(&[], |s| &self.pos_index[s])
    }

    pub fn neg_index(&self, class: ClassId) -> &[usize] {
        self.slot(class).map_or(&[], |s| &self.neg_index[s])
    }

    pub fn count(&self, class: ClassId) -> ClassCount {
        ClassCount::new(self.pos_index(class).len(), self.neg_index(class).len())
    }

    /// Rebuilds the dataset on a subset of examples (by index, in order).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let examples = indices.iter().map(|&i| self.examples[i].clone()).collect();
        Self::new(self.dim, self.num_classes, self.class_ids.clone(), examples)
    }

    /// Applies `f` to every feature vector, keeping labels.
    pub fn map_features<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        let examples: Vec<Example> = self
            .examples
            .iter()
            .map(|ex| Example::new(f(&ex.features), ex.labels.clone()))
            .collect();
        let dim = examples.first().map_or(self.dim, |e| e.features.len());
        Self::new(dim, self.num_classes, self.class_ids.clone(), examples)
    }
}

pub(crate) fn validate_example(
    ex: &Example,
    dim: usize,
    num_classes: usize,
    record: usize,
) -> Result<()> {
    if ex.features.len() != dim {
        return Err(Error::Structure {
            record,
            message: format!("\"x\" has length {}, expected {dim}", ex.features.len()),
        });
    }
    if ex.labels.len() != num_classes {
        return Err(Error::Structure {
            record,
            message: format!(
                "\"y\" has length {}, expected {num_classes}",
                ex.labels.len()
            ),
        });
    }
    if let Some(v) = ex.features.iter().find(|v| !v.is_finite()) {
        return Err(Error::Structure {
            record,
            message: format!("non-finite feature value {v}"),
        });
    }
    if let Some(v) = ex.labels.iter().find(|&&y| y > 1) {
        return Err(Error::Structure {
            record,
            message: format!("label value {v} is not 0 or 1"),
        });
    }
    Ok(())
}

/// Counts and `tau` for every known class of `ds`.
pub fn class_stats(ds: &MultiLabelDataset) -> Vec<ClassStat> {
    let n = ds.len();
    ds.class_ids()
        .iter()
        .map(|&k| {
            let c = ds.count(k);
            let tau = if n == 0 {
                0.0
            } else {
                c.pos.min(c.neg) as f64 / n as f64
            };
            ClassStat {
                class: k,
                pos: c.pos,
                neg: c.neg,
                tau,
            }
        })
        .collect()
}

/// One task of a class-incremental sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub id: TaskId,
    pub data: MultiLabelDataset,
}

impl Task {
    pub fn classes(&self) -> &[ClassId] {
        self.data.class_ids()
    }
}

/// Ordered tasks with pairwise disjoint class sets.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSequence {
    pub tasks: Vec<Task>,
    pub num_classes: usize,
}

impl TaskSequence {
    /// Checks disjointness, coverage, masking and the per-task requirements
    /// (a multi-label sample, and both label sides present for every class).
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for task in &self.tasks {
            for &k in task.classes() {
                if !seen.insert(k) {
                    return Err(Error::Split(format!(
                        "class {k} appears in more than one task"
                    )));
                }
            }
            validate_task(task)?;
        }
        if seen.len() != self.num_classes {
            return Err(Error::Split(format!(
                "tasks cover {} classes, expected {}",
                seen.len(),
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.tasks.first().map_or(0, |t| t.data.dim())
    }
}

pub(crate) fn validate_task(task: &Task) -> Result<()> {
    let classes = task.classes();
    for &k in classes {
        if task.data.count(k).is_degenerate() {
            return Err(Error::Split(format!(
                "task {} class {k} lacks positives or negatives",
                task.id
            )));
        }
    }
    if !task
        .data
        .examples()
        .iter()
        .any(|ex| ex.positives_in(classes) >= 2)
    {
        return Err(Error::Split(format!(
            "task {} has no example with two or more relevant labels",
            task.id
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds_with_positives(n: usize, pos: usize) -> MultiLabelDataset {
        let examples = (0..n)
            .map(|i| Example::new(vec![i as f64], vec![u8::from(i < pos)]))
            .collect();
        MultiLabelDataset::new(1, 1, vec![0], examples).unwrap()
    }

    #[test]
    fn class_stats_counts_and_tau() {
        let s = class_stats(&ds_with_positives(10, 3))[0];
        assert_eq!((s.pos, s.neg), (3, 7));
        assert!((s.tau - 0.3).abs() < 1e-15);

        assert_eq!(class_stats(&ds_with_positives(10, 5))[0].tau, 0.5);

        let s = class_stats(&ds_with_positives(10, 0))[0];
        assert_eq!((s.pos, s.neg, s.tau), (0, 10, 0.0));
    }

    #[test]
    fn index_sets_partition_examples() {
        let ds = ds_with_positives(7, 2);
        assert_eq!(ds.pos_index(0), &[0, 1]);
        assert_eq!(ds.neg_index(0), &[2, 3, 4, 5, 6]);
        assert!(ds.pos_index(3).is_empty());
    }

    #[test]
    fn rejects_bad_labels() {
        let bad = vec![Example::new(vec![0.0], vec![2])];
        assert!(MultiLabelDataset::new(1, 1, vec![0], bad).is_err());
        let unknown = vec![Example::new(vec![0.0], vec![0, 1])];
        assert!(MultiLabelDataset::new(1, 2, vec![0], unknown).is_err());
        let nan = vec![Example::new(vec![f64::NAN], vec![0])];
        assert!(MultiLabelDataset::new(1, 1, vec![0], nan).is_err());
    }
}
