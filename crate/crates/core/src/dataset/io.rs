//! JSON-lines persistence.
//!
//! Line 1 is a header object; every following line is one example
//! `{"x":[...],"y":[...]}`. Task sequences store their examples task by task,
//! with the boundaries recorded in the header.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate_example, Example, MultiLabelDataset, Task, TaskSequence};
use crate::{ClassId, Error, Result, TaskId};

const FORMAT: &str = "maucl-jsonl";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    d: usize,
    #[serde(rename = "K")]
    num_classes: usize,
    class_ids: Vec<ClassId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tasks: Option<Vec<TaskHeader>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TaskHeader {
    id: TaskId,
    classes: Vec<ClassId>,
    len: usize,
}

/// Contents of a dataset file.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetFile {
    Dataset(MultiLabelDataset),
    Tasks(TaskSequence),
}

fn write_lines(path: &Path, header: &Header, examples: &[&Example]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |line: String| writeln!(w, "{line}").map_err(|e| Error::io(path, e));
    put(serde_json::to_string(header)?)?;
    for ex in examples {
        put(serde_json::to_string(ex)?)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_dataset(ds: &MultiLabelDataset, path: impl AsRef<Path>) -> Result<()> {
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        d: ds.dim(),
        num_classes: ds.num_classes(),
        class_ids: ds.class_ids().to_vec(),
        tasks: None,
    };
    let refs: Vec<&Example> = ds.examples().iter().collect();
    write_lines(path.as_ref(), &header, &refs)
}

pub fn save_tasks(seq: &TaskSequence, path: impl AsRef<Path>) -> Result<()> {
    let mut class_ids: Vec<ClassId> = seq.tasks.iter().flat_map(|t| t.classes().to_vec()).collect();
    class_ids.sort_unstable();
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        d: seq.dim(),
        num_classes: seq.num_classes,
        class_ids,
        tasks: Some(
            seq.tasks
                .iter()
                .map(|t| TaskHeader {
                    id: t.id,
                    classes: t.classes().to_vec(),
                    len: t.data.len(),
                })
                .collect(),
        ),
    };
    let refs: Vec<&Example> = seq.tasks.iter().flat_map(|t| t.data.examples()).collect();
    write_lines(path.as_ref(), &header, &refs)
}

/// Loads either kind of dataset file.
pub fn load(path: impl AsRef<Path>) -> Result<DatasetFile> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();

    let first = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    let header: Header = serde_json::from_str(&first).map_err(|e| Error::Parse {
        line: 1,
        message: format!("bad header: {e}"),
    })?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "unsupported format {:?} version {}",
                header.format, header.version
            ),
        });
    }

    let mut examples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: Example = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        validate_example(&ex, header.d, header.num_classes, examples.len()).map_err(|e| {
            match e {
                Error::Structure { record, message } => Error::Structure {
                    record,
                    message: format!("line {line_no}: {message}"),
                },
                other => other,
            }
        })?;
        examples.push(ex);
    }

    match header.tasks {
        None => Ok(DatasetFile::Dataset(MultiLabelDataset::new(
            header.d,
            header.num_classes,
            header.class_ids,
            examples,
        )?)),
        Some(task_headers) => {
            let total: usize = task_headers.iter().map(|t| t.len).sum();
            if total != examples.len() {
                return Err(Error::Structure {
                    record: examples.len(),
                    message: format!(
                        "header announces {total} task examples, file has {}",
                        examples.len()
                    ),
                });
            }
            let mut rest = examples.into_iter();
            let mut tasks = Vec::with_capacity(task_headers.len());
            for th in task_headers {
                let chunk: Vec<Example> = rest.by_ref().take(th.len).collect();
                let data = MultiLabelDataset::new(header.d, header.num_classes, th.classes, chunk)?;
                tasks.push(Task { id: th.id, data });
            }
            Ok(DatasetFile::Tasks(TaskSequence {
                tasks,
                num_classes: header.num_classes,
            }))
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<MultiLabelDataset> {
    match load(path)? {
        DatasetFile::Dataset(ds) => Ok(ds),
        DatasetFile::Tasks(_) => Err(Error::InvalidConfig(
            "file holds a task sequence, expected a dataset".into(),
        )),
    }
}

pub fn load_tasks(path: impl AsRef<Path>) -> Result<TaskSequence> {
    match load(path)? {
        DatasetFile::Tasks(seq) => Ok(seq),
        DatasetFile::Dataset(_) => Err(Error::InvalidConfig(
            "file holds a plain dataset, expected a task sequence".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, split_tasks, GeneratorConfig, ImbalanceProfile, SplitConfig};

    fn gen() -> MultiLabelDataset {
        generate_synthetic(&GeneratorConfig {
            dim: 3,
            num_classes: 4,
            num_tasks: 2,
            n_per_task: 60,
            imbalance_profile: ImbalanceProfile::Rates(vec![0.1, 0.2, 0.3, 0.4]),
            label_correlation: 0.5,
            seed: 3,
            prototype_scale: 3.0,
            noise: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        let ds = MultiLabelDataset::new(3, 2, vec![0, 1], vec![]).unwrap();
        save_dataset(&ds, &p).unwrap();
        assert_eq!(load_dataset(&p).unwrap(), ds);
    }

    #[test]
    fn generated_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.jsonl");
        let ds = gen();
        save_dataset(&ds, &p).unwrap();
        assert_eq!(load_dataset(&p).unwrap(), ds);

        let seq = split_tasks(
            &ds,
            &SplitConfig {
                num_tasks: 2,
                seed: 1,
                negative_padding: Default::default(),
            },
        )
        .unwrap();
        let q = dir.path().join("t.jsonl");
        save_tasks(&seq, &q).unwrap();
        assert_eq!(load_tasks(&q).unwrap(), seq);
    }

    #[test]
    fn wrong_label_length_names_record() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        let header = r#"{"format":"maucl-jsonl","version":1,"d":2,"K":2,"class_ids":[0,1]}"#;
        let body = "{\"x\":[1.0,2.0],\"y\":[0,1]}\n{\"x\":[1.0,2.0],\"y\":[0,1,1]}\n";
        std::fs::write(&p, format!("{header}\n{body}")).unwrap();
        match load(&p).unwrap_err() {
            Error::Structure { record, message } => {
                assert_eq!(record, 1);
                assert!(message.contains("line 3"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn malformed_line_names_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        let header = r#"{"format":"maucl-jsonl","version":1,"d":1,"K":1,"class_ids":[0]}"#;
        std::fs::write(&p, format!("{header}\n{{\"x\":[1.0],\"y\":[0]}}\n{{oops\n")).unwrap();
        assert!(matches!(load(&p).unwrap_err(), Error::Parse { line: 3, .. }));
    }
}
