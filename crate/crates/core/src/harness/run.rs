use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::config::{DatasetSource, ExperimentConfig};
use crate::dataset::{generate_synthetic, load, split_tasks, train_test_split, DatasetFile, MultiLabelDataset, TaskSequence};
use crate::error::StageExt;
use crate::eval::{evaluate, forgetting, ForgettingConvention, RunRecord};
use crate::memory::MemoryBuffer;
use crate::model::{train_task, FeatureMap, FeatureMapConfig, Scorer, TrainLog};
use crate::rng::{self, derive_seed};
use crate::{Error, Result};

/// Output of one (config, seed) run.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub record: RunRecord,
    pub train_logs: Vec<TrainLog>,
    /// Contents of `metrics.csv`.
    pub metrics_csv: String,
    /// Contents of `log.txt`.
    pub log: String,
    /// Contents of `config.json`: the resolved config restricted to this seed.
    pub snapshot: String,
}

impl SeedRun {
    pub fn final_overall(&self) -> f64 {
        self.record.final_overall()
    }

    /// Final mean forgetting, `None` for single-task runs.
    pub fn final_forgetting(&self, convention: ForgettingConvention) -> Option<f64> {
        let t = self.record.num_tasks();
        (t >= 2).then(|| forgetting(&self.record, t, convention).map(|f| f.mean).ok()).flatten()
    }

    /// Writes `config.json`, `metrics.csv` and `log.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("config.json", &self.snapshot),
            ("metrics.csv", &self.metrics_csv),
            ("log.txt", &self.log),
        ] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Builds the task sequence of a run.
pub fn prepare_tasks(cfg: &ExperimentConfig, seed: u64) -> Result<TaskSequence> {
    let mut split = cfg.split.clone();
    split.seed = derive_seed(split.seed, &[seed]);
    let ds = match &cfg.dataset {
        DatasetSource::Generate(g) => {
            let mut g = g.clone();
            g.seed = derive_seed(g.seed, &[seed]);
            generate_synthetic(&g).stage("dataset")?
        }
        DatasetSource::File(path) => match load(path).stage("dataset")? {
            DatasetFile::Dataset(ds) => ds,
            DatasetFile::Tasks(seq) => {
                seq.validate().stage("dataset")?;
                return Ok(seq);
            }
        },
    };
    split_tasks(&ds, &split).stage("split")
}

fn csv_f(v: f64) -> String {
    format!("{v:.6}")
}

/// `checkpoint,task,macro_auc,overall,forgetting_mean`, one row per evaluated
/// (checkpoint, task) pair and a closing `final` row. Forgetting is blank
/// before the second checkpoint.
pub fn metrics_csv(record: &RunRecord, convention: ForgettingConvention) -> String {
    let mut out = String::from("checkpoint,task,macro_auc,overall,forgetting_mean\n");
    let overall = record.overall();
    let forget: Vec<String> = (1..=record.num_tasks())
        .map(|t| match forgetting(record, t, convention) {
            Ok(f) => csv_f(f.mean),
            Err(_) => String::new(),
        })
        .collect();
    for (l, row) in record.auc.iter().enumerate() {
        for (j, &a) in row.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                l + 1,
                j + 1,
                csv_f(a),
                csv_f(overall[l]),
                forget[l]
            );
        }
    }
    if let Some(l) = overall.len().checked_sub(1) {
        let _ = writeln!(out, "final,,,{},{}", csv_f(overall[l]), forget[l]);
    }
    out
}

fn map_features(map: &FeatureMap, data: &MultiLabelDataset) -> Result<MultiLabelDataset> {
    match map {
        FeatureMap::Identity => Ok(data.clone()),
        _ => data.map_features(|x| map.apply(x)),
    }
}

/// Algorithm: for each task, train (plain batch learning on the first task,
/// replay afterwards), update the memory, then evaluate Macro-AUC on the
/// held-out split of every task seen so far.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    cfg.validate().stage("config")?;
    let seq = prepare_tasks(cfg, seed)?;

    let mut train = Vec::with_capacity(seq.tasks.len());
    let mut test = Vec::with_capacity(seq.tasks.len());
    for task in &seq.tasks {
        let (tr, te) = train_test_split(&task.data, cfg.test_fraction, derive_seed(seed, &[task.id as u64]))
            .stage("holdout")?;
        train.push(tr);
        test.push(te);
    }

    let fm_cfg = match cfg.model.feature_map.clone() {
        FeatureMapConfig::RandomFourier { dim, gamma, seed: s } => FeatureMapConfig::RandomFourier {
            dim,
            gamma,
            seed: derive_seed(s, &[seed]),
        },
        other => other,
    };
    let input_dim = seq.dim();
    let fmap = FeatureMap::build(&fm_cfg, input_dim).stage("features")?;
    let train: Vec<MultiLabelDataset> = train.iter().map(|d| map_features(&fmap, d)).collect::<Result<_>>().stage("features")?;
    let test: Vec<MultiLabelDataset> = test.iter().map(|d| map_features(&fmap, d)).collect::<Result<_>>().stage("features")?;

    let mut sgd = cfg.model.sgd.clone();
    sgd.seed = derive_seed(sgd.seed, &[seed]);
    let mut scorer = Scorer::zeros(seq.num_classes, fmap.output_dim(input_dim), cfg.model.norm_cap);
    let mut memory = match cfg.memory.memory_size {
        0 => None,
        m => Some(MemoryBuffer::new(m).stage("memory")?),
    };
    let policy = cfg.memory.update_policy();

    let mut record = RunRecord::default();
    let mut logs = Vec::with_capacity(seq.tasks.len());
    let mut text = String::new();
    for (i, task) in seq.tasks.iter().enumerate() {
        let log = train_task(&mut scorer, task.id, &train[i], memory.as_ref(), &cfg.loss, &sgd).stage("train")?;
        if !log.excluded_classes.is_empty() {
            let _ = writeln!(text, "task={} excluded_classes={:?}", task.id, log.excluded_classes);
        }
        for e in &log.epochs {
            let _ = write!(text, "task={} epoch={} risk={}", task.id, e.epoch + 1, csv_f(e.risk));
            if let Some(m) = e.memory_risk {
                let _ = write!(text, " memory_risk={}", csv_f(m));
            }
            text.push('\n');
        }
        if log.degenerate_batches > 0 {
            let _ = writeln!(text, "task={} degenerate_batches={}", task.id, log.degenerate_batches);
        }
        logs.push(log);

        if let Some(mem) = memory.as_mut() {
            let mut r = rng::stream(seed, &[rng::MEMORY_UPDATE, task.id as u64]);
            mem.update(policy, task.id, &train[i], &mut r).stage("memory")?;
            let _ = writeln!(text, "task={} memory_size={}", task.id, mem.len());
        }

        let mut row = Vec::with_capacity(i + 1);
        for (j, te) in test.iter().enumerate().take(i + 1) {
            let rep = evaluate(&scorer, te, cfg.eval.ties).stage("eval")?;
            let a = rep
                .macro_auc
                .ok_or(Error::Empty("evaluable class set of a test split"))
                .stage("eval")?;
            if !rep.skipped.is_empty() {
                let _ = writeln!(text, "checkpoint={} task={} skipped_classes={:?}", i + 1, j + 1, rep.skipped);
            }
            row.push(a);
        }
        record.push_checkpoint(row);
        let _ = writeln!(text, "checkpoint={} overall={}", i + 1, csv_f(record.final_overall()));
    }

    Ok(SeedRun {
        seed,
        metrics_csv: metrics_csv(&record, cfg.eval.forgetting),
        log: text,
        snapshot: cfg.for_seed(seed).to_json()?,
        record,
        train_logs: logs,
    })
}

/// Runs every seed of `cfg`, in parallel when asked. Results keep seed order.
pub fn run_seeds(cfg: &ExperimentConfig, parallel: bool) -> Result<Vec<SeedRun>> {
    cfg.validate().stage("config")?;
    if parallel {
        cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect()
    } else {
        cfg.seeds.iter().map(|&s| run_seed(cfg, s)).collect()
    }
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sd, n }
    }
}

/// `seed,overall,forgetting_mean` per seed followed by `mean` and `sd` rows.
pub fn summary_csv(runs: &[SeedRun], convention: ForgettingConvention) -> String {
    let mut out = String::from("seed,overall,forgetting_mean\n");
    let overall: Vec<f64> = runs.iter().map(SeedRun::final_overall).collect();
    let forget: Vec<Option<f64>> = runs.iter().map(|r| r.final_forgetting(convention)).collect();
    let opt = |v: Option<f64>| v.map(csv_f).unwrap_or_default();
    for (r, f) in runs.iter().zip(&forget) {
        let _ = writeln!(out, "{},{},{}", r.seed, csv_f(r.final_overall()), opt(*f));
    }
    let o = Aggregate::of(&overall);
    let fs: Option<Vec<f64>> = forget.into_iter().collect();
    let fa = fs.map(|v| Aggregate::of(&v));
    let _ = writeln!(out, "mean,{},{}", csv_f(o.mean), opt(fa.map(|a| a.mean)));
    let _ = writeln!(out, "sd,{},{}", csv_f(o.sd), opt(fa.map(|a| a.sd)));
    out
}

/// Runs all seeds and, when `out` is given, writes `seed-<s>/` directories and
/// `summary.csv` under it.
pub fn run(cfg: &ExperimentConfig, out: Option<&Path>, parallel: bool) -> Result<Vec<SeedRun>> {
    let runs = run_seeds(cfg, parallel)?;
    if let Some(dir) = out {
        for r in &runs {
            r.write_to(&dir.join(format!("seed-{}", r.seed))).stage("output")?;
        }
        let p = dir.join("summary.csv");
        fs::write(&p, summary_csv(&runs, cfg.eval.forgetting))
            .map_err(|e| Error::io(&p, e))
            .stage("output")?;
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_csv_layout() {
        let rec = RunRecord {
            auc: vec![vec![0.9], vec![0.8, 0.6]],
        };
        let csv = metrics_csv(&rec, ForgettingConvention::RunningMax);
        assert_eq!(
            csv,
            "checkpoint,task,macro_auc,overall,forgetting_mean\n\
             1,1,0.900000,0.900000,\n\
             2,1,0.800000,0.700000,0.100000\n\
             2,2,0.600000,0.700000,0.100000\n\
             final,,,0.700000,0.100000\n"
        );
    }

    #[test]
    fn aggregate_uses_sample_sd() {
        let a = Aggregate::of(&[1.0, 2.0, 3.0]);
        assert_eq!(a.mean, 2.0);
        assert_eq!(a.sd, 1.0);
        assert_eq!(Aggregate::of(&[4.0]).sd, 0.0);
    }
}
