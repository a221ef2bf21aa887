use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{run_seed, Aggregate};
use crate::error::StageExt;
use crate::loss::LossKind;
use crate::memory::PolicyKind;
use crate::{Error, Result};

/// One row of the ablation grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AblationCombo {
    pub reweighting: bool,
    pub margin: bool,
    pub wru: bool,
}

impl AblationCombo {
    pub const fn new(reweighting: bool, margin: bool, wru: bool) -> Self {
        Self {
            reweighting,
            margin,
            wru,
        }
    }

    /// The six valid combinations, from plain ER with BCE to the full method.
    /// WRU without reweighting is excluded: the retained counts only enter
    /// through reweighting.
    pub fn grid() -> Vec<Self> {
        vec![
            Self::new(false, false, false),
            Self::new(true, false, false),
            Self::new(true, false, true),
            Self::new(false, true, false),
            Self::new(true, true, false),
            Self::new(true, true, true),
        ]
    }

    pub fn is_valid(&self) -> bool {
        self.reweighting || !self.wru
    }

    pub fn loss(&self) -> LossKind {
        match (self.reweighting, self.margin) {
            (false, false) => LossKind::Bce,
            (true, false) => LossKind::Ru,
            (false, true) => LossKind::Margin,
            (true, true) => LossKind::Rldam,
        }
    }

    pub fn policy(&self) -> PolicyKind {
        if self.wru {
            PolicyKind::Wru
        } else {
            PolicyKind::Random
        }
    }

    /// `cfg` with this combination's loss and memory policy.
    pub fn apply(&self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut c = cfg.clone();
        c.loss.loss = self.loss();
        c.memory.policy = self.policy();
        c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub combo: AblationCombo,
    pub overall: Aggregate,
    /// Final overall Macro-AUC per seed, in seed order.
    pub per_seed: Vec<f64>,
}

fn mark(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn kind_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Final overall Macro-AUC for every (config, seed) pair; output order
/// follows the input order.
fn final_overall_all(jobs: &[(ExperimentConfig, u64)], parallel: bool) -> Result<Vec<f64>> {
    let one = |(c, s): &(ExperimentConfig, u64)| run_seed(c, *s).map(|r| r.final_overall());
    if parallel {
        jobs.par_iter().map(one).collect()
    } else {
        jobs.iter().map(one).collect()
    }
}

/// One run per (combo, seed). Needs at least two seeds.
pub fn ablate(
    cfg: &ExperimentConfig,
    combos: &[AblationCombo],
    parallel: bool,
) -> Result<Vec<AblationRow>> {
    cfg.validate().stage("config")?;
    if cfg.seeds.len() < 2 {
        return Err(Error::InvalidConfig("ablation needs at least two seeds".into())).stage("config");
    }
    if let Some(c) = combos.iter().find(|c| !c.is_valid()) {
        return Err(Error::InvalidConfig(format!("invalid ablation combination {c:?}"))).stage("config");
    }
    let jobs: Vec<(ExperimentConfig, u64)> = combos
        .iter()
        .flat_map(|c| {
            let cc = c.apply(cfg);
            cfg.seeds.iter().map(move |&s| (cc.clone(), s))
        })
        .collect();
    let values = final_overall_all(&jobs, parallel)?;
    Ok(combos
        .iter()
        .zip(values.chunks(cfg.seeds.len()))
        .map(|(&combo, v)| AblationRow {
            combo,
            overall: Aggregate::of(v),
            per_seed: v.to_vec(),
        })
        .collect())
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("reweighting,margin,wru,loss,policy,mean,sd,n\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.6},{:.6},{}",
            mark(r.combo.reweighting),
            mark(r.combo.margin),
            mark(r.combo.wru),
            kind_name(&r.combo.loss()),
            kind_name(&r.combo.policy()),
            r.overall.mean,
            r.overall.sd,
            r.overall.n
        );
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    MemorySize,
    Lambda,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "memory_size" => Ok(SweepParam::MemorySize),
            "lambda" => Ok(SweepParam::Lambda),
            _ => Err(Error::InvalidConfig(format!(
                "unknown sweep parameter {s:?} (expected memory_size or lambda)"
            ))),
        }
    }
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::MemorySize => "memory_size",
            SweepParam::Lambda => "lambda",
        }
    }

    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = cfg.clone();
        match self {
            SweepParam::MemorySize => {
                if !(value >= 0.0 && value.fract() == 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "memory_size {value} is not a nonnegative integer"
                    )));
                }
                c.memory.memory_size = value as usize;
            }
            SweepParam::Lambda => c.loss.lambda = value,
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub overall: Aggregate,
    pub per_seed: Vec<f64>,
}

/// One aggregated row per value of `param`.
pub fn sweep(
    cfg: &ExperimentConfig,
    param: SweepParam,
    values: &[f64],
    parallel: bool,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one value".into())).stage("config");
    }
    let cfgs: Vec<ExperimentConfig> = values
        .iter()
        .map(|&v| param.apply(cfg, v))
        .collect::<Result<_>>()
        .stage("config")?;
    let jobs: Vec<(ExperimentConfig, u64)> = cfgs
        .iter()
        .flat_map(|c| cfg.seeds.iter().map(move |&s| (c.clone(), s)))
        .collect();
    let all = final_overall_all(&jobs, parallel)?;
    Ok(values
        .iter()
        .zip(all.chunks(cfg.seeds.len()))
        .map(|(&value, v)| SweepRow {
            value,
            overall: Aggregate::of(v),
            per_seed: v.to_vec(),
        })
        .collect())
}

pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> String {
    let mut out = format!("{},mean,sd,n\n", param.name());
    for r in rows {
        let _ = writeln!(out, "{},{:.6},{:.6},{}", r.value, r.overall.mean, r.overall.sd, r.overall.n);
    }
    out
}

pub(crate) fn write_file(dir: &Path, name: &str, body: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join(name);
    fs::write(&p, body).map_err(|e| Error::io(&p, e))
}
