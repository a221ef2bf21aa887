//! Experiment runner: configs, continual runs over a task sequence, ablation
//! grids, parameter sweeps and reports.
//!
//! A run directory holds `config.json` (the resolved config for one seed,
//! enough to reproduce the run), `metrics.csv` and `log.txt`.

mod config;
mod grid;
mod report;
mod run;

pub use config::{DatasetSource, EvalConfig, ExperimentConfig, MemoryConfig, ModelConfig};
pub use grid::{ablate, ablation_csv, sweep, sweep_csv, AblationCombo, AblationRow, SweepParam, SweepRow};
pub use report::{read_metrics, report, write_plots, RunMetrics};
pub use run::{metrics_csv, prepare_tasks, run, run_seed, run_seeds, summary_csv, Aggregate, SeedRun};
