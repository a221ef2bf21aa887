use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use maucl::dataset::{generate_synthetic, save_dataset, save_tasks, split_tasks, GeneratorConfig, SplitConfig};
use maucl::harness::{
    ablate, ablation_csv, report, run, summary_csv, sweep, sweep_csv, write_plots, AblationCombo,
    ExperimentConfig, SweepParam,
};
use maucl::Error;

#[derive(Parser)]
#[command(name = "maucl", version, about = "Macro-AUC oriented continual multi-label learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (a generator config JSON) and optionally split it.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Split config JSON; writes `tasks.jsonl` next to `data.jsonl`.
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Run every seed of an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run seeds one after another.
        #[arg(long)]
        serial: bool,
    },
    /// Run the six-row ablation grid.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep `memory_size` or `lambda`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Summarize a run directory.
    Report {
        /// Run directory (containing metrics.csv).
        dir: PathBuf,
        /// Also write auc.svg and risk.svg into the directory.
        #[arg(long)]
        plot: bool,
    },
}

fn stage<T>(name: &'static str, r: maucl::Result<T>) -> Result<T, String> {
    r.map_err(|e| match e {
        Error::Stage { .. } => e.to_string(),
        e => format!("{name} failed: {e}"),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> maucl::Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn write(path: PathBuf, body: &str) -> maucl::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.into(),
            source: e,
        })?;
    }
    fs::write(&path, body).map_err(|e| Error::Io { path, source: e })
}

fn execute(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Generate { config, out, split } => {
            let g: GeneratorConfig = stage("config", read_json(&config))?;
            stage("config", g.validate())?;
            let ds = stage("generate", generate_synthetic(&g))?;
            stage("output", fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e }))?;
            stage("output", save_dataset(&ds, out.join("data.jsonl")))?;
            println!("wrote {} examples to {}", ds.len(), out.join("data.jsonl").display());
            if let Some(p) = split {
                let s: SplitConfig = stage("config", read_json(&p))?;
                let seq = stage("split", split_tasks(&ds, &s))?;
                stage("output", save_tasks(&seq, out.join("tasks.jsonl")))?;
                println!("wrote {} tasks to {}", seq.tasks.len(), out.join("tasks.jsonl").display());
            }
        }
        Command::Run { config, out, serial } => {
            let cfg = stage("config", ExperimentConfig::load(&config))?;
            let runs = stage("run", run(&cfg, Some(&out), !serial))?;
            print!("{}", summary_csv(&runs, cfg.eval.forgetting));
        }
        Command::Ablate { config, out } => {
            let cfg = stage("config", ExperimentConfig::load(&config))?;
            let rows = stage("ablate", ablate(&cfg, &AblationCombo::grid(), true))?;
            let csv = ablation_csv(&rows);
            stage("output", write(out.join("ablation.csv"), &csv))?;
            print!("{csv}");
        }
        Command::Sweep {
            config,
            out,
            param,
            values,
        } => {
            let cfg = stage("config", ExperimentConfig::load(&config))?;
            let rows = stage("sweep", sweep(&cfg, param, &values, true))?;
            let csv = sweep_csv(param, &rows);
            stage("output", write(out.join(format!("sweep_{}.csv", param.name())), &csv))?;
            print!("{csv}");
        }
        Command::Report { dir, plot } => {
            print!("{}", stage("report", report(&dir))?);
            if plot {
                for f in stage("report", write_plots(&dir))? {
                    println!("wrote {}", dir.join(f).display());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
